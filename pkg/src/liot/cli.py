"""Operator entry point: check, run, simulate, and script subcommands.

Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .clock import VirtualClock
from .config import RunConfig, apply_config_pairs, read_config_file
from .engine import Engine, ExternalInsert, export_firing_log
from .errors import ConfigError, LiotError, SourceError
from .gateway import GatewayServer, OutboundClient, build_outbound
from .parser import parse_program
from .runtime import EngineRuntime
from .values import Value, parse_query_value, value_to_param


def _diag(filename: str, exc: SourceError) -> None:
    print(exc.render(filename), file=sys.stderr)


def cmd_check(path: str) -> int:
    try:
        source = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return 1
    try:
        parse_program(source)
    except SourceError as exc:
        _diag(path, exc)
        return 1
    return 0


# -- run ------------------------------------------------------------------------


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if args.config:
        apply_config_pairs(config, read_config_file(args.config))
    if args.port is not None:
        config.port = args.port
    if args.host is not None:
        config.host = args.host
    if args.log is not None:
        config.log_path = args.log
    if args.window is not None:
        config.window_default = args.window
    if args.cascade is not None:
        config.cascade_limit = args.cascade
    config.validate()
    return config


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _build_run_config(args)
        source = Path(args.file).read_text(encoding="utf-8")
        program = parse_program(source)
    except SourceError as exc:
        _diag(args.file, exc)
        return 1
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    outbound = build_outbound(config)
    engine = Engine(program, config=config, outbound=outbound)
    runtime = EngineRuntime(engine)
    try:
        server = GatewayServer(runtime, host=config.host, port=config.port)
    except OSError as exc:
        print(f"error: cannot listen on {config.host}:{config.port}: {exc}", file=sys.stderr)
        return 1
    if config.base_url is None:
        config.base_url = server.base_url

    try:
        runtime.start()  # loads the program (replaying any persistence log)
    except LiotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        server.stop()
        return 1
    server.start()
    print(f"listening on {server.base_url}", file=sys.stderr)
    try:
        while True:
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        runtime.shutdown()
        outbound.delivery.close()
    return 0


# -- simulate -----------------------------------------------------------------------


@dataclass
class FieldGen:
    field: str
    kind: str  # "constant" | "uniform" | "choice"
    constant: Value = None
    low: float = 0.0
    high: float = 0.0
    options: tuple[Value, ...] = ()

    def draw(self, rng: random.Random) -> Value:
        if self.kind == "constant":
            return self.constant
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high)
        return self.options[rng.randrange(len(self.options))]


def parse_gen_spec(text: str) -> FieldGen:
    """``FIELD=constant:V`` | ``FIELD=uniform:MIN:MAX`` | ``FIELD=choice:a,b,c``."""
    if "=" not in text:
        raise ConfigError(f"--gen needs FIELD=SPEC, got {text!r}")
    field, spec = text.split("=", 1)
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        return FieldGen(field, "constant", constant=parse_query_value(rest))
    if kind == "uniform":
        bounds = rest.split(":")
        if len(bounds) != 2:
            raise ConfigError(f"uniform needs MIN:MAX, got {rest!r}")
        try:
            low, high = float(bounds[0]), float(bounds[1])
        except ValueError:
            raise ConfigError(f"uniform bounds must be numbers, got {rest!r}") from None
        return FieldGen(field, "uniform", low=low, high=high)
    if kind == "choice":
        options = tuple(parse_query_value(part) for part in rest.split(","))
        if not options:
            raise ConfigError("choice needs at least one option")
        return FieldGen(field, "choice", options=options)
    raise ConfigError(f"unknown generator {kind!r}")


@dataclass
class SimProfile:
    target: str
    relation: str | None
    endpoint: str | None
    count: int
    period_ms: int
    gens: list[FieldGen]
    seed: int

    def url(self) -> str:
        base = self.target.rstrip("/")
        if self.relation is not None:
            return f"{base}/rel/{self.relation}/insert"
        return f"{base}/endpoint/{self.endpoint}"


def generate_requests(profile: SimProfile) -> list[list[tuple[str, str]]]:
    """The full deterministic parameter sequence for a profile.

    One RNG seeded once; each request draws its fields in --gen order, so the
    value stream is reproducible from the seed alone.
    """
    rng = random.Random(profile.seed)
    requests = []
    for _ in range(profile.count):
        params = [(g.field, value_to_param(g.draw(rng))) for g in profile.gens]
        requests.append(params)
    return requests


def run_simulation(profile: SimProfile, client: OutboundClient | None = None,
                   timeout_ms: int = 5000) -> tuple[int, int, int]:
    client = client or OutboundClient()
    url = profile.url()
    sent = ok = err = 0
    for params in generate_requests(profile):
        sent += 1
        try:
            status, _ = client.get(url, params, timeout_ms)
            if 200 <= status < 300:
                ok += 1
            else:
                err += 1
        except (TimeoutError, OSError):
            err += 1
        if profile.period_ms > 0 and sent < profile.count:
            time.sleep(profile.period_ms / 1000.0)
    return sent, ok, err


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        gens = [parse_gen_spec(g) for g in args.gen]
        profile = SimProfile(
            target=args.target,
            relation=args.relation,
            endpoint=args.endpoint,
            count=args.count,
            period_ms=args.period,
            gens=gens,
            seed=args.seed,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sent, ok, err = run_simulation(profile)
    print(f"sent={sent} ok={ok} err={err}")
    return 0 if err == 0 else 1


# -- script ----------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptAction:
    at: int
    insert: tuple[str, tuple[Value, ...]] | None = None
    advance: int | None = None


def load_script(path: str | Path) -> list[ScriptAction]:
    """JSON Lines of ``{"at": MS, "insert": {"rel": R, "v": [...]}}`` or
    ``{"at": MS, "advance": MS}``; ``at`` must be non-decreasing."""
    actions: list[ScriptAction] = []
    last_at = 0
    for line_number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{line_number}: invalid JSON: {exc}") from None
        if not isinstance(entry, dict) or "at" not in entry:
            raise ConfigError(f"{path}:{line_number}: action needs an \"at\" time")
        at = entry["at"]
        if not isinstance(at, int) or at < last_at:
            raise ConfigError(f"{path}:{line_number}: \"at\" must be a non-decreasing integer")
        last_at = at
        if "insert" in entry:
            spec = entry["insert"]
            if not isinstance(spec, dict) or "rel" not in spec or "v" not in spec:
                raise ConfigError(f"{path}:{line_number}: insert needs \"rel\" and \"v\"")
            actions.append(ScriptAction(at=at, insert=(spec["rel"], tuple(spec["v"]))))
        elif "advance" in entry:
            delta = entry["advance"]
            if not isinstance(delta, int) or delta < 0:
                raise ConfigError(f"{path}:{line_number}: advance must be a non-negative integer")
            actions.append(ScriptAction(at=at, advance=delta))
        else:
            raise ConfigError(f"{path}:{line_number}: action needs \"insert\" or \"advance\"")
    return actions


def run_script(program, actions: list[ScriptAction], config: RunConfig) -> Engine:
    """Deterministic run under the virtual clock; returns the finished engine."""
    config.inline_async = True
    outbound = build_outbound(config)
    engine = Engine(program, config=config, clock=VirtualClock(0), outbound=outbound)
    engine.load()
    for action in actions:
        engine.advance_to(action.at)
        if action.insert is not None:
            relation, values = action.insert
            engine.process_event(ExternalInsert(relation, values))
        elif action.advance is not None:
            engine.advance_to(action.at + action.advance)
    engine.close()
    return engine


def cmd_script(args: argparse.Namespace) -> int:
    try:
        source = Path(args.file).read_text(encoding="utf-8")
        program = parse_program(source)
        actions = load_script(args.script)
        config = RunConfig()
        if args.log is not None:
            config.log_path = args.log
        if args.window is not None:
            config.window_default = args.window
        if args.cascade is not None:
            config.cascade_limit = args.cascade
        config.validate()
    except SourceError as exc:
        _diag(args.file, exc)
        return 1
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        engine = run_script(program, actions, config)
    except LiotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(export_firing_log(engine.firing_log))
    return 0


# -- argparse ----------------------------------------------------------------


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liot", description="liot language runtime")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="parse and validate a program")
    p_check.add_argument("file")

    p_run = sub.add_parser("run", help="serve a program over HTTP")
    p_run.add_argument("file")
    p_run.add_argument("--config", help="flat key=value config file")
    p_run.add_argument("--host")
    p_run.add_argument("--port", type=int)
    p_run.add_argument("--log", help="persistence log path (JSON Lines)")
    p_run.add_argument("--window", type=int, help="default window size")
    p_run.add_argument("--cascade", type=int, help="max insert cascade depth")

    p_sim = sub.add_parser("simulate", help="send synthetic sensor readings")
    p_sim.add_argument("--target", required=True, help="base URL of a running engine")
    group = p_sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--relation", help="insert into this relation")
    group.add_argument("--endpoint", help="call this endpoint")
    p_sim.add_argument("--count", type=int, required=True)
    p_sim.add_argument("--period", type=int, default=0, help="milliseconds between requests")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--gen", action="append", default=[],
                       help="FIELD=constant:V | FIELD=uniform:MIN:MAX | FIELD=choice:a,b,c")

    p_script = sub.add_parser("script", help="run a timed script under the virtual clock")
    p_script.add_argument("file")
    p_script.add_argument("script")
    p_script.add_argument("--log", help="persistence log path")
    p_script.add_argument("--window", type=int)
    p_script.add_argument("--cascade", type=int)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    if args.command == "check":
        return cmd_check(args.file)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "simulate":
        return cmd_simulate(args)
    if args.command == "script":
        return cmd_script(args)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
