"""The serialized rule engine.

One engine owns all mutable state and processes events strictly in arrival
order, each to completion. An insert flows through: remote forward (for mapped
relations), store append, persistence, webhook, the relation's trigger body,
and finally every rule whose condition mentions the relation, in declaration
order. Statement-driven inserts nest; the cascade depth limit guarantees every
event terminates.

Rule matching uses an alpha-layer dependency index (relation name -> rules in
declaration order). ``naive_oracle`` runs the identical machinery but without
the index, re-evaluating every active rule after every insert; equality of the
two firing logs is the correctness contract for the index.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from typing import Iterable, Protocol
from urllib.parse import urljoin, urlsplit

from . import ast
from .clock import Clock, VirtualClock, WallClock
from .config import EngineConfig
from .errors import (
    ArityError,
    CascadeLimitError,
    EngineRuntimeError,
    ModuleCallError,
    UnknownNameError,
)
from .evaluator import Scope, eval_condition, eval_expr
from .store import PersistenceLog, Record, Store, replay_log
from .values import Value, dump_json, ensure_value, value_to_param

logger = logging.getLogger("liot.engine")


# -- events ---------------------------------------------------------------------


@dataclass(frozen=True)
class ExternalInsert:
    relation: str
    values: tuple[Value, ...]
    arrival_seq: int = 0


@dataclass(frozen=True)
class EndpointCall:
    name: str
    args: tuple[Value, ...]
    arrival_seq: int = 0


@dataclass(frozen=True)
class TimerTick:
    name: str
    arrival_seq: int = 0


@dataclass(frozen=True)
class Shutdown:
    arrival_seq: int = 0


Event = ExternalInsert | EndpointCall | TimerTick | Shutdown


@dataclass(frozen=True)
class Firing:
    seq: int
    kind: str  # "trigger" | "rule"
    name: str
    t: int

    def to_json_line(self) -> str:
        return dump_json({"seq": self.seq, "kind": self.kind, "name": self.name, "t": self.t})


def export_firing_log(firings: Iterable[Firing]) -> str:
    return "".join(f.to_json_line() + "\n" for f in firings)


@dataclass
class EventResult:
    firings: list[Firing]
    error: str | None = None


# -- engine-side state ------------------------------------------------------------


@dataclass
class RuleState:
    decl: ast.RuleDecl
    active: bool = True
    depends_on: frozenset[str] = frozenset()


@dataclass
class TimerState:
    decl: ast.TimerDecl
    order: int
    running: bool = True
    next_fire: int = 0


class CascadeContext:
    """Counts propagation nesting within one event.

    Statement-driven inserts and CHECKs both enter the cascade; either can
    recurse (a trigger re-inserting into its own relation, a rule body
    checking itself), and the depth limit is what guarantees every event
    terminates.
    """

    def __init__(self, limit: int):
        self.depth = 0
        self.limit = limit

    def enter(self, what: str) -> None:
        self.depth += 1
        if self.depth > self.limit:
            raise CascadeLimitError(
                f"{what} cascade exceeded depth {self.limit}; aborting event"
            )

    def exit(self) -> None:
        self.depth -= 1


class Outbound(Protocol):
    """What the engine needs from the HTTP side; the gateway implements it."""

    def get(self, url: str, params: list[tuple[str, str]], timeout_ms: int) -> tuple[int, bytes]: ...

    def submit_async(self, url: str, params: list[tuple[str, str]]) -> None: ...


class _NoOutbound:
    def get(self, url, params, timeout_ms):
        raise ModuleCallError("target", f"no outbound HTTP client configured for {url}")

    def submit_async(self, url, params):
        logger.warning("async GET dropped (no outbound client): %s", url)


def resolve_target(target: str, base_url: str | None) -> str:
    """Absolute targets pass through; relative ones need a base URL."""
    if urlsplit(target).scheme in ("http", "https"):
        return target
    if base_url is None:
        raise ModuleCallError(
            "target", f"relative target {target!r} needs a configured base_url"
        )
    return urljoin(base_url.rstrip("/") + "/", target)


# -- the engine -------------------------------------------------------------------


class Engine:
    def __init__(
        self,
        program: ast.Program,
        config: EngineConfig | None = None,
        clock: Clock | None = None,
        outbound: Outbound | None = None,
        rule_selection: str = "indexed",
    ):
        if rule_selection not in ("indexed", "all"):
            raise ValueError(f"bad rule_selection {rule_selection!r}")
        self.program = program
        self.config = config or EngineConfig()
        self.config.validate()
        self.clock: Clock = clock or WallClock()
        self.outbound: Outbound = outbound or _NoOutbound()
        self.rule_selection = rule_selection

        self.store = Store(
            program.relations,
            window_default=self.config.window_default,
            window_overrides=self.config.window_overrides,
        )
        self.rule_states: list[RuleState] = [
            RuleState(decl=r, depends_on=frozenset(ast.relations_mentioned(r.condition)))
            for r in program.rules
        ]
        self._rules_by_name = {rs.decl.name: rs for rs in self.rule_states}
        # alpha layer: relation -> rules mentioning it, declaration order.
        # A rule mentioning no relation at all is treated as depending on
        # every relation, which keeps it equivalent to the naive scan.
        self.dependency_index: dict[str, list[RuleState]] = {
            r.name: [] for r in program.relations
        }
        for rs in self.rule_states:
            targets = rs.depends_on or self.dependency_index.keys()
            for relation in targets:
                if relation in self.dependency_index:
                    self.dependency_index[relation].append(rs)

        self.timer_states: dict[str, TimerState] = {
            t.name: TimerState(decl=t, order=i) for i, t in enumerate(program.timers)
        }
        self.timer_lock = threading.RLock()

        self._endpoints_by_name = {e.name: e for e in program.endpoints}
        self._triggers_by_relation = {t.relation: t for t in program.triggers}
        self._relation_maps = {m.name: m for m in program.mappings if m.kind == "relation"}
        self._module_maps = {m.name: m for m in program.mappings if m.kind == "module"}

        self.firing_log: list[Firing] = []
        self.event_errors: list[str] = []
        self.condition_evaluations = 0
        self.persistence: PersistenceLog | None = None
        self.replayed_records = 0
        self.loaded = False

    # -- lifecycle ---------------------------------------------------------

    def load(self) -> None:
        """Replay persistence, start timers, run top-level statements once."""
        if self.loaded:
            raise RuntimeError("engine already loaded")
        self.loaded = True
        if self.config.log_path:
            path = self.config.log_path
            if os.path.exists(path) and os.path.getsize(path) > 0:
                self.replayed_records = replay_log(self.store, path)
            self.persistence = PersistenceLog(path)
        now = self.clock.now_ms()
        with self.timer_lock:
            for ts in self.timer_states.values():
                ts.running = True
                ts.next_fire = now + ts.decl.interval_ms
        # initialization statements are skipped when a previous run was
        # restored: replaying state and re-running the init would double it
        if self.replayed_records == 0 and self.program.top_level_statements:
            cascade = CascadeContext(self.config.cascade_limit)
            try:
                for stmt in self.program.top_level_statements:
                    self.execute_statement(stmt, {}, cascade)
            except EngineRuntimeError as exc:
                self._log_event_error(f"top-level statement failed: {exc}")

    def close(self) -> None:
        if self.persistence is not None:
            self.persistence.close()

    # -- event processing -----------------------------------------------------

    def process_event(self, event: Event) -> EventResult:
        if not self.loaded:
            raise RuntimeError("engine not loaded")
        start = len(self.firing_log)
        error: str | None = None
        cascade = CascadeContext(self.config.cascade_limit)
        try:
            if isinstance(event, ExternalInsert):
                self._do_insert(event.relation, list(event.values), cascade)
            elif isinstance(event, EndpointCall):
                self._run_endpoint(event)
            elif isinstance(event, TimerTick):
                self._run_timer(event.name, cascade)
            elif isinstance(event, Shutdown):
                pass
            else:
                raise AssertionError(f"unhandled event {event!r}")
        except EngineRuntimeError as exc:
            error = f"{type(exc).__name__}: {exc}"
            self._log_event_error(f"event {event!r} aborted: {error}")
        return EventResult(firings=self.firing_log[start:], error=error)

    def _log_event_error(self, message: str) -> None:
        self.event_errors.append(message)
        logger.error("%s", message)

    def _run_endpoint(self, event: EndpointCall) -> None:
        decl = self._endpoints_by_name.get(event.name)
        if decl is None:
            raise UnknownNameError(f"unknown endpoint {event.name}")
        if len(event.args) != len(decl.params):
            raise ArityError(
                f"endpoint {event.name} takes {len(decl.params)} parameters, "
                f"got {len(event.args)}"
            )
        scope: Scope = {p: ensure_value(v) for p, v in zip(decl.params, event.args)}
        self._run_block(decl.body, scope, CascadeContext(self.config.cascade_limit))

    def _run_timer(self, name: str, cascade: CascadeContext) -> None:
        ts = self.timer_states.get(name)
        if ts is None:
            raise UnknownNameError(f"unknown timer {name}")
        if not ts.running:
            return  # stale tick queued before a STOP was processed
        self._run_block(ts.decl.body, {}, cascade)

    def _run_block(self, body: ast.Block, scope: Scope, cascade: CascadeContext) -> None:
        for stmt in body:
            self.execute_statement(stmt, scope, cascade)

    # -- statements ---------------------------------------------------------

    def execute_statement(self, stmt: ast.Statement, scope: Scope, cascade: CascadeContext) -> None:
        if isinstance(stmt, ast.Insert):
            values = [eval_expr(a, self.store, scope) for a in stmt.args]
            cascade.enter("insert")
            try:
                self._do_insert(stmt.relation, values, cascade)
            finally:
                cascade.exit()
        elif isinstance(stmt, ast.StartTimer):
            with self.timer_lock:
                ts = self.timer_states[stmt.name]
                ts.running = True
                ts.next_fire = self.clock.now_ms() + ts.decl.interval_ms
        elif isinstance(stmt, ast.StopTimer):
            with self.timer_lock:
                self.timer_states[stmt.name].running = False
        elif isinstance(stmt, ast.Activate):
            self._rules_by_name[stmt.rule].active = True
        elif isinstance(stmt, ast.Deactivate):
            self._rules_by_name[stmt.rule].active = False
        elif isinstance(stmt, ast.Check):
            self._check_rule(stmt.rule, cascade)
        elif isinstance(stmt, ast.CallModule):
            self._call_module(stmt, scope)
        elif isinstance(stmt, ast.AcallModule):
            self._acall_module(stmt, scope)
        else:
            raise AssertionError(f"unhandled statement {stmt!r}")

    def _do_insert(self, relation: str, values: list[Value], cascade: CascadeContext) -> Record:
        mapping = self._relation_maps.get(relation)
        if mapping is not None:
            self._forward_insert(mapping, relation, values)
        t = self.clock.now_ms()
        record = self.store.insert(relation, values, t=t)
        if self.persistence is not None:
            self.persistence.append(relation, record)
        webhook = self.config.webhooks.get(relation)
        if webhook is not None:
            decl = self.store.window(relation).decl
            params = [("T", str(record.t))] + [
                (f, value_to_param(v)) for f, v in zip(decl.fields, record.values)
            ]
            self.outbound.submit_async(webhook, params)
        trigger = self._triggers_by_relation.get(relation)
        if trigger is not None:
            self.firing_log.append(Firing(record.seq, "trigger", relation, record.t))
            self._run_block(trigger.body, {}, cascade)
        if self.rule_selection == "indexed":
            for rs in self.dependency_index.get(relation, []):
                if not rs.active:
                    continue
                self.condition_evaluations += 1
                if eval_condition(rs.decl.condition, self.store, {}) is True:
                    self._fire_rule(rs, record.seq, record.t, cascade)
        else:
            # naive scan: every active rule is re-evaluated after every
            # insert, with no relation->rules index. A rule still only
            # *fires* for inserts into a relation its condition mentions;
            # evaluations of unrelated rules are advisory, so errors they
            # raise cannot abort the event either.
            for rs in self.rule_states:
                if not rs.active:
                    continue
                self.condition_evaluations += 1
                if not rs.depends_on or relation in rs.depends_on:
                    if eval_condition(rs.decl.condition, self.store, {}) is True:
                        self._fire_rule(rs, record.seq, record.t, cascade)
                else:
                    try:
                        eval_condition(rs.decl.condition, self.store, {})
                    except EngineRuntimeError:
                        pass
        return record

    def _fire_rule(self, rs: RuleState, seq: int, t: int, cascade: CascadeContext) -> None:
        self.firing_log.append(Firing(seq, "rule", rs.decl.name, t))
        self._run_block(rs.decl.body, {}, cascade)

    def _check_rule(self, name: str, cascade: CascadeContext) -> None:
        """CHECK is an explicit command: it ignores the active flag."""
        rs = self._rules_by_name[name]
        self.condition_evaluations += 1
        outcome = eval_condition(rs.decl.condition, self.store, {})
        if outcome is True:
            seq = self.store.next_seq - 1  # latest record overall, 0 if none
            self.firing_log.append(Firing(seq, "rule", name, self.clock.now_ms()))
            cascade.enter("check")
            try:
                self._run_block(rs.decl.body, {}, cascade)
            finally:
                cascade.exit()

    # -- outbound HTTP --------------------------------------------------------

    def _forward_insert(self, mapping: ast.MapDecl, relation: str, values: list[Value]) -> None:
        decl = self.store.window(relation).decl
        base = resolve_target(mapping.target, self.config.base_url)
        url = base.rstrip("/") + "/insert"
        params = [(f, value_to_param(ensure_value(v))) for f, v in zip(decl.fields, values)]
        try:
            status, _ = self.outbound.get(url, params, self.config.call_timeout_ms)
        except ModuleCallError:
            raise
        except TimeoutError as exc:
            raise ModuleCallError("timeout", f"forward to {url} timed out") from exc
        except OSError as exc:
            raise ModuleCallError("transport", f"forward to {url} failed: {exc}") from exc
        if not 200 <= status < 300:
            raise ModuleCallError(
                "http-status", f"forward to {url} returned {status}, record not applied"
            )

    def _call_module(self, stmt: ast.CallModule, scope: Scope) -> None:
        decl = self.program.module(stmt.name)
        assert decl is not None  # validated at parse time
        mapping = self._module_maps.get(stmt.name)
        if mapping is None:
            raise ModuleCallError("target", f"module {stmt.name} has no mapping")
        args = [eval_expr(a, self.store, scope) for a in stmt.args]
        url = resolve_target(mapping.target, self.config.base_url)
        params = [(f"p{i + 1}", value_to_param(v)) for i, v in enumerate(args)]
        outputs = invoke_module_sync(
            self.outbound,
            url,
            params,
            decl.outputs,
            timeout_ms=self.config.call_timeout_ms,
            body_limit=self.config.body_limit,
        )
        for name, value in outputs.items():
            scope[f"{stmt.name}.{name}"] = value

    def _acall_module(self, stmt: ast.AcallModule, scope: Scope) -> None:
        mapping = self._module_maps.get(stmt.name)
        if mapping is None:
            raise ModuleCallError("target", f"module {stmt.name} has no mapping")
        args = [eval_expr(a, self.store, scope) for a in stmt.args]
        url = resolve_target(mapping.target, self.config.base_url)
        params = [(f"p{i + 1}", value_to_param(v)) for i, v in enumerate(args)]
        self.outbound.submit_async(url, params)

    # -- timers under the virtual clock ------------------------------------------

    def advance_to(self, target_ms: int) -> None:
        """Drain every timer tick due up to target time, in timestamp order,
        ties broken by declaration order, then land the clock on the target."""
        clock = self.clock
        if not isinstance(clock, VirtualClock):
            raise RuntimeError("advance_to requires a virtual clock")
        if target_ms < clock.now_ms():
            raise ValueError("cannot advance backwards")
        while True:
            with self.timer_lock:
                due = [
                    (ts.next_fire, ts.order, ts.decl.name)
                    for ts in self.timer_states.values()
                    if ts.running and ts.next_fire <= target_ms
                ]
            if not due:
                break
            fire_at, _, name = min(due)
            clock.set_ms(max(fire_at, clock.now_ms()))
            with self.timer_lock:
                self.timer_states[name].next_fire = fire_at + self.timer_states[name].decl.interval_ms
            self.process_event(TimerTick(name))
        clock.set_ms(target_ms)

    def advance(self, delta_ms: int) -> None:
        self.advance_to(self.clock.now_ms() + delta_ms)


# -- module invocation (shared with the gateway's outbound client) ---------------


def invoke_module_sync(
    outbound: Outbound,
    url: str,
    params: list[tuple[str, str]],
    output_names: tuple[str, ...],
    timeout_ms: int,
    body_limit: int,
) -> dict[str, Value]:
    """GET the module and extract exactly the declared outputs from its JSON."""
    try:
        status, body = outbound.get(url, params, timeout_ms)
    except ModuleCallError:
        raise
    except TimeoutError as exc:
        raise ModuleCallError("timeout", f"module call {url} timed out") from exc
    except OSError as exc:
        raise ModuleCallError("transport", f"module call {url} failed: {exc}") from exc
    if status != 200:
        raise ModuleCallError("http-status", f"module call {url} returned {status}")
    if len(body) > body_limit:
        raise ModuleCallError("malformed-body", f"module response exceeds {body_limit} bytes")
    if not output_names:
        return {}

    def _reject_constant(text: str):
        raise ModuleCallError("malformed-body", f"non-finite number {text} in module response")

    try:
        payload = json.loads(body.decode("utf-8"), parse_constant=_reject_constant)
    except ModuleCallError:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModuleCallError("malformed-body", f"module response is not JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ModuleCallError("malformed-body", "module response is not a JSON object")
    outputs: dict[str, Value] = {}
    for name in output_names:
        if name not in payload:
            raise ModuleCallError("missing-output", f"module response lacks output {name!r}")
        raw = payload[name]
        if isinstance(raw, (dict, list)):
            raise ModuleCallError("malformed-body", f"output {name!r} is not a scalar")
        outputs[name] = ensure_value(raw)
    return outputs


# -- the naive twin ---------------------------------------------------------------


def naive_oracle(
    program: ast.Program,
    events: Iterable[Event],
    config: EngineConfig | None = None,
    clock: Clock | None = None,
    outbound: Outbound | None = None,
) -> list[Firing]:
    """Run the same semantics with no dependency index: after every insert,
    every active rule is re-evaluated. The firing log must match the indexed
    engine's exactly."""
    engine = Engine(
        program,
        config=config,
        clock=clock or VirtualClock(),
        outbound=outbound,
        rule_selection="all",
    )
    engine.load()
    for event in events:
        engine.process_event(event)
    engine.close()
    return engine.firing_log
