import json

from liot.config import RunConfig
from liot.values import parse_query_value

from .helpers import get_json, http_get, running_stack, stub_server

PROGRAM = """
RELATION R (MAC, RSSI)
RELATION ALARMS (MAC, RSSI)
ENDPOINT NEW_RECORD (M, RS)
{
    R(M, RS)
}
RULE R1 R.RSSI < -60
{
    ALARMS(R.MAC, R.RSSI)
}
"""


def wait_applied(runtime):
    runtime.wait_idle()


def test_healthz():
    with running_stack(PROGRAM) as (runtime, base):
        status, body = http_get(f"{base}/healthz")
        assert status == 200
        assert body == b'{"ok":true}'


def test_ingest_and_read_round_trip():
    with running_stack(PROGRAM) as (runtime, base):
        status, payload = get_json(f"{base}/rel/R/insert?MAC=38:E7:D8:D3:18:68&RSSI=-87")
        assert status == 202
        assert payload["queued"] is True and payload["seq"] >= 1
        wait_applied(runtime)
        status, body = http_get(f"{base}/rel/R/read")
        assert status == 200
        records = json.loads(body)
        assert len(records) == 1
        record = records[0]
        assert record["MAC"] == "38:E7:D8:D3:18:68"
        assert record["RSSI"] == -87
        assert isinstance(record["T"], int)
        # key order is pinned: T first, then declared field order
        assert list(record) == ["T", "MAC", "RSSI"]


def test_read_is_byte_stable():
    with running_stack(PROGRAM) as (runtime, base):
        http_get(f"{base}/rel/R/insert?MAC=aa&RSSI=-70")
        wait_applied(runtime)
        first = http_get(f"{base}/rel/R/read?limit=5")[1]
        for _ in range(5):
            assert http_get(f"{base}/rel/R/read?limit=5")[1] == first


def test_read_limits_and_order():
    with running_stack(PROGRAM) as (runtime, base):
        assert get_json(f"{base}/rel/R/read?limit=10")[1] == []
        for i in range(3):
            http_get(f"{base}/rel/R/insert?MAC=m{i}&RSSI=-{70 + i}")
        wait_applied(runtime)
        records = get_json(f"{base}/rel/R/read?limit=2")[1]
        assert [r["MAC"] for r in records] == ["m2", "m1"]
        records = get_json(f"{base}/rel/R/read?limit=100")[1]
        assert [r["MAC"] for r in records] == ["m2", "m1", "m0"]
        # default limit is 1
        records = get_json(f"{base}/rel/R/read")[1]
        assert [r["MAC"] for r in records] == ["m2"]


def test_ingest_errors():
    with running_stack(PROGRAM) as (runtime, base):
        assert http_get(f"{base}/rel/NOPE/insert?x=1")[0] == 404
        status, payload = get_json(f"{base}/rel/R/insert?MAC=aa")
        assert status == 400 and "RSSI" in payload["error"]
        status, payload = get_json(f"{base}/rel/R/insert?MAC=aa&RSSI=1&RSSI=2")
        assert status == 400 and "duplicate" in payload["error"]
        status, payload = get_json(f"{base}/rel/R/insert?MAC=aa&RSSI=1&EXTRA=9")
        assert status == 400 and "EXTRA" in payload["error"]


def test_read_errors():
    with running_stack(PROGRAM) as (runtime, base):
        assert http_get(f"{base}/rel/NOPE/read")[0] == 404
        assert http_get(f"{base}/rel/R/read?limit=0")[0] == 400
        assert http_get(f"{base}/rel/R/read?limit=-2")[0] == 400
        assert http_get(f"{base}/rel/R/read?limit=abc")[0] == 400


def test_unknown_route_404():
    with running_stack(PROGRAM) as (runtime, base):
        assert http_get(f"{base}/nope")[0] == 404
        assert http_get(f"{base}/rel/R/other")[0] == 404


def test_endpoint_route_runs_body():
    with running_stack(PROGRAM) as (runtime, base):
        status, _ = get_json(f"{base}/endpoint/NEW_RECORD?M=aa:bb&RS=-40")
        assert status == 202
        wait_applied(runtime)
        records = get_json(f"{base}/rel/R/read")[1]
        assert records[0]["MAC"] == "aa:bb" and records[0]["RSSI"] == -40


def test_endpoint_errors():
    with running_stack(PROGRAM) as (runtime, base):
        assert http_get(f"{base}/endpoint/NOPE?x=1")[0] == 404
        status, payload = get_json(f"{base}/endpoint/NEW_RECORD?M=aa")
        assert status == 400 and "RS" in payload["error"]


def test_query_value_typing():
    assert parse_query_value("-87") == -87.0
    assert parse_query_value("2.5") == 2.5
    assert parse_query_value("true") is True
    assert parse_query_value("false") is False
    assert parse_query_value("38:E7:D8:D3:18:68") == "38:E7:D8:D3:18:68"
    assert parse_query_value("TRUE") == "TRUE"
    assert parse_query_value("1e5") == "1e5"
    assert parse_query_value("") == ""


def test_typed_values_survive_the_wire():
    src = "RELATION F (NUM, FLAG, TXT)"
    with running_stack(src) as (runtime, base):
        http_get(f"{base}/rel/F/insert?NUM=2.5&FLAG=true&TXT=01x")
        wait_applied(runtime)
        record = get_json(f"{base}/rel/F/read")[1][0]
        assert record["NUM"] == 2.5
        assert record["FLAG"] is True
        assert record["TXT"] == "01x"


def test_concurrent_endpoint_calls_all_apply():
    import threading

    with running_stack(PROGRAM) as (runtime, base):
        def hit(i):
            http_get(f"{base}/endpoint/NEW_RECORD?M=m{i}&RS=-10")

        threads = [threading.Thread(target=hit, args=(i,)) for i in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        wait_applied(runtime)
        records = get_json(f"{base}/rel/R/read?limit=100")[1]
        assert sorted(r["MAC"] for r in records) == sorted(f"m{i}" for i in range(16))
        # arrival order defines seq order even under concurrency
        seqs = [r["T"] for r in records]
        assert seqs == sorted(seqs, reverse=True)


def test_queue_full_returns_503():
    from liot.config import RunConfig
    from liot.engine import Engine
    from liot.gateway import GatewayServer
    from liot.parser import parse_program
    from liot.runtime import EngineRuntime

    engine = Engine(parse_program("RELATION R (X)"), config=RunConfig(queue_size=2))
    engine.load()
    runtime = EngineRuntime(engine)  # loop thread never started: nothing drains
    server = GatewayServer(runtime, host="127.0.0.1", port=0)
    server.start()
    try:
        base = server.base_url
        assert http_get(f"{base}/rel/R/insert?X=1")[0] == 202
        assert http_get(f"{base}/rel/R/insert?X=2")[0] == 202
        status, body = http_get(f"{base}/rel/R/insert?X=3")
        assert status == 503
        assert b"queue" in body
    finally:
        server.stop()
        engine.close()


def test_oversized_numeric_parameter_rejected():
    with running_stack(PROGRAM) as (runtime, base):
        status, _ = http_get(f"{base}/rel/R/insert?MAC=aa&RSSI={'9' * 400}")
        assert status == 400


# -- outbound: webhooks, module calls, mapped relations ---------------------------


def test_webhook_receives_one_get_per_insert():
    with stub_server() as stub:
        config = RunConfig(webhooks={"R": f"{stub.url}/hook"})
        with running_stack(PROGRAM, config) as (runtime, base):
            http_get(f"{base}/rel/R/insert?MAC=aa&RSSI=-87")
            wait_applied(runtime)
        # stack shutdown flushes the async delivery queue
        assert stub.request_count("/hook") == 1
        path, params = stub.requests[0]
        assert params[0][0] == "T" and [p[0] for p in params[1:]] == ["MAC", "RSSI"]
        assert dict(params)["RSSI"] == "-87"


def test_no_webhook_no_outbound_traffic():
    with stub_server() as stub:
        with running_stack(PROGRAM) as (runtime, base):
            http_get(f"{base}/rel/R/insert?MAC=aa&RSSI=-87")
            wait_applied(runtime)
        assert stub.requests == []


def test_webhook_fires_per_row_for_body_inserts():
    src = """
RELATION OUT (N)
ENDPOINT THREE ()
{
  OUT(1)
  OUT(2)
  OUT(3)
}
"""
    with stub_server() as stub:
        config = RunConfig(webhooks={"OUT": f"{stub.url}/cb"})
        with running_stack(src, config) as (runtime, base):
            http_get(f"{base}/endpoint/THREE")
            wait_applied(runtime)
        assert stub.request_count("/cb") == 3


def test_module_call_against_stub():
    src = """
RELATION OUT (N)
MODULE COUNTER (count)
MAP MODULE COUNTER : {target}
ENDPOINT E ()
{{
  CALL COUNTER (7)
  OUT(COUNTER.count)
}}
"""
    with stub_server() as stub:
        stub.responses["/counter"] = (200, b'{"count": 7}')
        with running_stack(src.format(target=f"{stub.url}/counter")) as (runtime, base):
            http_get(f"{base}/endpoint/E")
            wait_applied(runtime)
            assert get_json(f"{base}/rel/OUT/read")[1][0]["N"] == 7
        assert stub.requests[0] == ("/counter", [("p1", "7")])


def test_module_call_failure_keeps_prior_inserts():
    src = """
RELATION OUT (N)
MODULE M (v)
MAP MODULE M : {target}
ENDPOINT E ()
{{
  OUT(1)
  CALL M ()
  OUT(2)
}}
"""
    with stub_server() as stub:
        stub.responses["/m"] = (500, b"boom")
        with running_stack(src.format(target=f"{stub.url}/m")) as (runtime, base):
            http_get(f"{base}/endpoint/E")
            wait_applied(runtime)
            records = get_json(f"{base}/rel/OUT/read?limit=10")[1]
            assert [r["N"] for r in records] == [1]
            assert runtime.engine.event_errors


def test_module_response_over_body_cap_rejected():
    src = """
MODULE BIG (v)
MAP MODULE BIG : {target}
ENDPOINT E () {{ CALL BIG () }}
"""
    with stub_server() as stub:
        stub.responses["/big"] = (200, b'{"v":"' + b"x" * (2 * 1024 * 1024) + b'"}')
        with running_stack(src.format(target=f"{stub.url}/big")) as (runtime, base):
            http_get(f"{base}/endpoint/E")
            runtime.wait_idle()
            assert runtime.engine.event_errors
            assert "exceeds" in runtime.engine.event_errors[0]


def test_mapped_relation_forwards_then_applies_locally():
    src = "RELATION R (MAC, RSSI)\nMAP RELATION R : {target}"
    with stub_server() as stub:
        stub.responses["/backend/insert"] = (200, b"ok")
        with running_stack(src.format(target="{}/backend".format(stub.url))) as (runtime, base):
            http_get(f"{base}/rel/R/insert?MAC=aa&RSSI=-87")
            wait_applied(runtime)
            assert stub.request_count("/backend/insert") == 1
            # applied locally after the 2xx forward: reads stay local
            assert get_json(f"{base}/rel/R/read")[1][0]["RSSI"] == -87


def test_mapped_relation_forward_failure_drops_record():
    src = "RELATION R (MAC, RSSI)\nMAP RELATION R : {target}"
    with stub_server() as stub:
        stub.responses["/backend/insert"] = (503, b"down")
        with running_stack(src.format(target="{}/backend".format(stub.url))) as (runtime, base):
            http_get(f"{base}/rel/R/insert?MAC=aa&RSSI=-87")
            wait_applied(runtime)
            assert get_json(f"{base}/rel/R/read?limit=5")[1] == []


def test_relative_map_target_resolves_against_own_server():
    # an endpoint of the same program plays the module implementation
    src = """
RELATION OUT (N)
MODULE LOOP ()
MAP MODULE LOOP : endpoint/PING
ENDPOINT PING (p1)
{
  OUT(p1)
}
ENDPOINT E ()
{
  ACALL LOOP (5)
}
"""
    with running_stack(src) as (runtime, base):
        http_get(f"{base}/endpoint/E")
        wait_applied(runtime)
        runtime.wait_idle()
        # the async call loops back into our own endpoint queue
        import time

        deadline = time.monotonic() + 5
        while time.monotonic() < deadline:
            records = get_json(f"{base}/rel/OUT/read")[1]
            if records:
                break
            time.sleep(0.01)
        assert records[0]["N"] == 5
