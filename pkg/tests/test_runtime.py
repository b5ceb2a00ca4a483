import time

import pytest

from liot.config import EngineConfig
from liot.engine import Engine
from liot.parser import parse_program
from liot.runtime import EngineRuntime, QueueFullError


def test_wall_clock_timer_enqueues_ticks():
    source = "RELATION TICKS (N)\nTIMER TM (50) { TICKS(1) }"
    engine = Engine(parse_program(source), config=EngineConfig())
    runtime = EngineRuntime(engine)
    runtime.start()
    try:
        deadline = time.monotonic() + 5
        while time.monotonic() < deadline and engine.store.size("TICKS") < 3:
            time.sleep(0.02)
        assert engine.store.size("TICKS") >= 3
    finally:
        runtime.shutdown()


def test_shutdown_drains_queued_events():
    engine = Engine(parse_program("RELATION R (X)"), config=EngineConfig())
    runtime = EngineRuntime(engine)
    runtime.start()
    for i in range(100):
        runtime.submit_insert("R", (float(i),))
    runtime.shutdown()
    assert engine.store.size("R") == 100


def test_submit_raises_when_queue_full():
    engine = Engine(parse_program("RELATION R (X)"), config=EngineConfig(queue_size=3))
    engine.load()
    runtime = EngineRuntime(engine)  # loop never started
    for i in range(3):
        runtime.submit_insert("R", (float(i),))
    with pytest.raises(QueueFullError):
        runtime.submit_insert("R", (99.0,))
    engine.close()


def test_arrival_seq_is_strictly_increasing():
    engine = Engine(parse_program("RELATION R (X)"), config=EngineConfig())
    engine.load()
    runtime = EngineRuntime(engine)
    arrivals = [runtime.submit_insert("R", (1.0,)) for _ in range(5)]
    assert arrivals == [1, 2, 3, 4, 5]
    engine.close()
