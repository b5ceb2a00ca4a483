import random

import pytest

from liot.ast import RelationDecl
from liot.errors import (
    ArityError,
    HistoryUnavailableError,
    ReplayError,
    UnknownFieldError,
    UnknownRelationError,
    ScalarError,
)
from liot.store import PersistenceLog, Record, Store, replay_log

R = RelationDecl("R", ("MAC", "RSSI"))
Q = RelationDecl("Q", ("N",))


def make_store(window=1024, overrides=None):
    return Store([R, Q], window_default=window, window_overrides=overrides)


class GrowingListOracle:
    """Unbounded append-only model; the window is just its truncated tail."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.rows = []

    def insert(self, values):
        self.rows.append(values)

    def latest(self, field_index, offset):
        window = self.rows[-self.capacity :] if self.capacity else []
        index = len(window) - 1 + offset
        if index < 0:
            return None  # history unavailable
        return window[index][field_index]

    def read(self, limit):
        window = self.rows[-self.capacity :]
        return list(reversed(window))[:limit]


def test_insert_returns_stored_record():
    store = make_store()
    record = store.insert("R", ["38:E7:D8:D3:18:68", -87], t=1000)
    assert record == Record(t=1000, seq=1, values=("38:E7:D8:D3:18:68", -87.0))


def test_arity_mismatch_rejected():
    store = make_store()
    with pytest.raises(ArityError):
        store.insert("R", ["only-one"], t=0)


def test_unknown_relation_rejected():
    store = make_store()
    with pytest.raises(UnknownRelationError):
        store.insert("NOPE", [1], t=0)
    with pytest.raises(UnknownRelationError):
        store.read("NOPE", 1)


def test_non_finite_number_rejected():
    store = make_store()
    with pytest.raises(ScalarError):
        store.insert("Q", [float("nan")], t=0)
    with pytest.raises(ScalarError):
        store.insert("Q", [float("inf")], t=0)


def test_latest_with_offsets():
    store = make_store()
    store.insert("R", ["a", -50], t=1)
    store.insert("R", ["b", -70], t=2)
    assert store.latest("R", "RSSI", 0) == -70
    assert store.latest("R", "RSSI", -1) == -50
    assert store.latest("R", "MAC", -1) == "a"


def test_latest_t_reads_timestamp():
    store = make_store()
    store.insert("R", ["a", -50], t=1000)
    assert store.latest("R", "T", 0) == 1000.0


def test_latest_on_empty_relation_unavailable():
    store = make_store()
    with pytest.raises(HistoryUnavailableError):
        store.latest("R", "RSSI", 0)


def test_latest_unknown_field():
    store = make_store()
    store.insert("R", ["a", -50], t=1)
    with pytest.raises(UnknownFieldError):
        store.latest("R", "NOPE", 0)


def test_eviction_is_oldest_first():
    window = 4
    store = make_store(window=window)
    for i in range(window + 1):
        store.insert("Q", [i], t=i)
    assert store.size("Q") == window
    # the first record is gone; reaching the full window depth now errors
    with pytest.raises(HistoryUnavailableError):
        store.latest("Q", "N", -window)
    assert store.latest("Q", "N", -(window - 1)) == 1.0


def test_read_newest_first_and_limits():
    store = make_store()
    assert store.read("R", 10) == []
    for i in range(3):
        store.insert("Q", [i], t=i)
    two = store.read("Q", 2)
    assert [r.values[0] for r in two] == [2.0, 1.0]
    assert [r.seq for r in two] == [3, 2]
    assert [r.values[0] for r in store.read("Q", 100)] == [2.0, 1.0, 0.0]


def test_seq_strictly_increases_across_relations():
    store = make_store()
    a = store.insert("R", ["a", 1], t=0)
    b = store.insert("Q", [2], t=0)
    c = store.insert("R", ["c", 3], t=0)
    assert [a.seq, b.seq, c.seq] == [1, 2, 3]


def test_randomized_window_reads_match_growable_list_oracle():
    rng = random.Random(99)
    for capacity in (1, 2, 5, 64):
        store = Store([Q], window_default=capacity)
        oracle = GrowingListOracle(capacity)
        for step in range(300):
            value = float(rng.randint(-100, 100))
            store.insert("Q", [value], t=step)
            oracle.insert((value,))
            offset = -rng.randint(0, capacity + 1)
            expected = oracle.latest(0, offset)
            if expected is None:
                with pytest.raises(HistoryUnavailableError):
                    store.latest("Q", "N", offset)
            else:
                assert store.latest("Q", "N", offset) == expected
            limit = rng.randint(1, capacity + 2)
            got = [r.values[0] for r in store.read("Q", limit)]
            assert got == [row[0] for row in oracle.read(limit)]


# -- persistence -------------------------------------------------------------


def test_append_then_replay_reproduces_state(tmp_path):
    path = tmp_path / "run.jsonl"
    store = make_store(window=8)
    log = PersistenceLog(path)
    values = [
        ["38:E7:D8:D3:18:68", -87],
        ["aa:bb", True],
        [None, 2.5],
        ["x", 9],
    ]
    for i, row in enumerate(values):
        record = store.insert("R", row, t=100 + i)
        log.append("R", record)
    record = store.insert("Q", [42], t=200)
    log.append("Q", record)
    log.close()

    fresh = make_store(window=8)
    count = replay_log(fresh, path)
    assert count == 5
    assert fresh.snapshot() == store.snapshot()
    assert fresh.next_seq == store.next_seq


def test_replay_respects_window_capacity(tmp_path):
    path = tmp_path / "run.jsonl"
    store = Store([Q], window_default=100)
    log = PersistenceLog(path)
    for i in range(10):
        log.append("Q", store.insert("Q", [i], t=i))
    log.close()

    small = Store([Q], window_default=3)
    replay_log(small, path)
    assert [r.values[0] for r in small.read("Q", 10)] == [9.0, 8.0, 7.0]
    assert small.next_seq == 11


def test_replay_of_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    store = make_store()
    assert replay_log(store, path) == 0
    assert store.next_seq == 1


def test_replay_error_names_the_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = '{"rel":"Q","t":1,"seq":1,"v":[5]}'
    path.write_text(good + "\n" + '{"rel":"Q","t":2,"seq":2,"v":[1,2]}\n')
    store = make_store()
    with pytest.raises(ReplayError) as err:
        replay_log(store, path)
    assert err.value.line_number == 2
    assert "2" in str(err.value)


def test_replay_rejects_unknown_relation(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"rel":"NOPE","t":1,"seq":1,"v":[5]}\n')
    with pytest.raises(ReplayError):
        replay_log(make_store(), path)


def test_replay_rejects_invalid_json(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("not json\n")
    with pytest.raises(ReplayError) as err:
        replay_log(make_store(), path)
    assert err.value.line_number == 1


def test_log_line_shape_is_exact(tmp_path):
    path = tmp_path / "run.jsonl"
    store = make_store()
    log = PersistenceLog(path)
    log.append("R", store.insert("R", ["38:E7:D8:D3:18:68", -87], t=1000))
    log.close()
    assert path.read_text() == '{"rel":"R","t":1000,"seq":1,"v":["38:E7:D8:D3:18:68",-87]}\n'
