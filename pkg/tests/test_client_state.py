import io
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eds.client_state import (
    ClientRecord,
    Level,
    StateTable,
    backoff_delay,
    difficulty_for,
    evict_if_needed,
    record_failure,
    record_success,
)
from eds.config import EdsConfig, preset


def cfg(**kw):
    return EdsConfig(**kw)


def rec(rep=1.0, failures=0):
    return ClientRecord("c", rep, failures, 0.0, 0.0)


# --- difficulty ---------------------------------------------------------------

def test_new_client_starts_at_base():
    assert difficulty_for(None, cfg(d_base=20, d_range=6)) == 20


def test_zero_reputation_adds_full_range():
    assert difficulty_for(rec(0.0), cfg(d_base=20, d_range=6)) == 26


def test_half_reputation_under_critical_load():
    assert difficulty_for(rec(0.5), cfg(d_base=16, d_range=6), load_level="critical") == 23


def test_difficulty_clamped_to_max():
    c = cfg(d_base=20, d_range=6, d_max=26)
    assert difficulty_for(rec(0.0), c, Level.CRITICAL, Level.CRITICAL) == 26


def test_reputation_steps_do_not_round_up_spuriously():
    # 1 - 0.95 is 0.050000000000000044 in binary; ceil of 0.3 must stay 1, and rep 1 - k*0.05 exact
    c = cfg(d_base=10, d_range=6)
    assert difficulty_for(rec(0.95), c) == 11
    assert difficulty_for(rec(0.5), c) == 13


@given(r1=st.floats(0, 1), r2=st.floats(0, 1), load=st.sampled_from(list(Level)), threat=st.sampled_from(list(Level)))
def test_difficulty_monotone(r1, r2, load, threat):
    c = cfg(d_base=10, d_range=6)
    lo, hi = sorted((r1, r2))
    assert difficulty_for(rec(lo), c, load, threat) >= difficulty_for(rec(hi), c, load, threat)
    for up in Level:
        if up >= load:
            assert difficulty_for(rec(lo), c, up, threat) >= difficulty_for(rec(lo), c, load, threat)
    d = difficulty_for(rec(lo), c, load, threat)
    assert c.d_min <= d <= c.d_max


def test_level_parse():
    assert Level.parse("Elevated") is Level.ELEVATED
    assert Level.parse(2) is Level.CRITICAL
    assert [lv.adjustment for lv in Level] == [0, 2, 4]


# --- backoff ------------------------------------------------------------------

@pytest.mark.parametrize("failures,want", [(0, 1.0), (3, 8.0), (60, 300.0), (10**6, 300.0)])
def test_backoff_examples(failures, want):
    assert backoff_delay(failures, cfg(delay_base=1.0, delay_max=300.0)) == want


def test_backoff_rejects_negative():
    with pytest.raises(ValueError):
        backoff_delay(-1, cfg())


@given(f=st.integers(0, 5000), base=st.floats(0, 10), cap=st.floats(0, 1000))
def test_backoff_monotone_and_capped(f, base, cap):
    c = cfg(delay_base=min(base, cap), delay_max=cap)
    assert backoff_delay(f, c) <= backoff_delay(f + 1, c) <= c.delay_max


# --- success / failure --------------------------------------------------------

def _table_with(rep, failures=0):
    t = StateTable()
    t.put(ClientRecord("c", rep, failures, 0.0, 0.0))
    return t


@pytest.mark.parametrize("rep,want", [(0.9, 0.95), (0.98, 1.0)])
def test_record_success_gain(rep, want):
    t = _table_with(rep)
    assert record_success(t, "c", 5.0, cfg(rep_gain=0.05)) == pytest.approx(want)


def test_record_success_resets_failures():
    t = _table_with(0.5, failures=4)
    record_success(t, "c", 9.0, cfg(rep_gain=0.05))
    r = t.get("c")
    assert (r.reputation, r.failures, r.last_seen) == (pytest.approx(0.55), 0, 9.0)


def test_record_failure_fresh_record():
    t = StateTable()
    assert record_failure(t, "new", 1.0, cfg(delay_base=1.0)) == (1, 2.0)
    assert t.get("new").reputation == pytest.approx(0.9)


def test_third_failure_gives_eight_seconds():
    t = _table_with(1.0, failures=2)
    assert record_failure(t, "c", 1.0, cfg(delay_base=1.0, delay_max=300.0)) == (3, 8.0)


def test_failure_reputation_clamped_at_zero():
    t = _table_with(0.05)
    record_failure(t, "c", 1.0, cfg(rep_penalty=0.1))
    assert t.get("c").reputation == 0.0


def test_failure_without_penalty_keeps_reputation():
    t = _table_with(0.7)
    record_failure(t, "c", 1.0, cfg(), penalize=False)
    assert t.get("c").reputation == pytest.approx(0.7)
    assert t.get("c").failures == 1


@settings(max_examples=100)
@given(st.lists(st.booleans(), max_size=60), st.floats(0, 1), st.floats(0, 1))
def test_reputation_stays_in_unit_interval(ops, gain, penalty):
    c = cfg(rep_gain=gain, rep_penalty=penalty)
    t = StateTable()
    for i, ok in enumerate(ops):
        (record_success if ok else record_failure)(t, "c", float(i), c)
        assert 0.0 <= t.get("c").reputation <= 1.0


# --- eviction -----------------------------------------------------------------

def test_lru_evicts_oldest():
    t = StateTable(capacity=2)
    for i, cid in enumerate(["a", "b", "c"], start=1):
        t.touch(cid, float(i))
    assert sorted(r.client_id for r in t) == ["b", "c"]
    assert t.evictions == 1


def test_under_capacity_nothing_evicted():
    t = StateTable(capacity=5)
    t.touch("a", 1.0)
    assert evict_if_needed(t, 2.0) == 0


def test_tie_breaks_on_smaller_id():
    t = StateTable(capacity=1)
    t.put(ClientRecord("b", 1.0, 0, 5.0, 5.0))
    t.put(ClientRecord("a", 1.0, 0, 5.0, 5.0))
    assert [r.client_id for r in t] == ["b"]


def lru_oracle(trace, capacity):
    """Brute force: after each step drop min (last_seen, id) until within capacity."""
    seen = {}
    for cid, t in trace:
        seen[cid] = t
        while len(seen) > capacity:
            victim = min(seen.items(), key=lambda kv: (kv[1], kv[0]))[0]
            del seen[victim]
    return seen


@settings(max_examples=200)
@given(
    trace=st.lists(st.tuples(st.sampled_from("abcdefgh"), st.integers(0, 20)), max_size=80),
    capacity=st.integers(1, 6),
)
def test_lru_matches_bruteforce_oracle(trace, capacity):
    # times may repeat and go backwards; the table stores whatever last_seen it is given
    t = StateTable(capacity)
    for cid, when in trace:
        t.touch(cid, float(when))
    want = lru_oracle([(c, float(w)) for c, w in trace], capacity)
    assert {r.client_id: r.last_seen for r in t} == want
    assert len(t) <= capacity


def test_get_returns_copy():
    t = StateTable()
    t.touch("a", 1.0)
    r = t.get("a")
    r.reputation = 0.0
    assert t.get("a").reputation == 1.0
    assert t.get("missing") is None


# --- persistence --------------------------------------------------------------

def test_round_trip_persistence():
    t = StateTable()
    t.put(ClientRecord("10.0.0.1", 0.123456789, 3, 1700000000.5, 1699999999))
    t.put(ClientRecord("ü-client", 1.0, 0, 7, 7))
    buf = io.StringIO()
    t.save(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split("\t") == ["10.0.0.1", "0.123457", "3", "1700000000.5", "1699999999"]
    loaded = StateTable.load(io.StringIO(buf.getvalue()))
    assert loaded.get("10.0.0.1").reputation == pytest.approx(0.123457)
    assert loaded.get("ü-client").failures == 0


def test_load_tolerates_trailing_fields_and_missing_created():
    r = ClientRecord.from_line("x\t0.5\t2\t10\t9\tfuture\tstuff\n")
    assert (r.client_id, r.reputation, r.failures, r.last_seen, r.created_at) == ("x", 0.5, 2, 10.0, 9.0)
    assert ClientRecord.from_line("y\t1\t0\t4").created_at == 4.0
    with pytest.raises(ValueError):
        ClientRecord.from_line("y\t1\t0")


@given(st.text(alphabet=st.characters(blacklist_characters="\t\n\r", blacklist_categories=("Cs",)),
               max_size=16).filter(lambda s: len(s.encode()) <= 64),
       st.floats(0, 1), st.integers(0, 10**9), st.floats(0, 4e9))
def test_serialized_record_fits_256_bytes(cid, rep, failures, t):
    line = ClientRecord(cid, rep, failures, t, t).to_line()
    assert len(line.encode()) <= 256


def test_serialized_record_fits_256_bytes_worst_case():
    line = ClientRecord("߿" * 32, 0.123456, 2**63, 1e308, -1e308).to_line()
    assert len(line.encode()) <= 256
    assert ClientRecord.from_line(line).last_seen == 1e308


def test_concurrent_updates_are_atomic():
    t = StateTable()
    c = preset("moderate")

    def work():
        for i in range(500):
            record_failure(t, "shared", float(i), c, penalize=False)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert t.get("shared").failures == 4000
