import dataclasses
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aicl.binary import CONF_TOLERANCE_MASK, DIFF_MASK, EMPTY_MASK, REPLAY_MASK
from aicl.core.message import MessageType
from aicl.core.values import Ident, Timestamp
from aicl.harness.generate import random_message
from aicl.trace import (
    Direction,
    Envelope,
    NullResponder,
    StubFromTrace,
    TraceError,
    TraceLog,
    default_direction,
    diff_traces,
    format_diff,
    format_replay,
    load,
    replay,
    replay_key,
    save,
    slice_by_cid,
    to_bytes,
    from_bytes,
)
from strategies import messages


def pair_log(weather_pair):
    return TraceLog.from_messages(weather_pair)


def with_result(log, **content_changes):
    msgs = log.messages()
    out = []
    for m in msgs:
        if m.mtype is MessageType.RESULT:
            data = dict(m.content["data"], **content_changes)
            m = dataclasses.replace(m, content=dict(m.content, data=data))
        out.append(m)
    return TraceLog.from_messages(out)


# -- log structure ----------------------------------------------------------------


def test_append_enforces_contiguous_seq(weather_pair):
    log = TraceLog()
    m = weather_pair[0]
    log.append(Envelope(0, m.meta.ts, Direction.INBOUND, m))
    with pytest.raises(TraceError) as dup:
        log.append(Envelope(0, m.meta.ts, Direction.INBOUND, m))
    assert dup.value.code == "SEQ.DUP"
    with pytest.raises(TraceError) as gap:
        log.append(Envelope(2, m.meta.ts, Direction.INBOUND, m))
    assert gap.value.code == "SEQ.GAP"
    assert len(log) == 1


def test_default_direction(weather_pair):
    q, r = weather_pair
    assert default_direction(q) is Direction.INBOUND
    assert default_direction(r) is Direction.OUTBOUND


def test_snapshot_is_stable(weather_pair):
    log = TraceLog.from_messages(weather_pair[:1])
    snap = log.snapshot()
    log.add(weather_pair[1])
    assert len(snap) == 1 and len(log) == 2


def test_slice_by_cid(weather_pair):
    other = weather_pair[0].with_meta(cid=Ident("u", "other"), id=Ident("u", "z"))
    log = TraceLog.from_messages([weather_pair[0], other, weather_pair[1]])
    assert [e.seq for e in slice_by_cid(log, Ident("u", "conv123"))] == [0, 2]
    assert [e.seq for e in slice_by_cid(log, Ident("u", "other"))] == [1]
    assert slice_by_cid(log, Ident("u", "none")) == []


# -- persistence ------------------------------------------------------------------


@pytest.mark.parametrize("suffix", [".aiclb", ".aicl"])
def test_save_load_round_trip(tmp_path, weather_pair, suffix):
    log = pair_log(weather_pair)
    p = tmp_path / f"t{suffix}"
    save(log, p)
    first = p.read_bytes()
    back = load(p)
    assert back.messages() == log.messages()
    save(back, p)
    assert p.read_bytes() == first
    assert not [x for x in tmp_path.iterdir() if x.name.endswith(".tmp")]


@given(st.lists(messages, max_size=5))
@settings(max_examples=50)
def test_bytes_round_trip(msgs):
    log = TraceLog.from_messages(msgs)
    data = to_bytes(log)
    assert data[:5] == b"AICL\x01"
    assert from_bytes(data).messages() == msgs


def test_binary_sniffed_regardless_of_suffix(tmp_path, weather_pair):
    p = tmp_path / "t.bin"
    p.write_bytes(to_bytes(pair_log(weather_pair)))
    assert load(p).messages() == list(weather_pair)


# -- diff -------------------------------------------------------------------------


def random_log(seed, n=8):
    rng = random.Random(seed)
    return TraceLog.from_messages(random_message(rng) for _ in range(n))


@pytest.mark.parametrize("seed", range(20))
def test_diff_is_reflexive(seed):
    log = random_log(seed)
    for mask in (EMPTY_MASK, DIFF_MASK):
        assert diff_traces(log, log, mask) == []


@pytest.mark.parametrize("seed", range(20))
def test_diff_is_symmetric(seed):
    a, b = random_log(seed), random_log(seed + 1000)
    ab, ba = diff_traces(a, b, EMPTY_MASK), diff_traces(b, a, EMPTY_MASK)
    def norm(entries, swap):
        rows = []
        for seqs, ds in entries:
            left, right = reversed(seqs) if swap else seqs
            rows.append((repr((left, right)), sorted(
                (d.path, repr(d.right if swap else d.left), repr(d.left if swap else d.right)) for d in ds)))
        return sorted(rows)

    assert ab and norm(ab, False) == norm(ba, True)


def test_single_field_change_reported_once(weather_pair):
    log = pair_log(weather_pair)
    other = with_result(log, cond="storm")
    [(seqs, entries)] = diff_traces(log, other)
    assert seqs == (1, 1)
    assert [(d.path, d.left, d.right) for d in entries] == [("content.data.cond", "rain", "storm")]
    assert format_diff([(seqs, entries)], porcelain=True) == ['error\t1/1\tcontent.data.cond\t"rain"\t"storm"']


def test_masked_paths_and_tolerance(weather_pair):
    log = pair_log(weather_pair)
    other = with_result(log, cond="storm")
    assert diff_traces(log, other, DIFF_MASK.union(["content.data.cond"])) == []
    assert diff_traces(log, other, DIFF_MASK.union(["content.data"])) == []
    r = log.messages()[1]
    bumped = TraceLog.from_messages([log.messages()[0], r.with_meta(conf=r.meta.conf - 0.03)])
    assert len(diff_traces(log, bumped)) == 1
    assert diff_traces(log, bumped, CONF_TOLERANCE_MASK) == []
    far = TraceLog.from_messages([log.messages()[0], r.with_meta(conf=r.meta.conf - 0.2)])
    assert len(diff_traces(log, far, CONF_TOLERANCE_MASK)) == 1


def test_volatile_fields_ignored_by_default(weather_pair):
    log = pair_log(weather_pair)
    shifted = TraceLog.from_messages(
        m.with_meta(ts=Timestamp.parse("2030-01-01T00:00:00Z"), latency=99) for m in log.messages())
    assert diff_traces(log, shifted) == []
    assert diff_traces(log, shifted, EMPTY_MASK) != []


def test_missing_and_extra_messages(weather_pair):
    log = pair_log(weather_pair)
    short = TraceLog.from_messages(log.messages()[:1])
    assert diff_traces(log, short)[0][0] == (1, None)
    assert diff_traces(short, log)[0][0] == (None, 1)


# -- replay -----------------------------------------------------------------------


def test_self_replay_matches(weather_pair):
    log = pair_log(weather_pair)
    report = replay(log, StubFromTrace(log))
    assert report.ok and (report.total, report.matched) == (1, 1)
    assert format_replay(report) == ["replay: 1/1 matched, 0 mismatched, 0 missing"]


def test_replay_against_mutated_stub(weather_pair):
    log = pair_log(weather_pair)
    stub = with_result(log, temp_c=31)
    report = replay(log, StubFromTrace(stub))
    assert not report.ok
    [(seq, entries)] = report.mismatched
    assert seq == 0 and [d.path for d in entries] == ["content.data.temp_c"]
    assert format_replay(report, porcelain=True) == ["error\t0\tcontent.data.temp_c\t29\t31"]
    assert replay(log, StubFromTrace(stub), REPLAY_MASK.union(["content.data.temp_c"])).ok


def test_null_responder_reports_missing(weather_pair):
    log = pair_log(weather_pair)
    report = replay(log, NullResponder())
    assert report.missing_stub == [0] and not report.ok


def test_failing_responder_is_contained(weather_pair):
    class Boom:
        def respond(self, request):
            raise RuntimeError("down")

    report = replay(pair_log(weather_pair), Boom())
    assert report.missing_stub == [0]


def test_stub_serves_repeats_fifo(weather_pair):
    q, r = weather_pair
    q2 = q.with_meta(id=Ident("u", "q2"))
    r2 = r.with_meta(id=Ident("u", "r2"), of=Ident("u", "q2"), conf=0.5)
    log = TraceLog.from_messages([q, r, q2, r2])
    stub = StubFromTrace(log)
    assert replay_key(q) == replay_key(q2)
    assert stub.respond(q).meta.conf == r.meta.conf
    assert stub.respond(q).meta.conf == 0.5
    assert stub.respond(q) is None
    assert replay(log, StubFromTrace(log)).ok


def test_replay_key_only_for_requests(weather_pair):
    with pytest.raises(TraceError):
        replay_key(weather_pair[1])
