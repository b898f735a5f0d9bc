import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specverify.engine import DecodeConfig, decode
from specverify.trace import (
    TraceFile,
    TraceFormatError,
    TraceHeader,
    TraceRecord,
    TraceRecorder,
    iter_cycles,
    read_trace,
    replay_cycles,
    replay_verify,
    write_trace,
)
from specverify.verify import VerificationPolicy

from conftest import make_pair

MARGIN_09 = VerificationPolicy.margin_aware(0.9)
STRICT = VerificationPolicy.strict()


def make_record(step=0, top_k=((3, 2.5), (1, 1.25)), draft=None, ctx=None, temp=1.0):
    return TraceRecord(step=step, top_k=top_k, temperature=temp, chosen_draft=draft, context_hash=ctx)


def fuzz_records(rng, n, vocab=64, weird_floats=False):
    records = []
    for i in range(n):
        width = int(rng.integers(2, min(11, vocab)))
        tokens = rng.choice(vocab, size=width, replace=False)
        if weird_floats:
            mags = rng.choice([1e-300, 1e-12, 1.0, 1e3, 1e12, 1e300], size=width)
            logits = rng.uniform(-1.0, 1.0, width) * mags
        else:
            logits = rng.normal(0.0, 5.0, width)
        entries = sorted(
            zip((int(t) for t in tokens), (float(z) for z in logits)),
            key=lambda e: (-e[1], e[0]),
        )
        draft = int(rng.integers(0, vocab)) if rng.random() < 0.8 else None
        ctx = int(rng.integers(0, 2**63)) if rng.random() < 0.5 else None
        records.append(
            TraceRecord(
                step=i,
                top_k=tuple(entries),
                temperature=float(rng.uniform(0.1, 2.0)),
                chosen_draft=draft,
                context_hash=ctx,
            )
        )
    return records


def assert_records_bit_equal(a, b):
    assert len(a) == len(b)
    for ra, rb in zip(a, b):
        assert ra.step == rb.step
        assert ra.chosen_draft == rb.chosen_draft
        assert ra.context_hash == rb.context_hash
        assert repr(ra.temperature) == repr(rb.temperature)
        assert len(ra.top_k) == len(rb.top_k)
        for (ta, za), (tb, zb) in zip(ra.top_k, rb.top_k):
            assert ta == tb
            assert repr(za) == repr(zb)  # repr equality = bit equality for finite floats


class TestRoundTrip:
    def test_empty_trace(self, tmp_path):
        path = tmp_path / "empty.trace"
        write_trace(TraceFile(TraceHeader(vocab_size=64, producer="unit test")), path)
        back = read_trace(path)
        assert back.records == []
        assert back.header == TraceHeader(vocab_size=64, producer="unit test", version=1)

    def test_three_records(self, tmp_path):
        records = [
            make_record(step=0, draft=3),
            make_record(step=1, top_k=((0, 1.5), (2, 1.5), (5, -0.25)), draft=None, ctx=12345),
            make_record(step=2, top_k=((9, 100.0), (4, -100.0)), draft=9, temp=0.4),
        ]
        path = tmp_path / "three.trace"
        write_trace(TraceFile(TraceHeader(64, "x"), records), path)
        back = read_trace(path)
        assert back.records == records

    def test_fuzzed_round_trip(self, tmp_path):
        records = fuzz_records(np.random.default_rng(8), 500, weird_floats=True)
        path = tmp_path / "fuzz.trace"
        write_trace(TraceFile(TraceHeader(64, "fuzz"), records), path)
        assert_records_bit_equal(read_trace(path).records, records)

    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_round_trip_property(self, tmp_path_factory, seed):
        records = fuzz_records(np.random.default_rng(seed), 20, weird_floats=True)
        path = tmp_path_factory.mktemp("rt") / "t.trace"
        write_trace(TraceFile(TraceHeader(64, "prop"), records), path)
        assert_records_bit_equal(read_trace(path).records, records)

    def test_producer_survives_spaces_and_equals(self, tmp_path):
        producer = "model=demo run at 2024-01-01 12:00 (v=64)"
        path = tmp_path / "p.trace"
        write_trace(TraceFile(TraceHeader(64, producer)), path)
        assert read_trace(path).header.producer == producer


class TestValidation:
    def test_ordering_violation_cites_record(self, tmp_path):
        records = [make_record(step=i) for i in range(4)]
        records.append(make_record(step=4, top_k=((1, 1.0), (2, 3.0))))
        path = tmp_path / "bad.trace"
        write_trace(TraceFile(TraceHeader(64, ""), [make_record(step=i) for i in range(5)]), path)
        text = path.read_text()
        lines = text.splitlines()
        lines[5] = "step=4 ctx=- temp=1 draft=- topk=1:1,2:3"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceFormatError, match="record 5"):
            read_trace(path)

    def test_tie_break_ordering_enforced(self):
        rec = make_record(top_k=((5, 2.0), (3, 2.0)))  # tie must order by id
        with pytest.raises(TraceFormatError, match="ordering"):
            write_trace(TraceFile(TraceHeader(64, ""), [rec]), "/dev/null")

    def test_unknown_version(self, tmp_path):
        path = tmp_path / "v9.trace"
        path.write_text("specverify-trace v9 vocab=64 producer=\n")
        with pytest.raises(TraceFormatError, match="version 9"):
            read_trace(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "nope.trace"
        path.write_text("something-else v1 vocab=64\n")
        with pytest.raises(TraceFormatError):
            read_trace(path)

    def test_malformed_line_cites_line_number(self, tmp_path):
        path = tmp_path / "m.trace"
        path.write_text(
            "specverify-trace v1 vocab=64 producer=\n"
            "step=0 ctx=- temp=1 draft=- topk=3:2.5,1:1.25\n"
            "step=1 ctx=- temp=1 draft=-\n"
        )
        with pytest.raises(TraceFormatError, match="line 3"):
            read_trace(path)

    def test_short_topk_rejected(self):
        with pytest.raises(TraceFormatError, match="at least 2"):
            write_trace(
                TraceFile(TraceHeader(64, ""), [make_record(top_k=((1, 1.0),))]), "/dev/null"
            )

    def test_out_of_vocab_token_rejected(self):
        with pytest.raises(TraceFormatError, match="out of range"):
            write_trace(
                TraceFile(TraceHeader(4, ""), [make_record(top_k=((9, 1.0), (1, 0.5)))]),
                "/dev/null",
            )

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(TraceFormatError, match="temperature"):
            write_trace(TraceFile(TraceHeader(64, ""), [make_record(temp=0.0)]), "/dev/null")

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            read_trace(tmp_path / "does-not-exist.trace")


class TestRecorder:
    def test_records_sorted_topk(self):
        rec = TraceRecorder(vocab_size=8, temperature=1.0, top_k=4)
        rec(0, np.array([0.0, 5.0, 5.0, 1.0, -2.0, 3.0, 0.5, 0.25]), 2, [1, 2])
        (entries,) = [r.top_k for r in rec.records]
        assert [t for t, _ in entries] == [1, 2, 5, 3]  # tie 5.0/5.0 broken by id
        assert rec.records[0].chosen_draft == 2
        assert rec.records[0].context_hash is not None

    def test_topk_capped_at_vocab(self):
        rec = TraceRecorder(vocab_size=3, temperature=1.0, top_k=10)
        rec(0, np.array([1.0, 2.0, 3.0]), None, [0])
        assert len(rec.records[0].top_k) == 3


class TestReplay:
    def test_cycle_grouping(self):
        records = []
        for cyc in range(3):
            for i in range(2):
                records.append(make_record(step=cyc * 3 + i, draft=1))
            records.append(make_record(step=cyc * 3 + 2, draft=None))
        trace = TraceFile(TraceHeader(64, ""), records)
        cycles = iter_cycles(trace, 2)
        assert len(cycles) == 3
        assert all(bonus is not None for _, bonus in cycles)

    def test_trailing_partial_cycle_ignored(self):
        records = [make_record(step=i, draft=1) for i in range(5)]
        trace = TraceFile(TraceHeader(64, ""), records)
        assert len(iter_cycles(trace, 2)) == 2

    def test_trace_shorter_than_one_cycle(self):
        trace = TraceFile(TraceHeader(64, ""), [make_record(draft=1)])
        with pytest.raises(ValueError, match="cycle"):
            replay_verify(trace, STRICT, 2)

    def test_aligned_strict_replay_hits_ceiling(self):
        target, _ = make_pair()
        aligned_target, aligned = make_pair(noise_scale=0.0)
        recorder = TraceRecorder(64, temperature=1.0)
        cfg = DecodeConfig(policy=STRICT, k=7, max_tokens=64)
        decode(aligned_target, aligned, cfg, [1, 2], recorder=recorder)
        metrics = replay_verify(recorder.to_trace(), STRICT, 7)
        assert metrics.tau == 8.0

    def test_replay_is_deterministic(self, tmp_path):
        target, draft = make_pair()
        recorder = TraceRecorder(64, temperature=1.0)
        cfg = DecodeConfig(policy=MARGIN_09, k=7, max_tokens=120)
        decode(target, draft, cfg, [3, 4], recorder=recorder)
        path = tmp_path / "d.trace"
        write_trace(recorder.to_trace(), path)
        m1 = replay_verify(read_trace(path), MARGIN_09, 7)
        m2 = replay_verify(read_trace(path), MARGIN_09, 7)
        assert m1 == m2

    def test_live_and_replay_decisions_identical(self, tmp_path):
        target, draft = make_pair()
        recorder = TraceRecorder(64, temperature=1.0)
        live_cycles = []
        cfg = DecodeConfig(policy=MARGIN_09, k=7, max_tokens=200, seed=9)
        out, live_metrics = decode(
            target, draft, cfg, [5, 6], recorder=recorder, cycle_sink=live_cycles
        )
        path = tmp_path / "live.trace"
        write_trace(recorder.to_trace("live/replay test"), path)
        replayed = replay_cycles(read_trace(path), MARGIN_09, 7)
        assert len(replayed) == len(live_cycles)
        for live, rep in zip(live_cycles, replayed):
            assert live == rep
        replay_metrics = replay_verify(read_trace(path), MARGIN_09, 7)
        assert replay_metrics.tau == live_metrics.tau
        assert replay_metrics.total_committed == live_metrics.total_committed

    def test_replay_under_different_theta_is_counterfactual(self, tmp_path):
        target, draft = make_pair()
        recorder = TraceRecorder(64, temperature=1.0)
        cfg = DecodeConfig(policy=MARGIN_09, k=7, max_tokens=200, seed=9)
        decode(target, draft, cfg, [5, 6], recorder=recorder)
        trace = recorder.to_trace()
        loose = replay_verify(trace, VerificationPolicy.margin_aware(0.84), 7)
        tight = replay_verify(trace, VerificationPolicy.margin_aware(0.96), 7)
        strict = replay_verify(trace, STRICT, 7)
        accepted = lambda m: m.exact_count + m.relaxed_count
        assert accepted(loose) >= accepted(tight) >= accepted(strict)
        assert strict.relaxed_count == 0
