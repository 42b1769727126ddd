import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_annotation
from oracles import exhaustive_best, plain_si_sdr, raster_der
from sepdiar.core import Annotation, Segment
from sepdiar.metrics import (
    SI_SDR_CAP,
    ShapeError,
    UndefinedDERError,
    all_outputs_eval,
    der,
    pis_eval,
    pit_si_sdr,
    si_sdr,
)


def ann(**spans):
    return Annotation.from_dict(spans)


class TestDerHandCases:
    def test_identity(self):
        r = der(ann(A=[(0, 10)]), ann(A=[(0, 10)]))
        assert r.der == 0 and r.speaker_map == {"A": "A"}

    def test_total_miss(self):
        r = der(ann(A=[(0, 10)]), Annotation())
        assert (r.missed, r.false_alarm, r.confusion, r.der) == (1.0, 0.0, 0.0, 1.0)

    def test_short_hypothesis(self):
        r = der(ann(A=[(0, 10)]), ann(s1=[(0, 9)]))
        assert r.missed == pytest.approx(0.1, abs=1e-9)
        assert r.false_alarm == 0 and r.confusion == 0
        assert r.der == pytest.approx(0.1, abs=1e-9)

    def test_tie_broken_lexicographically(self):
        r = der(ann(A=[(0, 5)], B=[(5, 10)]), ann(s1=[(0, 10)]))
        assert r.speaker_map == {"s1": "A"}
        assert (r.missed, r.false_alarm) == (0.0, 0.0)
        assert r.confusion == pytest.approx(0.5, abs=1e-9)
        assert r.der == pytest.approx(0.5, abs=1e-9)

    def test_overlap_counts_each_speaker(self):
        r = der(ann(A=[(0, 10)], B=[(0, 10)]), ann(s=[(0, 10)]))
        assert r.total_speech == pytest.approx(20.0)
        assert r.missed == pytest.approx(0.5)

    def test_undefined(self):
        with pytest.raises(UndefinedDERError):
            der(Annotation(), ann(s=[(0, 1)]))
        with pytest.raises(UndefinedDERError):
            der(ann(A=[(0, 5)]), ann(A=[(0, 5)]), overlap_only=True)

    def test_uem_restricts(self):
        r = der(ann(A=[(0, 10)]), ann(s=[(0, 5)]), uem=[Segment(0, 5)])
        assert r.der == 0.0 and r.total_speech == 5.0

    def test_overlap_only(self):
        ref = ann(A=[(0, 6)], B=[(4, 10)])
        hyp = ann(x=[(0, 6)])
        r = der(ref, hyp, overlap_only=True)
        assert r.total_speech == pytest.approx(4.0)
        assert r.missed == pytest.approx(0.5)

    def test_collar(self):
        r = der(ann(A=[(1, 9)]), ann(s=[(1.2, 9)]), collar=0.5)
        assert r.der == 0.0
        # extent [1, 9] minus +/-0.25 s around both reference boundaries
        assert r.scored_regions == (Segment(1.25, 8.75),)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(0, 4))
def test_der_matches_raster_oracle(seed, n_ref, n_hyp):
    rng = np.random.default_rng(seed)
    ref = random_annotation(rng, n_ref, 20.0, "r")
    hyp = random_annotation(rng, n_hyp, 20.0, "h")
    got = der(ref, hyp)
    want = raster_der(ref, hyp)
    assert got.der == pytest.approx(want[0], abs=1e-9)
    assert (got.false_alarm, got.missed, got.confusion) == pytest.approx(want[1:], abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(0, 4))
def test_der_additive_and_relabel_invariant(seed, n_ref, n_hyp):
    rng = np.random.default_rng(seed)
    ref = random_annotation(rng, n_ref, 20.0, "r")
    hyp = random_annotation(rng, n_hyp, 20.0, "h")
    a = der(ref, hyp)
    assert abs(a.der - (a.false_alarm + a.missed + a.confusion)) <= 1e-9
    assert min(a.false_alarm, a.missed, a.confusion) >= 0
    perm = rng.permutation(n_hyp)
    b = der(ref, hyp.relabel({f"h{k}": f"z{perm[k]}" for k in range(n_hyp)}))
    assert (b.der, b.false_alarm, b.missed, b.confusion) == pytest.approx((a.der, a.false_alarm, a.missed, a.confusion), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1))
def test_collar_monotone(seed, c1, c2):
    rng = np.random.default_rng(seed)
    ref = random_annotation(rng, 2, 20.0, "r")
    hyp = random_annotation(rng, 2, 20.0, "h")
    big, small = max(c1, c2), min(c1, c2)
    try:
        wide = der(ref, hyp, collar=big)
    except UndefinedDERError:
        return
    narrow = der(ref, hyp, collar=small)
    covered = Annotation(tuple((r, "x") for r in narrow.scored_regions))
    for region in wide.scored_regions:
        assert covered.crop(region).total_duration() == pytest.approx(region.duration, abs=1e-9)


class TestSiSdr:
    def test_identity_hits_cap(self):
        s = np.random.default_rng(0).standard_normal(1000)
        assert si_sdr(s, s) == SI_SDR_CAP

    def test_scale(self):
        s = np.random.default_rng(1).standard_normal(1000)
        e = s + 0.1 * np.random.default_rng(2).standard_normal(1000)
        assert si_sdr(2 * e, s) == pytest.approx(si_sdr(e, s), abs=1e-6)

    def test_hand_case_zero_db(self):
        assert si_sdr([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-9)

    def test_matches_plain_formula(self):
        rng = np.random.default_rng(3)
        s = rng.standard_normal(500)
        e = s + rng.standard_normal(500)
        assert si_sdr(e, s) == pytest.approx(plain_si_sdr(e, s), abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            si_sdr(np.ones(3), np.ones(4))

    def test_silent_estimates(self):
        assert si_sdr(np.zeros(100), np.full(100, 1e-8)) == SI_SDR_CAP
        assert si_sdr(np.zeros(100), np.ones(100)) == -SI_SDR_CAP

    @given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
    def test_scale_invariance_property(self, seed, alpha):
        rng = np.random.default_rng(seed)
        s = rng.standard_normal(256)
        e = rng.standard_normal(256) + s
        assert si_sdr(alpha * e, s) == pytest.approx(si_sdr(e, s), abs=1e-6)


def noisy_tones(rng, m, n=800):
    t = np.arange(n) / 8000
    refs = [np.sin(2 * np.pi * f * t + rng.uniform(0, 6)) for f in rng.uniform(100, 3000, m)]
    ests = [r + rng.uniform(0.1, 1.0) * rng.standard_normal(n) for r in refs]
    order = rng.permutation(m)
    return [ests[i] for i in order], refs


class TestPit:
    def test_swap_recovered(self):
        rng = np.random.default_rng(0)
        refs = [rng.standard_normal(400) for _ in range(2)]
        score = pit_si_sdr(refs[::-1], refs)
        assert score.assignment == (1, 0)
        assert score.mean_si_sdr == SI_SDR_CAP

    def test_single_source(self):
        rng = np.random.default_rng(1)
        s, e = rng.standard_normal(300), rng.standard_normal(300)
        assert pit_si_sdr([e], [s]).mean_si_sdr == pytest.approx(si_sdr(e, s))

    def test_three_tones_brute_force(self):
        rng = np.random.default_rng(2)
        ests, refs = noisy_tones(rng, 3)
        score = pit_si_sdr(ests, refs)
        best, chosen = exhaustive_best(ests, refs)
        assert score.mean_si_sdr == pytest.approx(best, abs=1e-9)
        assert score.assignment == chosen
        assert score.mean_si_sdr == pytest.approx(np.mean(score.per_source))

    def test_count_mismatch(self):
        with pytest.raises(ShapeError):
            pit_si_sdr([np.ones(4)], [np.ones(4), np.ones(4)])


class TestMismatchMetrics:
    def test_full_set_coincides(self):
        rng = np.random.default_rng(3)
        ests, refs = noisy_tones(rng, 3)
        a = pit_si_sdr(ests, refs)
        assert all_outputs_eval(ests, refs) == a
        assert pis_eval(ests, refs, 3) == a

    def test_all_outputs_silent_extra_channel(self):
        rng = np.random.default_rng(4)
        s = rng.standard_normal(500)
        e = s + 0.1 * rng.standard_normal(500)
        silent = all_outputs_eval([e, np.zeros(500)], [s])
        loud = all_outputs_eval([e, rng.standard_normal(500)], [s])
        real = si_sdr(e, s)
        assert silent.per_source == pytest.approx((real, SI_SDR_CAP))
        assert silent.mean_si_sdr > real
        assert loud.per_source[1] < -20
        assert loud.mean_si_sdr < real

    def test_pis_eval_ignores_noise_channel(self):
        rng = np.random.default_rng(5)
        ests, refs = noisy_tones(rng, 2)
        noise = rng.standard_normal(len(refs[0]))
        for pos in range(3):
            estimates = list(ests)
            estimates.insert(pos, noise)
            score = pis_eval(estimates, refs, 2)
            assert pos not in score.assignment

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            all_outputs_eval([np.ones(4)], [np.ones(4), np.ones(4)])
        with pytest.raises(ShapeError):
            pis_eval([np.ones(4)], [np.ones(4), np.ones(4)])
        with pytest.raises(ShapeError):
            pis_eval([np.ones(4), np.ones(4)], [np.ones(4)], n_spks=2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.integers(2, 4), st.integers(1, 4))
    def test_pis_eval_dominates_all_outputs_real_pairs(self, seed, m, n):
        n = min(n, m)
        rng = np.random.default_rng(seed)
        refs = [rng.standard_normal(200) for _ in range(n)]
        ests = [rng.standard_normal(200) + (refs[i] if i < n else 0) for i in range(m)]
        harsh = all_outputs_eval(ests, refs)
        forgiving = pis_eval(ests, refs, n)
        assert forgiving.mean_si_sdr >= np.mean(harsh.per_source[:n]) - 1e-9
        best, _ = exhaustive_best(ests, refs)
        assert forgiving.mean_si_sdr == pytest.approx(best, abs=1e-9)
