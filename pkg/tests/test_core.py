import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sepdiar.core import (
    ActivityMatrix,
    Annotation,
    PipelineConfig,
    Segment,
    binarize,
    crop,
    merge_segments,
    overlap_regions,
)


def ann(**spans):
    return Annotation.from_dict(spans)


def test_segment_rejects_empty_and_negative():
    with pytest.raises(ValueError):
        Segment(2.0, 2.0)
    with pytest.raises(ValueError):
        Segment(-1.0, 2.0)


def test_binarize_zero_matrix():
    m = ActivityMatrix(100.0, 0.0, np.zeros((2, 500)))
    assert len(binarize(m, 0.5)) == 0


def test_binarize_saturated_with_offset():
    m = ActivityMatrix(100.0, 2.0, np.ones((1, 500)))
    assert binarize(m, 0.5).entries == ((Segment(2.0, 7.0), "0"),)


def test_binarize_single_run():
    row = np.full(500, 0.1)
    row[:100] = 0.9
    m = ActivityMatrix(100.0, 0.0, row[None, :])
    assert binarize(m, 0.5).to_dict() == {"0": [(0.0, 1.0)]}


def test_binarize_threshold_is_closed():
    m = ActivityMatrix(100.0, 0.0, np.ones((1, 10)))
    assert binarize(m, 1.0).total_duration() == pytest.approx(0.1)


def test_activity_matrix_range_checked():
    with pytest.raises(ValueError):
        ActivityMatrix(100.0, 0.0, np.full((1, 3), 1.5))


def test_crop_examples():
    a = ann(A=[(0, 10)])
    assert crop(a, Segment(0, 10)) == a
    assert crop(a, Segment(4, 6)).to_dict() == {"A": [(4, 6)]}
    b = ann(A=[(0, 3)], B=[(2, 8)])
    assert crop(b, Segment(2.5, 4)).to_dict() == {"A": [(2.5, 3)], "B": [(2.5, 4)]}


def test_overlap_examples():
    assert overlap_regions(ann(A=[(0, 5)])) == []
    assert overlap_regions(ann(A=[(0, 5)], B=[(3, 8)])) == [Segment(3, 5)]
    assert overlap_regions(ann(A=[(0, 5)], B=[(3, 8)], C=[(4, 9)])) == [Segment(3, 8)]


def test_touching_segments_do_not_overlap():
    assert overlap_regions(ann(A=[(0, 5)], B=[(5, 8)])) == []


def test_same_speaker_never_overlaps_itself():
    assert overlap_regions(ann(A=[(0, 5), (3, 8)])) == []


def test_pipeline_config_validation():
    PipelineConfig(latency=5.0)
    with pytest.raises(ValueError, match="latency"):
        PipelineConfig(latency=0.2)
    with pytest.raises(ValueError, match="latency"):
        PipelineConfig(latency=6.0)
    with pytest.raises(ValueError, match="tau_active"):
        PipelineConfig(tau_active=1.0)
    with pytest.raises(ValueError, match="step"):
        PipelineConfig(step=6.0)


grid_segments = st.lists(
    st.tuples(st.integers(0, 2000), st.integers(1, 500), st.sampled_from("ABCD")),
    max_size=12,
)


def to_annotation(items):
    return Annotation(tuple((Segment(a / 100, (a + d) / 100), lab) for a, d, lab in items))


@given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_binarized_duration_non_increasing_in_tau(values, t1, t2):
    lo, hi = sorted((t1, t2))
    m = ActivityMatrix(100.0, 0.0, np.array(values)[None, :])
    assert binarize(m, hi).total_duration() <= binarize(m, lo).total_duration() + 1e-12


@given(grid_segments, st.integers(0, 2000), st.integers(1, 1000))
def test_crop_idempotent(items, a, d):
    extent = Segment(a / 100, (a + d) / 100)
    once = crop(to_annotation(items), extent)
    assert crop(once, extent) == once


@given(grid_segments, st.permutations("ABCD"))
def test_overlap_regions_label_invariant(items, perm):
    a = to_annotation(items)
    relabelled = a.relabel(dict(zip("ABCD", perm)))
    assert overlap_regions(a) == overlap_regions(relabelled)


@given(grid_segments, st.lists(st.integers(1, 2499), max_size=6, unique=True))
def test_crop_to_partition_preserves_duration(items, cuts):
    a = to_annotation(items)
    edges = [0.0] + sorted(c / 100 for c in cuts) + [25.0]
    parts = [Segment(x, y) for x, y in zip(edges, edges[1:])]
    whole = crop(a, Segment(0.0, 25.0)).total_duration()
    assert sum(crop(a, p).total_duration() for p in parts) == pytest.approx(whole, abs=1e-9)


@given(grid_segments)
def test_overlap_regions_disjoint_sorted_and_correct(items):
    a = to_annotation(items)
    regions = overlap_regions(a)
    for r1, r2 in zip(regions, regions[1:]):
        assert r1.end < r2.start
    # raster check on the 10 ms grid
    raster = np.zeros(2600, dtype=int)
    for seg in a.support().entries:
        raster[int(round(seg[0].start * 100)) : int(round(seg[0].end * 100))] += 1
    expected = raster >= 2
    got = np.zeros(2600, dtype=bool)
    for r in regions:
        got[int(round(r.start * 100)) : int(round(r.end * 100))] = True
    assert np.array_equal(expected, got)


@given(grid_segments)
def test_support_keeps_per_speaker_duration(items):
    a = to_annotation(items)
    s = a.support()
    for label in a.labels():
        raster = np.zeros(2600, dtype=bool)
        for seg in a.by_label()[label]:
            raster[int(round(seg.start * 100)) : int(round(seg.end * 100))] = True
        assert s.speaker_duration(label) == pytest.approx(raster.sum() / 100)
    assert merge_segments([]) == []
