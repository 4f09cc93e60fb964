import numpy as np
import pytest

from mdptrack.core import Detection
from mdptrack.errors import ContractViolation
from mdptrack.features import (
    active_features,
    lost_features,
    ncc_dense,
    ncc_response,
    ring_stats,
    rowcol_max,
    topk_nms,
)
from mdptrack.geometry import ImageExtent
from mdptrack.patch_tracking import RoiParams, extract_roi
from mdptrack.patch_tracking.lk import TrackResult

from conftest import box, det


def test_ncc_exact_copy_peaks_at_one(rng):
    template = rng.random((8, 6))
    search = rng.random((20, 18))
    search[5:13, 7:13] = template
    out = ncc_dense(template, search)
    assert out.shape == (13, 13)
    assert out.max() == pytest.approx(1.0, abs=1e-6)
    assert np.unravel_index(np.argmax(out), out.shape) == (5, 7)
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_ncc_constant_template_zero_map(rng):
    out = ncc_dense(np.full((5, 5), 0.7), rng.random((12, 12)))
    assert out.shape == (8, 8)
    assert np.all(out == 0.0)


def test_ncc_negated_region_hits_minus_one(rng):
    template = rng.random((7, 7))
    search = rng.random((15, 15)) * 0.5
    search[4:11, 3:10] = 1.0 - template
    out = ncc_dense(template, search)
    assert out.min() == pytest.approx(-1.0, abs=1e-6)
    assert np.unravel_index(np.argmin(out), out.shape) == (4, 3)


def test_ncc_template_must_fit(rng):
    with pytest.raises(ContractViolation):
        ncc_dense(rng.random((10, 10)), rng.random((5, 20)))


def test_ncc_affine_intensity_invariance(rng):
    template = rng.random((6, 6))
    search = rng.random((14, 14))
    base = ncc_dense(template, search)
    scaled = ncc_dense(0.4 * template + 0.3, search)
    np.testing.assert_allclose(base, scaled, atol=1e-6)
    scaled2 = ncc_dense(template, 2.0 * search + 0.1)
    np.testing.assert_allclose(base, scaled2, atol=1e-6)


def test_ncc_response_uses_object_region(rng):
    img = rng.random((400, 400))
    p = RoiParams()
    template = extract_roi(img, box(100, 100, 45, 60), p)
    search = extract_roi(img, box(100, 100, 45, 60), p)
    out = ncc_response(template, search)
    # object region slides over the full ROI
    assert out.shape == (p.roi_h - p.object_h + 1, p.roi_w - p.object_w + 1)
    r, c = np.unravel_index(np.argmax(out), out.shape)
    assert (r, c) == (p.border_y, p.border_x)
    assert out.max() == pytest.approx(1.0, abs=1e-6)


def test_rowcol_max_values():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(rowcol_max(m), [2, 4, 3, 4])


def test_rowcol_max_constant_and_single():
    np.testing.assert_array_equal(rowcol_max(np.full((3, 2), 5.0)), [5] * 5)
    np.testing.assert_array_equal(rowcol_max(np.array([[7.0]])), [7, 7])


def test_rowcol_max_length_fixed_per_shape(rng):
    for _ in range(5):
        m = rng.random((9, 4))
        assert len(rowcol_max(m)) == 13


def test_topk_global_max_first():
    m = np.array([[0.1, 0.9], [0.5, 0.2]])
    out = topk_nms(m, k=1, radius=0)
    np.testing.assert_array_equal(out, [0.9])


def test_topk_suppression_radius():
    m = np.zeros((5, 5))
    m[2, 2] = 1.0
    m[2, 3] = 0.9  # adjacent: suppressed when radius >= 1
    m[0, 0] = 0.5
    out = topk_nms(m, k=2, radius=1)
    np.testing.assert_array_equal(out, [1.0, 0.5])
    out_no_nms = topk_nms(m, k=2, radius=0)
    np.testing.assert_array_equal(out_no_nms, [1.0, 0.9])


def test_topk_pads_with_zeros():
    m = np.zeros((4, 4))
    m[1, 1] = 1.0
    out = topk_nms(m, k=5, radius=3)
    assert out[0] == 1.0
    np.testing.assert_array_equal(out[1:], np.zeros(4))
    assert len(out) == 5


def test_ring_stats_constant_map():
    m = np.full((9, 9), 0.3)
    out = ring_stats(m, [1, 3])
    np.testing.assert_allclose(out, [0.3] * 8)


def test_ring_stats_delta_peak():
    m = np.zeros((11, 11))
    m[5, 5] = 1.0
    out = ring_stats(m, [1, 3])
    # center disc: peak + 4 neighbours
    assert out[0] == pytest.approx(1 / 5)  # mean
    assert out[1] == 0.0  # median
    assert out[2] == 0.0  # min
    assert out[3] == 1.0  # max
    np.testing.assert_array_equal(out[4:], [0, 0, 0, 0])


def test_ring_stats_corner_argmax_no_crash():
    m = np.zeros((6, 6))
    m[0, 0] = 2.0
    out = ring_stats(m, [1, 2, 4])
    assert len(out) == 12
    assert out[3] == 2.0


def test_ring_stats_radii_must_increase():
    with pytest.raises(ContractViolation):
        ring_stats(np.zeros((5, 5)), [3, 1])
    with pytest.raises(ContractViolation):
        ring_stats(np.zeros((5, 5)), [])


def test_ring_stats_argmax_invariant_under_positive_rescale(rng):
    m = rng.random((12, 12))
    a = ring_stats(m, [2, 5])
    b = ring_stats(3.0 * m + 0.5, [2, 5])
    # statistics scale affinely but come from the same argmax location
    np.testing.assert_allclose(b, 3.0 * a + np.where(a != 0, 0.5, 0.5), atol=1e-9)


def test_active_features_full_image_box():
    img = ImageExtent(200, 100)
    f = active_features(det(1, 0, 0, 200, 100, conf=1.0), img)
    np.testing.assert_allclose(f, [0, 0, 1, 1, 2.0, 1.0])


def test_active_features_centered_half_box():
    img = ImageExtent(100, 100)
    f = active_features(det(1, 25, 25, 50, 50, conf=0.0), img)
    np.testing.assert_allclose(f, [0.25, 0.25, 0.5, 0.5, 1.0, 0.0])
    assert len(f) == 6


def test_lost_features_perfect_match():
    img = ImageExtent(100, 100)
    summary = TrackResult(success=True, median_fb=0.0, median_ncc=1.0)
    b = box(10, 10, 20, 40)
    f = lost_features(summary, b, det(3, 10, 10, 20, 40, conf=0.7), img)
    np.testing.assert_allclose(f, [1, 1, 1, 1, 1, 1, 0.7])
    assert len(f) == 7


def test_lost_features_failed_track_zeroes_appearance():
    img = ImageExtent(100, 100)
    summary = TrackResult(success=False)
    f = lost_features(summary, box(10, 10, 20, 40), det(3, 10, 10, 20, 40), img)
    assert f[0] == 0.0 and f[1] == 0.0
    assert f[4] == 1.0  # geometry entries still meaningful


def test_lost_features_disjoint_detection():
    img = ImageExtent(100, 100)
    summary = TrackResult(success=True, median_fb=0.1, median_ncc=0.9)
    f = lost_features(summary, box(0, 0, 10, 10), det(3, 80, 80, 10, 10), img)
    assert f[4] == 0.0
    assert 0.0 < f[5] < 1.0
