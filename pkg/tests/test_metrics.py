import numpy as np
import pytest

from mdptrack.core import Trajectory
from mdptrack.errors import ContractViolation
from mdptrack.formats import GtEntry, GtTrackSet
from mdptrack.metrics import clear_mot, hota, results_from_trajectories

from conftest import box


def track(tid, frames_boxes):
    gt = []
    for f, b in frames_boxes:
        gt.append((f, b))
    return tid, gt


def build_gt(tracks):
    gt = GtTrackSet()
    for tid, pts in tracks:
        for f, b in pts:
            gt.add(tid, GtEntry(frame=f, box=b))
    return gt


def straight(tid, n, x0=0.0, y0=0.0, dx=5.0, w=10.0, h=10.0, start=1):
    return track(tid, [(start + i, box(x0 + dx * i, y0, w, h)) for i in range(n)])


def as_results(tracks):
    return {tid: list(pts) for tid, pts in tracks}


# -- fixture 1: perfect tracking -------------------------------------------


def test_perfect_results():
    gt_tracks = [straight(1, 10), straight(2, 10, y0=50.0)]
    gt = build_gt(gt_tracks)
    res = as_results([straight(7, 10), straight(8, 10, y0=50.0)])
    c = clear_mot(gt, res)
    assert c.mota == 1.0
    assert c.ids == 0 and c.fp == 0 and c.fn == 0
    assert c.mt == 1.0 and c.ml == 0.0
    assert c.motp == pytest.approx(100.0)
    h = hota(gt, res)
    assert h.hota == pytest.approx(1.0)
    assert all(v == pytest.approx(1.0) for v in h.hota_per_alpha)


# -- fixture 2: empty results ------------------------------------------------


def test_empty_results():
    gt = build_gt([straight(1, 10)])
    c = clear_mot(gt, {})
    assert c.mota == 0.0
    assert c.fn == 10 and c.fp == 0 and c.ids == 0
    assert c.ml == 1.0
    h = hota(gt, {})
    assert h.hota == 0.0


# -- fixture 3: the split-id case --------------------------------------------


def split_id_case():
    gt = build_gt([straight(1, 10)])
    pts = [(f, box(5.0 * (f - 1), 0, 10, 10)) for f in range(1, 11)]
    res = {1: pts[:5], 2: pts[5:]}
    return gt, res


def test_split_id_clear():
    gt, res = split_id_case()
    c = clear_mot(gt, res)
    assert c.ids == 1
    assert c.mota == pytest.approx(0.9)
    assert c.fn == 0 and c.fp == 0
    assert c.motp == pytest.approx(100.0)
    assert c.mt == 1.0


def test_split_id_hota():
    gt, res = split_id_case()
    h = hota(gt, res, alphas=(0.5,))
    assert h.deta_per_alpha[0] == pytest.approx(1.0)
    assert h.assa_per_alpha[0] == pytest.approx(0.5)
    assert h.hota_per_alpha[0] == pytest.approx(np.sqrt(0.5), abs=1e-9)


# -- fixture 4: an injected false positive ------------------------------------


def test_pure_fp_counts():
    gt = build_gt([straight(1, 10)])
    res = as_results([straight(1, 10)])
    res[99] = [(3, box(100, 100, 10, 10)), (4, box(100, 100, 10, 10))]
    c = clear_mot(gt, res)
    assert c.fp == 2 and c.fn == 0 and c.ids == 0
    assert c.mota == pytest.approx(1.0 - 2 / 10)


# -- fixture 5: misses in the middle ------------------------------------------


def test_missed_frames_count_fn_without_ids():
    gt = build_gt([straight(1, 10)])
    pts = [(f, box(5.0 * (f - 1), 0, 10, 10)) for f in range(1, 11) if f not in (4, 5)]
    res = {1: pts}
    c = clear_mot(gt, res)
    assert c.fn == 2 and c.fp == 0 and c.ids == 0  # correspondence persists across the gap
    assert c.mota == pytest.approx(0.8)


# -- fixture 6: two crossing tracks with an identity swap ---------------------


def crossing_swap_case():
    # two targets swap prediction ids at frame 4 onward
    g1 = straight(1, 6, y0=0.0)
    g2 = straight(2, 6, y0=40.0)
    gt = build_gt([g1, g2])
    r1 = [(f, box(5.0 * (f - 1), 0, 10, 10)) for f in range(1, 7)]
    r2 = [(f, box(5.0 * (f - 1), 40, 10, 10)) for f in range(1, 7)]
    res = {
        1: r1[:3] + [(f, b) for f, b in r2[3:]],
        2: r2[:3] + [(f, b) for f, b in r1[3:]],
    }
    return gt, res


def test_crossing_swap_counts_two_switches():
    gt, res = crossing_swap_case()
    c = clear_mot(gt, res)
    assert c.ids == 2
    assert c.fn == 0 and c.fp == 0
    assert c.mota == pytest.approx(1.0 - 2 / 12)


def test_crossing_swap_hota_association():
    gt, res = crossing_swap_case()
    h = hota(gt, res, alphas=(0.5,))
    assert h.deta_per_alpha[0] == pytest.approx(1.0)
    # per TP: TPA=3, FNA=3, FPA=3 -> 3/9
    assert h.assa_per_alpha[0] == pytest.approx(1 / 3)


# -- thresholds and degradation ----------------------------------------------


def test_low_overlap_matches_rejected():
    gt = build_gt([track(1, [(1, box(0, 0, 10, 10))])])
    res = {5: [(1, box(6, 0, 10, 10))]}  # IOU = 4/16 ~ 0.25 < 0.5
    c = clear_mot(gt, res)
    assert c.fn == 1 and c.fp == 1
    h = hota(gt, res, alphas=(0.5,))
    assert h.hota_per_alpha[0] == 0.0


def test_shrunken_boxes_zero_hota_at_half_alpha():
    gt = build_gt([straight(1, 5, w=10, h=10)])
    res = {1: [(f, box(5.0 * (f - 1) + 2.5, 2.5, 5, 5)) for f in range(1, 6)]}  # IOU 0.25
    h = hota(gt, res, alphas=(0.5,))
    assert h.deta_per_alpha[0] == 0.0
    assert h.hota_per_alpha[0] == 0.0


def test_mota_monotone_under_fp_injection(rng):
    gt = build_gt([straight(1, 10), straight(2, 10, y0=60.0)])
    res = as_results([straight(1, 10), straight(2, 10, y0=60.0)])
    base = clear_mot(gt, res).mota
    prev = base
    fps = []
    for k in range(1, 4):
        fps.append((k, box(150 + 20 * k, 150, 10, 10)))
        res_fp = dict(res)
        res_fp[100] = list(fps)
        m = clear_mot(gt, res_fp).mota
        assert m <= prev
        prev = m
    assert prev < base


def test_mota_monotone_under_fn_deletion():
    gt = build_gt([straight(1, 10)])
    pts = [(f, box(5.0 * (f - 1), 0, 10, 10)) for f in range(1, 11)]
    prev = clear_mot(gt, {1: pts}).mota
    for k in (9, 8, 7):
        m = clear_mot(gt, {1: pts[:k]}).mota
        assert m <= prev
        prev = m


def test_hota_non_increasing_in_alpha():
    gt, res = split_id_case()
    # degrade overlaps a little so alpha matters
    res = {tid: [(f, b.translated(1.5, 1.5)) for f, b in pts] for tid, pts in res.items()}
    h = hota(gt, res)
    arr = np.array(h.hota_per_alpha)
    assert np.all(np.diff(arr) <= 1e-12)


def test_metrics_invariant_under_id_relabeling():
    gt, res = crossing_swap_case()
    relabeled = {tid + 40: pts for tid, pts in res.items()}
    c1, c2 = clear_mot(gt, res), clear_mot(gt, relabeled)
    assert (c1.mota, c1.ids, c1.fp, c1.fn, c1.motp) == (c2.mota, c2.ids, c2.fp, c2.fn, c2.motp)
    h1, h2 = hota(gt, res), hota(gt, relabeled)
    assert h1.hota == pytest.approx(h2.hota)


def test_empty_gt_rejected():
    with pytest.raises(ContractViolation):
        clear_mot(GtTrackSet(), {})
    with pytest.raises(ContractViolation):
        hota(GtTrackSet(), {})


def test_results_from_trajectories():
    trajs = [
        Trajectory(target_id=1, points=[(1, box(0, 0, 5, 5))]),
        Trajectory(target_id=2, points=[(2, box(1, 1, 5, 5))]),
    ]
    res = results_from_trajectories(trajs)
    assert set(res) == {1, 2}
