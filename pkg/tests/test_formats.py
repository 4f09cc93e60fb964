import numpy as np
import pytest

from mdptrack.core import BoundingBox, Trajectory
from mdptrack.errors import ParseError
from mdptrack.formats import (
    DetectionSet,
    parse_detections,
    parse_gt,
    parse_kv_file,
    parse_results,
    read_pgm,
    read_provenance,
    write_detections,
    write_gt,
    write_pgm,
    write_provenance,
    write_results,
)

from conftest import box


def test_parse_detection_row(tmp_path):
    p = tmp_path / "det.txt"
    p.write_text("1,-1,10,20,30,40,0.9,-1,-1,-1\n")
    dets = parse_detections(p)
    assert len(dets) == 1
    d = dets.detections[0]
    assert d.frame == 1
    assert (d.box.x, d.box.y, d.box.w, d.box.h) == (10, 20, 30, 40)
    assert d.confidence == 0.9


def test_parse_detections_empty_file(tmp_path):
    p = tmp_path / "det.txt"
    p.write_text("")
    assert len(parse_detections(p)) == 0


@pytest.mark.parametrize(
    "row",
    [
        "1,-1,10,20,-5,40,0.9,-1,-1,-1",  # negative width
        "1,-1,10,20,30,40,1.7,-1,-1,-1",  # confidence out of range
        "0,-1,10,20,30,40,0.9,-1,-1,-1",  # frame < 1
        "1,-1,xx,20,30,40,0.9,-1,-1,-1",  # unparseable field
        "1,-1,10,20",  # too few fields
    ],
)
def test_parse_detections_malformed_rows(tmp_path, row):
    p = tmp_path / "det.txt"
    p.write_text("1,-1,1,1,5,5,0.5,-1,-1,-1\n" + row + "\n")
    with pytest.raises(ParseError) as err:
        parse_detections(p)
    assert ":2:" in str(err.value)  # names the offending line


def test_parse_gt_row_and_flags(tmp_path):
    p = tmp_path / "gt.txt"
    p.write_text("1,3,10,20,30,40,1,1,1.0\n2,3,11,21,30,40,0,1,0.3\n")
    gt = parse_gt(p)
    assert gt.track_ids() == [3]
    assert gt.entry(3, 1).box == box(10, 20, 30, 40)
    assert gt.entry(3, 2).flag == 0  # parsed but excluded from evaluation
    assert gt.boxes_in_frame(2) == []
    assert gt.boxes_in_frame(2, include_ignored=True)
    assert gt.box_count() == 1


def test_parse_gt_duplicate_rejected(tmp_path):
    p = tmp_path / "gt.txt"
    p.write_text("1,3,10,20,30,40,1,1,1.0\n1,3,12,22,30,40,1,1,1.0\n")
    with pytest.raises(ParseError):
        parse_gt(p)


def test_results_roundtrip(tmp_path):
    trajs = [
        Trajectory(target_id=2, points=[(1, box(10.25, 20.5, 30, 40)), (2, box(11, 21, 30, 40))]),
        Trajectory(target_id=1, points=[(1, box(50, 60, 20, 20))]),
    ]
    p = tmp_path / "res.txt"
    write_results(trajs, p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("1,1,")  # sorted by frame then id
    parsed = parse_results(p)
    assert set(parsed) == {1, 2}
    assert parsed[2][0][1].x == pytest.approx(10.25)
    # write -> parse -> write is byte-stable
    trajs2 = [Trajectory(tid, pts) for tid, pts in sorted(parsed.items())]
    p2 = tmp_path / "res2.txt"
    write_results(trajs2, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_write_results_empty(tmp_path):
    p = tmp_path / "res.txt"
    write_results([], p)
    assert p.read_text() == ""


def test_gt_roundtrip(tmp_path):
    from mdptrack.formats import GtEntry, GtTrackSet

    gt = GtTrackSet()
    gt.add(1, GtEntry(frame=1, box=box(5, 6, 7, 8)))
    gt.add(1, GtEntry(frame=2, box=box(6, 7, 7, 8), visibility=0.0, occluded=True))
    p = tmp_path / "gt.txt"
    write_gt(gt, p)
    back = parse_gt(p)
    assert back.entry(1, 2).occluded  # visibility < 0.5 marks occlusion
    assert back.entry(1, 1).box == box(5, 6, 7, 8)


def test_provenance_roundtrip(tmp_path):
    from conftest import det

    dets = DetectionSet(
        detections=[det(1, 0, 0, 5, 5), det(1, 10, 10, 5, 5), det(2, 1, 1, 5, 5)],
        provenance=[3, None, 7],
    )
    p = tmp_path / "prov.csv"
    write_provenance(dets, p)
    dets2 = DetectionSet(detections=list(dets.detections))
    read_provenance(dets2, p)
    assert dets2.provenance == [3, None, 7]


def test_pgm_roundtrip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (37, 53)).astype(np.uint8)
    p = tmp_path / "frame000001.pgm"
    write_pgm(p, img)
    back = read_pgm(p)
    np.testing.assert_array_equal(img, back)


def test_pgm_rejects_non_p5(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n3 3\n255\n")
    with pytest.raises(ParseError):
        read_pgm(p)


def test_kv_config(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("# comment\nwidth = 480\nseed=7\n\nname=run a\n")
    cfg = parse_kv_file(p)
    assert cfg == {"width": "480", "seed": "7", "name": "run a"}


def test_kv_config_rejects_garbage(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("not a pair\n")
    with pytest.raises(ParseError):
        parse_kv_file(p)
