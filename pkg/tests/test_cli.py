import json
from pathlib import Path

import pytest

from mdptrack.cli import main
from mdptrack.formats import parse_results


def write_config(path, **kw):
    defaults = dict(
        width=360, height=280, frames=30, targets=3,
        spawn_min=1, spawn_max=1, exit_min=30, exit_max=30,
        speed_min=1.0, speed_max=2.0, size_min=20, size_max=28,
        fn_rate=0.0, fp_per_frame=0.0, render=0, seed=3,
    )
    defaults.update(kw)
    path.write_text("".join(f"{k}={v}\n" for k, v in defaults.items()))


@pytest.fixture
def scenario_dir(tmp_path):
    cfg = tmp_path / "scenario.cfg"
    write_config(cfg)
    out = tmp_path / "scn"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_simulate_outputs(scenario_dir):
    for name in ("gt.txt", "det.txt", "provenance.csv", "scenario.json"):
        assert (scenario_dir / name).exists()
    meta = json.loads((scenario_dir / "scenario.json").read_text())
    assert meta["scenario"]["target_count"] == 3


def test_simulate_render_writes_frames(tmp_path):
    cfg = tmp_path / "scenario.cfg"
    write_config(cfg, frames=4, render=1, targets=1)
    out = tmp_path / "scn"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "frames" / "frame000001.pgm").exists()
    assert (out / "frames" / "frame000004.pgm").exists()


def test_track_and_eval_roundtrip(scenario_dir, tmp_path):
    res = tmp_path / "res.txt"
    code = main([
        "track", "--dets", str(scenario_dir / "det.txt"), "--out", str(res),
        "--policy", "active=always-positive,tracked=heuristic,lost=always-positive",
    ])
    assert code == 0
    assert parse_results(res)

    report = tmp_path / "report.json"
    code = main([
        "eval", "--gt", str(scenario_dir / "gt.txt"), "--res", str(res),
        "--metrics", "clearmot,hota", "--out", str(report),
    ])
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload["clearmot"]["mota"] > 0.95
    assert payload["hota"]["hota"] > 0.9


def test_track_oracle_policies_need_gt(scenario_dir, tmp_path):
    code = main([
        "track", "--dets", str(scenario_dir / "det.txt"),
        "--out", str(tmp_path / "res.txt"),
        "--policy", "active=relative-oracle,tracked=relative-oracle,lost=relative-oracle",
    ])
    assert code == 2  # contract violation: no --gt


def test_track_with_oracles_and_toggles(scenario_dir, tmp_path):
    res = tmp_path / "res.txt"
    code = main([
        "track", "--dets", str(scenario_dir / "det.txt"), "--out", str(res),
        "--gt", str(scenario_dir / "gt.txt"),
        "--policy", "active=relative-oracle,tracked=relative-oracle,lost=relative-oracle",
        "--hungarian", "--toggle", "conflicts=off", "--toggle", "sort=off",
    ])
    assert code == 0


def test_track_unknown_toggle_is_contract_violation(scenario_dir, tmp_path):
    code = main([
        "track", "--dets", str(scenario_dir / "det.txt"),
        "--out", str(tmp_path / "r.txt"), "--toggle", "wat=on",
    ])
    assert code == 2


def test_track_missing_file_is_io_error(tmp_path):
    code = main([
        "track", "--dets", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "r.txt"),
    ])
    assert code == 1


def test_train_incremental_then_learned_track(scenario_dir, tmp_path):
    models = tmp_path / "models"
    code = main([
        "train", "--data", str(scenario_dir), "--out-model-dir", str(models),
        "--mode", "incremental", "--seed", "0",
    ])
    assert code == 0
    assert (models / "active.mdpm").exists()
    assert (models / "lost.mdpm").exists()

    res = tmp_path / "res.txt"
    code = main([
        "track", "--dets", str(scenario_dir / "det.txt"), "--out", str(res),
        "--model-dir", str(models),
    ])
    assert code == 0


def test_train_ibt_and_report(tmp_path):
    cfg = tmp_path / "scenario.cfg"
    write_config(cfg, fn_rate=0.2, fp_per_frame=1.0, seed=5)
    scn = tmp_path / "scn"
    assert main(["simulate", "--config", str(cfg), "--out", str(scn)]) == 0

    models = tmp_path / "ibt"
    code = main([
        "train", "--data", str(scn), "--out-model-dir", str(models),
        "--mode", "ibt", "--max-iters", "2", "--seed", "0",
    ])
    assert code == 0
    assert (models / "iter_001" / "report.json").exists()
    assert (models / "iter_002" / "report.json").exists()

    agg = tmp_path / "agg.csv"
    assert main(["report", "--in", str(models), "--out", str(agg)]) == 0
    text = agg.read_text()
    assert "iteration" in text and "accuracy_lost" in text


def test_sweep_basic(scenario_dir, tmp_path):
    out = tmp_path / "sweep.csv"
    code = main([
        "sweep", "--dets", str(scenario_dir / "det.txt"),
        "--gt", str(scenario_dir / "gt.txt"),
        "--thresholds", "0.0:0.9:0.3", "--out", str(out),
    ])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 5  # header + 4 thresholds
    assert lines[0].startswith("threshold,")


def test_sweep_track_each(tmp_path):
    cfg = tmp_path / "scenario.cfg"
    write_config(cfg, fn_rate=0.1, fp_per_frame=0.5, seed=9, frames=25)
    scn = tmp_path / "scn"
    assert main(["simulate", "--config", str(cfg), "--out", str(scn)]) == 0
    out = tmp_path / "sweep.csv"
    code = main([
        "sweep", "--dets", str(scn / "det.txt"), "--gt", str(scn / "gt.txt"),
        "--thresholds", "0.2:0.8:0.3", "--out", str(out), "--track-each", "--seed", "0",
    ])
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert "mota_matched" in header
    assert "mota_best_detector" in header
    assert "mota_best_tracker" in header


def test_eval_csv_output(scenario_dir, tmp_path):
    res = tmp_path / "res.txt"
    main(["track", "--dets", str(scenario_dir / "det.txt"), "--out", str(res)])
    out = tmp_path / "m.csv"
    code = main([
        "eval", "--gt", str(scenario_dir / "gt.txt"), "--res", str(res),
        "--metrics", "clearmot", "--out", str(out),
    ])
    assert code == 0
    assert out.read_text().startswith("mota,")
