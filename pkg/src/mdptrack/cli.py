"""Command-line surface: simulate, track, train, eval, sweep, report.

Exit codes: 0 success, 1 I/O failure, 2 contract violation (bad arguments,
malformed files, broken invariants).  Flat key=value config files provide
defaults; explicit flags override their config keys.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ContractViolation, ParseError
from .formats import (
    parse_detections,
    parse_gt,
    parse_kv_file,
    parse_results,
    read_provenance,
    write_results,
)
from .geometry import ImageExtent
from .inference import DecisionLog, TesterConfig, run_sequence
from .metrics import clear_mot, hota, results_from_trajectories, write_report_csv, write_report_json
from .patch_tracking import CtmTracker, NullTracker, PgmDirFrames, TemplateLkTracker
from .policies import (
    GroundTruthContext,
    PolicyKind,
    PolicyRuntime,
    PolicySet,
    load_model,
    save_model,
)
from .sequences import load_dataset, load_sequence
from .simulate import (
    CorruptionConfig,
    OcclusionEvent,
    ScenarioConfig,
    emit_scenario,
    threshold_sweep,
)
from .training import (
    TrainConfig,
    TrainerConfig,
    filter_trajectories,
    ibt_run,
    incremental_train,
    train_active,
)

_KINDS = {k.value: k for k in PolicyKind}


def _scenario_from_config(cfg: dict[str, str]) -> tuple[ScenarioConfig, CorruptionConfig, bool]:
    def f(key, default):
        return float(cfg.get(key, default))

    def i(key, default):
        return int(cfg.get(key, default))

    occlusions = []
    for spec in cfg.get("occlusions", "").split(";"):
        spec = spec.strip()
        if not spec:
            continue
        try:
            occluded, occluder, span = spec.split(":")
            first, last = span.split("-")
            occlusions.append(
                OcclusionEvent(int(occluded), int(occluder), int(first), int(last))
            )
        except ValueError:
            raise ContractViolation(
                f"bad occlusion spec {spec!r}, expected occluded:occluder:first-last"
            ) from None

    frames = i("frames", 80)
    scenario = ScenarioConfig(
        width=i("width", 480),
        height=i("height", 360),
        frame_count=frames,
        target_count=i("targets", 5),
        spawn_frame_range=(i("spawn_min", 1), i("spawn_max", 1)),
        exit_frame_range=(i("exit_min", frames), i("exit_max", frames)),
        speed_range=(f("speed_min", 1.0), f("speed_max", 3.0)),
        size_range=(f("size_min", 28.0), f("size_max", 48.0)),
        turn_rate_noise=f("turn_noise", 0.0),
        occlusions=occlusions,
    )
    corruption = CorruptionConfig(
        fn_rate=f("fn_rate", 0.0),
        fp_per_frame=f("fp_per_frame", 0.0),
        position_sigma=f("pos_noise", 0.0),
        scale_sigma=f("scale_noise", 0.0),
        seed=i("seed", 0),
    )
    render = cfg.get("render", "1") not in ("0", "false", "no")
    return scenario, corruption, render


def _cmd_simulate(args) -> int:
    cfg = parse_kv_file(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    seed = int(cfg.get("seed", 0))
    scenario, corruption, render = _scenario_from_config(cfg)
    emit_scenario(args.out, scenario, corruption, seed, render_frames=render)
    print(f"wrote scenario to {args.out}")
    return 0


def _parse_policy_spec(spec: str | None) -> dict[str, PolicyKind]:
    out: dict[str, PolicyKind] = {}
    if not spec:
        return out
    for part in spec.split(","):
        if "=" not in part:
            raise ContractViolation(f"bad policy spec {part!r}, expected state=kind")
        state, kind = part.split("=", 1)
        state = state.strip()
        kind = kind.strip()
        if state not in ("active", "tracked", "lost"):
            raise ContractViolation(f"unknown policy state {state!r}")
        if kind not in _KINDS:
            raise ContractViolation(
                f"unknown policy kind {kind!r}; choose from {sorted(_KINDS)}"
            )
        out[state] = _KINDS[kind]
    return out


def _build_policies(args, gt_ctx) -> PolicySet:
    kinds = _parse_policy_spec(args.policy)
    models = {}
    if args.model_dir:
        for state in ("active", "tracked", "lost"):
            path = Path(args.model_dir) / f"{state}.mdpm"
            if path.exists():
                models[state] = load_model(path)

    def runtime(state: str, default: PolicyKind) -> PolicyRuntime:
        kind = kinds.get(state)
        if kind is None:
            if state in models:
                kind = PolicyKind.LEARNED
            else:
                kind = default
        model = models.get(state)
        if kind == PolicyKind.LEARNED and model is None and state == "tracked":
            model = models.get("lost")  # model sharing
        return PolicyRuntime(kind=kind, model=model, seed=args.seed or 0)

    return PolicySet(
        active=runtime("active", PolicyKind.ALWAYS_POSITIVE),
        tracked=runtime("tracked", PolicyKind.HEURISTIC),
        lost=runtime("lost", PolicyKind.ALWAYS_POSITIVE),
        gt=gt_ctx,
    )


def _tester_config(args) -> TesterConfig:
    cfg = TesterConfig(hungarian=bool(args.hungarian))
    alias = {
        "sort": "sort_targets",
        "filter": "filter_detections",
        "reconnect": "reconnect_lost",
        "conflicts": "resolve_conflicts",
        "min_len": "prune_min_len",
        "lost_ratio": "lost_ratio_prune",
        "pseudo": "pseudo_detection_reconnect",
    }
    for toggle in args.toggle or []:
        if "=" not in toggle:
            raise ContractViolation(f"bad toggle {toggle!r}, expected name=on|off")
        name, value = toggle.split("=", 1)
        field = alias.get(name.strip(), name.strip())
        if field not in TesterConfig.TOGGLE_NAMES:
            raise ContractViolation(
                f"unknown toggle {name!r}; choose from {sorted(alias)}"
            )
        setattr(cfg, field, value.strip() == "on")
    if args.lost_ratio_max is not None:
        cfg.lost_ratio_prune = True
        cfg.lost_ratio_max = args.lost_ratio_max
    return cfg


def _infer_extent(args, dets, gt) -> ImageExtent:
    if args.size:
        try:
            w, h = (int(v) for v in args.size.lower().split("x"))
            return ImageExtent(w, h)
        except ValueError:
            raise ContractViolation(f"bad --size {args.size!r}, expected WxH") from None
    meta = Path(args.dets).parent / "scenario.json"
    if meta.exists():
        with open(meta) as fh:
            sc = json.load(fh).get("scenario", {})
        if "width" in sc and "height" in sc:
            return ImageExtent(int(sc["width"]), int(sc["height"]))
    boxes = [d.box for d in dets.detections]
    if gt is not None:
        boxes += [e.box for en in gt.tracks.values() for e in en]
    if not boxes:
        return ImageExtent(640, 480)
    return ImageExtent(
        int(max(b.x + b.w for b in boxes)) + 1, int(max(b.y + b.h for b in boxes)) + 1
    )


def _cmd_track(args) -> int:
    dets = parse_detections(args.dets)
    prov = Path(args.dets).parent / "provenance.csv"
    if prov.exists():
        read_provenance(dets, prov)

    gt = parse_gt(args.gt) if args.gt else None
    gt_ctx = GroundTruthContext(gt, dets) if gt is not None else None
    img = _infer_extent(args, dets, gt)

    policies = _build_policies(args, gt_ctx)
    config = _tester_config(args)

    if args.frames:
        frames = PgmDirFrames(args.frames)
        tracker = CtmTracker(frames) if args.ctm else TemplateLkTracker(frames)
    else:
        tracker = NullTracker()

    log = DecisionLog() if args.decision_log else None
    trajectories = run_sequence(
        dets, policies, tracker, config, img,
        frame_count=args.frame_count, decision_log=log,
    )
    write_results(trajectories, args.out)
    if log is not None:
        log.write(args.decision_log)
    print(f"wrote {len(trajectories)} trajectories to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    out_dir = Path(args.out_model_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_config = TrainConfig(seed=args.seed or 0)

    if args.mode == "incremental":
        seq = dataset.train[0]
        if seq.gt is None:
            raise ContractViolation("incremental training needs ground truth")
        active_model, _ = train_active(
            seq.dets, seq.gt, seq.img, train_config, rebalance_strategy=args.rebalance
        )
        save_model(active_model, out_dir / "active.mdpm")
        trajs = filter_trajectories(seq.gt, seq.dets, seq.img)
        config = TrainerConfig(
            max_passes=args.max_passes, max_trials=args.max_trials, max_iters=args.max_iters
        )
        lost_model, store = incremental_train(
            trajs, seq.dets, config, seq.img, seq.gt, train_config=train_config
        )
        save_model(lost_model, out_dir / "lost.mdpm")
        store.write_csv(out_dir / "samples.csv")
        print(f"trained active+lost models into {out_dir} ({len(store)} lost samples)")
        return 0

    config = TrainerConfig(
        max_passes=args.max_passes,
        max_trials=args.max_trials,
        max_iters=args.max_iters,
        data_from_tester=args.data_from_tester,
        accumulative_data=args.accumulative,
        train_from_scratch=args.from_scratch,
    )
    reports = ibt_run(
        dataset, config, out_dir, train_config,
        rebalance_strategy=args.rebalance, seed=args.seed or 0,
    )
    last = out_dir / f"iter_{len(reports):03d}"
    for state in ("active", "tracked", "lost"):
        src = last / f"{state}.mdpm"
        if src.exists():
            (out_dir / f"{state}.mdpm").write_bytes(src.read_bytes())
    print(f"ran {len(reports)} IBT iterations into {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    gt = parse_gt(args.gt)
    results = parse_results(args.res)
    which = [m.strip() for m in args.metrics.split(",")]
    clear = clear_mot(gt, results) if "clearmot" in which else None
    hota_report = None
    if "hota" in which:
        alphas = (
            tuple(float(a) for a in args.alphas.split(","))
            if args.alphas
            else None
        )
        hota_report = hota(gt, results, alphas) if alphas else hota(gt, results)
    out = Path(args.out)
    if out.suffix == ".csv":
        row: dict = {}
        if clear is not None:
            row.update(clear.as_dict())
        if hota_report is not None:
            d = hota_report.as_dict()
            row.update({k: d[k] for k in ("hota", "deta", "assa")})
        write_report_csv(out, [row])
    else:
        write_report_json(out, clear, hota_report)
    if clear is not None:
        print(f"MOTA {clear.mota:.4f}  MOTP {clear.motp:.2f}  IDS {clear.ids}")
    if hota_report is not None:
        print(f"HOTA {hota_report.hota:.4f}")
    return 0


def _parse_thresholds(spec: str) -> list[float]:
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise ContractViolation(f"bad --thresholds {spec!r}, expected LO:HI:STEP") from None
    if step <= 0 or hi < lo:
        raise ContractViolation(f"bad threshold range {spec!r}")
    out = []
    t = lo
    while t <= hi + 1e-9:
        out.append(round(t, 6))
        t += step
    return out


def _cmd_sweep(args) -> int:
    dets = parse_detections(args.dets)
    prov = Path(args.dets).parent / "provenance.csv"
    if prov.exists():
        read_provenance(dets, prov)
    gt = parse_gt(args.gt)
    thresholds = _parse_thresholds(args.thresholds)
    subsets, rows, crossover = threshold_sweep(dets, gt, thresholds)

    table = [
        {
            "threshold": r.threshold,
            "kept": r.kept,
            "recall": round(r.recall, 6),
            "precision": round(r.precision, 6),
            "crossover": int(r.threshold == crossover),
        }
        for r in rows
    ]

    if args.track_each:
        img = _infer_extent(args, dets, gt)

        def train_and_model(thr: float):
            sub = subsets[thr]
            active_model, _ = train_active(sub, gt, img, TrainConfig(seed=args.seed or 0))
            trajs = filter_trajectories(gt, sub, img)
            lost_model, _ = incremental_train(
                trajs, sub, TrainerConfig(max_passes=1, max_trials=1), img, gt,
                train_config=TrainConfig(seed=args.seed or 0, epochs=50),
            )
            return active_model, lost_model

        def run_pair(models, thr_dets: float) -> float:
            active_model, lost_model = models
            policies = PolicySet(
                active=PolicyRuntime(PolicyKind.LEARNED, model=active_model),
                tracked=PolicyRuntime(PolicyKind.HEURISTIC),
                lost=PolicyRuntime(PolicyKind.LEARNED, model=lost_model),
            )
            trajectories = run_sequence(
                subsets[thr_dets], policies, NullTracker(), TesterConfig(), img
            )
            return clear_mot(gt, results_from_trajectories(trajectories)).mota

        models_by_thr = {thr: train_and_model(thr) for thr in thresholds}
        best = crossover
        for row in table:
            thr = row["threshold"]
            row["mota_matched"] = round(run_pair(models_by_thr[thr], thr), 6)
            row["mota_best_detector"] = round(run_pair(models_by_thr[thr], best), 6)
            row["mota_best_tracker"] = round(run_pair(models_by_thr[best], thr), 6)

    write_report_csv(args.out, table)
    print(f"sweep over {len(thresholds)} thresholds, crossover at {crossover}")
    return 0


def _cmd_report(args) -> int:
    root = Path(args.in_dir)
    rows: list[dict] = []
    for path in sorted(root.rglob("report.json")):
        with open(path) as fh:
            rep = json.load(fh)
        row = {"source": str(path.relative_to(root)), "iteration": rep.get("iteration")}
        for state, acc in rep.get("accuracy", {}).items():
            row[f"accuracy_{state}"] = round(acc, 6)
        for seq, mot in rep.get("mot", {}).items():
            for k, v in mot.items():
                row[f"{seq}_{k}"] = round(v, 6) if isinstance(v, float) else v
        rows.append(row)
    for path in sorted(root.rglob("*.csv")):
        if path.name == "samples.csv":
            continue
        import csv as _csv

        with open(path, newline="") as fh:
            for rec in _csv.DictReader(fh):
                rec["source"] = str(path.relative_to(root))
                rows.append(rec)
    write_report_csv(args.out, rows)
    print(f"aggregated {len(rows)} rows into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdptrack", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate a synthetic scenario")
    sp.add_argument("--config", help="key=value scenario config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("track", help="run the tracker over a detection file")
    sp.add_argument("--dets", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", help="directory of frame%%06d.pgm files")
    sp.add_argument("--model-dir")
    sp.add_argument("--policy", help="active=KIND,tracked=KIND,lost=KIND")
    sp.add_argument("--gt", help="ground truth (required for oracle policies)")
    sp.add_argument("--hungarian", action="store_true")
    sp.add_argument("--ctm", action="store_true", help="continuous tracking mode")
    sp.add_argument("--toggle", action="append", metavar="NAME=on|off")
    sp.add_argument("--lost-ratio-max", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--size", help="image extent WxH")
    sp.add_argument("--frame-count", type=int)
    sp.add_argument("--decision-log")
    sp.set_defaults(func=_cmd_track)

    sp = sub.add_parser("train", help="train policy models")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out-model-dir", required=True)
    sp.add_argument("--mode", choices=("incremental", "ibt"), default="incremental")
    sp.add_argument("--max-iters", type=int, default=3)
    sp.add_argument("--max-passes", type=int, default=3)
    sp.add_argument("--max-trials", type=int, default=3)
    sp.add_argument("--data-from-tester", action="store_true")
    sp.add_argument("--accumulative", action="store_true")
    sp.add_argument("--from-scratch", action="store_true")
    sp.add_argument("--rebalance", choices=("undersample", "oversample", "probabilistic"))
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("eval", help="evaluate a results file against ground truth")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--res", required=True)
    sp.add_argument("--metrics", default="clearmot,hota")
    sp.add_argument("--alphas", help="comma-separated overlap thresholds")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_eval)

    sp = sub.add_parser("sweep", help="confidence-threshold sweep")
    sp.add_argument("--dets", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--thresholds", required=True, metavar="LO:HI:STEP")
    sp.add_argument("--out", required=True)
    sp.add_argument("--track-each", action="store_true")
    sp.add_argument("--size", help="image extent WxH")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("report", help="aggregate iteration/sweep outputs")
    sp.add_argument("--in", dest="in_dir", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_report)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ContractViolation, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
