"""Command-line entry point tying the subsystems together.

Subcommands: init-config, convert-gt, run-vo, train, infer, eval,
ablate, bench. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .activations import ALL_KINDS, KIND_LABELS, kind_from_name
from .combined import combine_branches, infer
from .config import (
    TOOL_VERSION,
    PipelineConfig,
    RunManifest,
    config_hash,
    config_snapshot,
    default_config_text,
    load_config,
    subseed,
    write_manifest,
)
from .errors import (
    AlignmentError,
    DataError,
    DivergenceError,
    DofvoError,
    NumericalError,
)
from .euroc import (
    build_pairs,
    load_camera_index,
    load_groundtruth,
    load_image,
    read_relative_csv,
    sequence_paths,
    write_relative_csv,
)
from .frontend import (
    GEOMETRY_MODES,
    RawPoseRow,
    apply_gt_scale,
    process_pair,
    read_raw_csv,
    write_raw_csv,
)
from .metrics import (
    Trajectory,
    chain_relative,
    compute_ate,
    compute_rpe,
    emit_ablation_table,
    rpe_in_degrees,
)
from .mlp import init_branch
from .model_io import load_model, save_model
from .se3 import DoFVector, Transform
from .training import TrainingSample, train_branch, train_combined, write_curve_csv

DOF_NAMES = ("tx", "ty", "tz", "rx", "ry", "rz")


class UsageError(Exception):
    """Bad command line; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dofvo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dofvo {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--mode", choices=GEOMETRY_MODES, help="override geometry mode")

    p = sub.add_parser("init-config", help="write a documented config template")
    p.add_argument("path", nargs="?", default="dofvo.ini",
                   help="target file, or - for stdout")

    sub.add_parser("convert-gt", parents=[common],
                   help="absolute ground truth to per-pair relative CSV")

    sub.add_parser("run-vo", parents=[common],
                   help="run the classical frontend over all frame pairs")

    p = sub.add_parser("train", parents=[common],
                       help="fit per-DoF branches and the fusion head")
    p.add_argument("--raw", help="raw-pose CSV (default <out>/raw_poses.csv)")
    p.add_argument("--gt", help="relative ground-truth CSV (default <out>/gt_relative.csv)")

    p = sub.add_parser("infer", parents=[common],
                       help="apply a trained model to raw poses")
    p.add_argument("--model", help="model file (default <out>/model.odof)")
    p.add_argument("--raw", help="raw-pose CSV (default <out>/raw_poses.csv)")
    p.add_argument("--gt", help="optional relative ground-truth CSV; when given, "
                               "raw translations are rescaled to its step lengths first")

    p = sub.add_parser("eval", parents=[common], help="RPE/ATE reports")
    p.add_argument("--est", required=True, help="estimated raw-pose CSV")
    p.add_argument("--gt", required=True, help="relative ground-truth CSV")
    p.add_argument("--refined", help="optional refined-pose CSV for a second row")
    p.add_argument("--apply-gt-scale", action="store_true",
                   help="rescale --est translations by ground-truth step lengths "
                        "(for unit-scale frontend output); --refined is never rescaled")
    p.add_argument("--no-align", action="store_true",
                   help="skip the rigid alignment before ATE")
    p.add_argument("--units", choices=("rad", "deg"), default="rad",
                   help="rotation units in reports")

    p = sub.add_parser("ablate", parents=[common],
                       help="train and score once per activation kind")
    p.add_argument("--raw", help="raw-pose CSV (default <out>/raw_poses.csv)")
    p.add_argument("--gt", help="relative ground-truth CSV (default <out>/gt_relative.csv)")
    p.add_argument("--activations",
                   help="comma-separated kinds (default: all six)")
    p.add_argument("--no-align", action="store_true",
                   help="skip the rigid alignment before ATE")
    p.add_argument("--units", choices=("rad", "deg"), default="rad")

    p = sub.add_parser("bench", parents=[common],
                       help="stage latency and throughput measurement")
    p.add_argument("--pairs", type=int, default=200,
                   help="number of frame pairs to time (default 200)")
    p.add_argument("--model", help="model file for the infer stage "
                                   "(default: untrained model of the configured size)")
    return parser


def _resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=Path(args.out))
    if getattr(args, "mode", None):
        cfg = replace(cfg, frontend=replace(cfg.frontend, geometry_mode=args.mode))
    return cfg


def _out_dir(cfg: PipelineConfig) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir


def _manifest(cfg, command, stage_seconds, counts, outputs) -> RunManifest:
    return RunManifest(
        command=command,
        tool_version=TOOL_VERSION,
        seed=cfg.seed,
        config_hash=config_hash(cfg),
        config=config_snapshot(cfg),
        stage_seconds=stage_seconds,
        counts=counts,
        outputs=tuple(str(p) for p in outputs),
    )


def _stat_line(name: str, seconds: list) -> str:
    arr = np.asarray(seconds) * 1e3
    return (f"  {name:<10} mean {arr.mean():8.3f} ms   "
            f"median {np.median(arr):8.3f} ms   p95 {np.percentile(arr, 95):8.3f} ms")


def cmd_init_config(args) -> int:
    text = default_config_text()
    if args.path == "-":
        sys.stdout.write(text)
        return 0
    path = Path(args.path)
    path.write_text(text)
    print(f"wrote {path}")
    return 0


def cmd_convert_gt(args) -> int:
    cfg = _resolve_config(args)
    cfg.validate_dataset()
    index_csv, _, gt_csv = sequence_paths(cfg.dataset_root, cfg.camera_dir, cfg.gt_dir)
    frames = load_camera_index(index_csv)
    gt = load_groundtruth(gt_csv)
    assoc = build_pairs(frames, gt)
    out = _out_dir(cfg)
    target = out / "gt_relative.csv"
    write_relative_csv(
        target,
        [(p.frame_a.timestamp, p.frame_b.timestamp, p.gt_dof) for p in assoc.pairs],
    )
    print(f"{len(assoc.pairs)} pairs written to {target} ({assoc.dropped} dropped)")
    write_manifest(
        out / "convert_gt_manifest.json",
        _manifest(
            cfg, "convert-gt", {},
            {"frames": len(frames), "pairs": len(assoc.pairs), "dropped": assoc.dropped},
            [target],
        ),
    )
    return 0


def cmd_run_vo(args) -> int:
    cfg = _resolve_config(args)
    cfg.validate_dataset()
    index_csv, image_dir, _ = sequence_paths(cfg.dataset_root, cfg.camera_dir, cfg.gt_dir)
    frames = load_camera_index(index_csv)
    rows: list[RawPoseRow] = []
    stage_times: dict[str, list] = {}
    pair_times: list = []
    failures = 0
    img_b = load_image(Path(image_dir) / frames[0].image_filename)
    for i, (fa, fb) in enumerate(zip(frames, frames[1:])):
        img_a, img_b = img_b, load_image(Path(image_dir) / fb.image_filename)
        rng = np.random.default_rng(subseed(cfg.seed, f"pair:{i}"))
        t0 = time.perf_counter()
        dof, diag = process_pair(img_a, img_b, cfg.intrinsics, cfg.frontend, rng)
        pair_times.append(time.perf_counter() - t0)
        for stage, dt in diag.stage_seconds.items():
            stage_times.setdefault(stage, []).append(dt)
        failures += diag.failed
        rows.append(RawPoseRow(fa.timestamp, fb.timestamp, dof, diag.n_inliers, diag.failed))
    out = _out_dir(cfg)
    target = out / "raw_poses.csv"
    write_raw_csv(target, rows)
    print(f"{len(rows)} pairs written to {target} "
          f"({failures} failed, mode {cfg.frontend.geometry_mode})")
    print("stage timings:")
    for stage, values in stage_times.items():
        print(_stat_line(stage, values))
    print(_stat_line("pair", pair_times))
    summary = {
        stage: {"mean_s": float(np.mean(v)), "median_s": float(np.median(v)),
                "p95_s": float(np.percentile(v, 95))}
        for stage, v in {**stage_times, "pair": pair_times}.items()
    }
    write_manifest(
        out / "run_vo_manifest.json",
        _manifest(cfg, "run-vo", summary,
                  {"frames": len(frames), "pairs": len(rows), "failures": failures},
                  [target]),
    )
    return 0


def _aligned_samples(raw_rows, gt_rows):
    """Join raw frontend rows with relative ground truth by timestamps.

    Returns (samples, timestamps) where timestamps holds each pair's
    (ts_a, ts_b). Raw translations are rescaled to the ground-truth step
    length: the frontend only knows the direction.
    """
    if len(raw_rows) != len(gt_rows):
        raise AlignmentError(f"{len(raw_rows)} raw rows vs {len(gt_rows)} ground-truth rows")
    samples = []
    stamps = []
    for i, (row, (ts_a, ts_b, gt_dof)) in enumerate(zip(raw_rows, gt_rows)):
        if (row.timestamp_a, row.timestamp_b) != (ts_a, ts_b):
            raise AlignmentError(
                f"row {i}: raw pair ({row.timestamp_a}, {row.timestamp_b}) vs "
                f"ground truth ({ts_a}, {ts_b})"
            )
        samples.append(
            TrainingSample(apply_gt_scale(row.dof, gt_dof), gt_dof, failed=row.failed)
        )
        stamps.append((ts_a, ts_b))
    return samples, stamps


def _val_tail(samples, fraction: float):
    """The contiguous validation tail over non-failed samples, as used in training."""
    usable = [s for s in samples if not s.failed]
    n_val = int(round(len(usable) * fraction))
    return usable[-n_val:] if n_val else usable


def _baseline_rmse(tail, dof: int) -> float:
    err = np.array([s.input[dof] - s.target[dof] for s in tail])
    return float(np.sqrt(np.mean(err * err)))


def _train_all_branches(samples, cfg: PipelineConfig, activation=None):
    """Six branches plus fusion head with per-consumer sub-seeds."""
    base = cfg.train if activation is None else replace(cfg.train, activation=activation)
    branches = []
    curves = []
    for dof in range(6):
        branch_cfg = replace(base, seed=subseed(cfg.seed, f"branch:{dof}"))
        branch, curve = train_branch(samples, dof, branch_cfg)
        branches.append(branch)
        curves.append(curve)
    model = combine_branches(branches)
    fusion_cfg = replace(base, seed=subseed(cfg.seed, "fusion"))
    refined, fusion_curve = train_combined(model, samples, fusion_cfg)
    return refined, curves, fusion_curve


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    raw_rows = read_raw_csv(args.raw or out / "raw_poses.csv")
    gt_rows = read_relative_csv(args.gt or out / "gt_relative.csv")
    samples, _ = _aligned_samples(raw_rows, gt_rows)

    model, curves, fusion_curve = _train_all_branches(samples, cfg)
    tail = _val_tail(samples, cfg.train.val_fraction)
    outputs = []
    print("per-DoF validation RMSE (baseline -> trained):")
    for dof in range(6):
        curve_path = out / f"curve_{DOF_NAMES[dof]}.csv"
        write_curve_csv(curve_path, curves[dof])
        outputs.append(curve_path)
        before = _baseline_rmse(tail, dof)
        after = float(np.sqrt(min(pt[2] for pt in curves[dof])))
        if before > 1e-9:
            change = 100.0 * (after - before) / before
            print(f"  {DOF_NAMES[dof]}: {before:.6f} -> {after:.6f} ({change:+.1f}%)")
        else:
            print(f"  {DOF_NAMES[dof]}: {before:.6f} -> {after:.6f}")
    fusion_path = out / "curve_fusion.csv"
    write_curve_csv(fusion_path, fusion_curve)
    outputs.append(fusion_path)
    print(f"fusion validation loss: {fusion_curve[0][2]:.6g} -> "
          f"{min(pt[2] for pt in fusion_curve):.6g}")

    model_path = out / "model.odof"
    save_model(
        model, model_path,
        meta={
            "seed": cfg.seed,
            "activation": cfg.train.activation.name.lower(),
            "config_hash": config_hash(cfg),
            "samples": len(samples),
        },
    )
    outputs.append(model_path)
    print(f"model written to {model_path}")
    write_manifest(
        out / "train_manifest.json",
        _manifest(cfg, "train", {},
                  {"samples": len(samples),
                   "failed_samples": sum(s.failed for s in samples)},
                  outputs),
    )
    return 0


def cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    model = load_model(args.model or out / "model.odof")
    raw_rows = read_raw_csv(args.raw or out / "raw_poses.csv")
    if args.gt:
        gt_rows = read_relative_csv(args.gt)
        samples, _ = _aligned_samples(raw_rows, gt_rows)
        inputs = [s.input for s in samples]
    else:
        inputs = [row.dof.as_array() for row in raw_rows]

    refined_rows = []
    latencies = []
    for row, inp in zip(raw_rows, inputs):
        if row.failed:
            refined_rows.append(row)
            continue
        t0 = time.perf_counter()
        refined = infer(model, DoFVector.from_array(inp))
        latencies.append(time.perf_counter() - t0)
        refined_rows.append(
            RawPoseRow(row.timestamp_a, row.timestamp_b, refined, row.inliers, False)
        )
    target = out / "refined_poses.csv"
    write_raw_csv(target, refined_rows)
    print(f"{len(refined_rows)} pairs written to {target}")
    if latencies:
        print(_stat_line("infer", latencies))
    stats = {}
    if latencies:
        stats = {"infer": {"mean_s": float(np.mean(latencies)),
                           "median_s": float(np.median(latencies)),
                           "p95_s": float(np.percentile(latencies, 95))}}
    write_manifest(
        out / "infer_manifest.json",
        _manifest(cfg, "infer", stats,
                  {"pairs": len(refined_rows), "skipped_failed": len(refined_rows) - len(latencies)},
                  [target]),
    )
    return 0


def _rows_to_dofs(rows, gt_rows, rescale: bool):
    dofs = []
    for row, (_, _, gt_dof) in zip(rows, gt_rows):
        dofs.append(apply_gt_scale(row.dof, gt_dof) if rescale else row.dof)
    return dofs


def _check_row_alignment(rows, gt_rows):
    if len(rows) != len(gt_rows):
        raise AlignmentError(f"{len(rows)} estimate rows vs {len(gt_rows)} ground-truth rows")
    for i, (row, (ts_a, ts_b, _)) in enumerate(zip(rows, gt_rows)):
        if (row.timestamp_a, row.timestamp_b) != (ts_a, ts_b):
            raise AlignmentError(
                f"row {i}: estimate pair ({row.timestamp_a}, {row.timestamp_b}) vs "
                f"ground truth ({ts_a}, {ts_b})"
            )


def _pose_timestamps(gt_rows):
    """Chain timestamps from pair stamps; consecutive pairs must touch."""
    stamps = [gt_rows[0][0]]
    for i, (ts_a, ts_b, _) in enumerate(gt_rows):
        if ts_a != stamps[-1]:
            raise AlignmentError(
                f"pair {i} starts at {ts_a} but the previous pair ended at {stamps[-1]}"
            )
        stamps.append(ts_b)
    return stamps


def _chained_ate(est_dofs, gt_dofs, failed, gt_rows, align: bool):
    """ATE between trajectories chained from identity at the pair timestamps.

    Failed pairs contribute identity motion to the estimated chain; the
    flag only excludes them from RPE, a chain has no gaps to skip.
    """
    stamps = _pose_timestamps(gt_rows)
    est_chain = [DoFVector.zero() if bad else d for d, bad in zip(est_dofs, failed)]
    est_traj = chain_relative(Transform.identity(), est_chain, stamps)
    gt_traj = chain_relative(Transform.identity(), gt_dofs, stamps)
    return compute_ate(est_traj, gt_traj, align=align)


def _report_units(report, units: str):
    return rpe_in_degrees(report) if units == "deg" else report


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    gt_rows = read_relative_csv(args.gt)
    gt_dofs = [dof for _, _, dof in gt_rows]
    align = not args.no_align

    est_rows = read_raw_csv(args.est)
    _check_row_alignment(est_rows, gt_rows)
    est_failed = [row.failed for row in est_rows]
    est_dofs = _rows_to_dofs(est_rows, gt_rows, args.apply_gt_scale)

    rpe_rows = {"raw": compute_rpe(est_dofs, gt_dofs, failed=est_failed)}
    ate_rows = {"raw": _chained_ate(est_dofs, gt_dofs, est_failed, gt_rows, align)}

    if args.refined:
        ref_rows = read_raw_csv(args.refined)
        _check_row_alignment(ref_rows, gt_rows)
        ref_failed = [row.failed for row in ref_rows]
        ref_dofs = [row.dof for row in ref_rows]
        rpe_rows["refined"] = compute_rpe(ref_dofs, gt_dofs, failed=ref_failed)
        ate_rows["refined"] = _chained_ate(ref_dofs, gt_dofs, ref_failed, gt_rows, align)

    rpe_csv, rpe_text = emit_ablation_table(
        {k: _report_units(v, args.units) for k, v in rpe_rows.items()}
    )
    ate_csv, ate_text = emit_ablation_table(ate_rows)

    outputs = []
    for name, blob in (("eval_rpe.csv", rpe_csv), ("eval_rpe.txt", rpe_text),
                       ("eval_ate.csv", ate_csv), ("eval_ate.txt", ate_text)):
        path = out / name
        path.write_text(blob)
        outputs.append(path)
    rot_unit = "degrees" if args.units == "deg" else "radians"
    print(f"RPE (translations in meters, rotations in {rot_unit}):")
    print(rpe_text, end="")
    print(f"ATE (meters, alignment {'on' if align else 'off'}):")
    print(ate_text, end="")
    if args.refined:
        raw, ref = rpe_rows["raw"], rpe_rows["refined"]
        rpe_change = 100.0 * (ref.rpe_trans_mean - raw.rpe_trans_mean) / raw.rpe_trans_mean
        ate_change = 100.0 * (ate_rows["refined"].ate_mean - ate_rows["raw"].ate_mean) \
            / ate_rows["raw"].ate_mean
        print(f"refinement RMSE change: RPE Trans. {rpe_change:+.2f}%, "
              f"Mean ATE {ate_change:+.2f}%")
    write_manifest(
        out / "eval_manifest.json",
        _manifest(cfg, "eval", {},
                  {"pairs": len(gt_rows),
                   "excluded_raw": rpe_rows["raw"].n_excluded},
                  outputs),
    )
    return 0


def cmd_ablate(args) -> int:
    if args.activations:
        try:
            kinds = [kind_from_name(n) for n in args.activations.split(",") if n.strip()]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if not kinds:
            raise UsageError("--activations lists no kinds")
    else:
        kinds = list(ALL_KINDS)

    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    raw_rows = read_raw_csv(args.raw or out / "raw_poses.csv")
    gt_rows = read_relative_csv(args.gt or out / "gt_relative.csv")
    samples, _ = _aligned_samples(raw_rows, gt_rows)
    align = not args.no_align

    n_tail = len(_val_tail(samples, cfg.train.val_fraction))
    tail_samples = samples[-n_tail:]
    tail_rows = gt_rows[-n_tail:]
    tail_gt = [dof for _, _, dof in tail_rows]

    rpe_reports = {}
    ate_reports = {}
    for kind in kinds:
        label = KIND_LABELS[kind]
        try:
            model, _, _ = _train_all_branches(samples, cfg, activation=kind)
        except DivergenceError as exc:
            print(f"{label}: diverged ({exc}); recorded as nan row", file=sys.stderr)
            rpe_reports[label] = None
            ate_reports[label] = None
            continue
        refined = [
            infer(model, DoFVector.from_array(s.input)) for s in tail_samples
        ]
        failed = [s.failed for s in tail_samples]
        report = _report_units(compute_rpe(refined, tail_gt, failed=failed), args.units)
        rpe_reports[label] = report
        ate_reports[label] = _chained_ate(refined, tail_gt, failed, tail_rows, align)
        print(f"{label}: RPE Trans. {report.rpe_trans_mean:.4f}")

    if all(r is None for r in rpe_reports.values()):
        raise DivergenceError("every activation kind diverged", epoch=0)
    rpe_csv, rpe_text = emit_ablation_table(rpe_reports)
    ate_csv, ate_text = emit_ablation_table(ate_reports)
    outputs = []
    for name, blob in (("ablation_rpe.csv", rpe_csv), ("ablation_rpe.txt", rpe_text),
                       ("ablation_ate.csv", ate_csv), ("ablation_ate.txt", ate_text)):
        path = out / name
        path.write_text(blob)
        outputs.append(path)
    print(rpe_text, end="")
    print(ate_text, end="")
    write_manifest(
        out / "ablate_manifest.json",
        _manifest(cfg, "ablate", {},
                  {"pairs": len(samples), "held_out": n_tail,
                   "activations": len(kinds)},
                  outputs),
    )
    return 0


def cmd_bench(args) -> int:
    if args.pairs < 1:
        raise UsageError("--pairs must be positive")
    cfg = _resolve_config(args)
    out = _out_dir(cfg)

    frames = _bench_frames(cfg, args.pairs)
    if args.model:
        model = load_model(args.model)
    else:
        rng = np.random.default_rng(subseed(cfg.seed, "bench-model"))
        model = combine_branches(
            [init_branch(rng, d, cfg.train.activation, cfg.train.hidden) for d in range(6)]
        )

    stage_times: dict[str, list] = {}
    pair_times: list = []
    failures = 0
    for i in range(len(frames) - 1):
        rng = np.random.default_rng(subseed(cfg.seed, f"bench:{i}"))
        t0 = time.perf_counter()
        dof, diag = process_pair(frames[i], frames[i + 1], _bench_intrinsics(cfg), cfg.frontend, rng)
        elapsed = time.perf_counter() - t0
        for stage, dt in diag.stage_seconds.items():
            stage_times.setdefault(stage, []).append(dt)
        failures += diag.failed
        t0 = time.perf_counter()
        infer(model, dof)
        infer_dt = time.perf_counter() - t0
        stage_times.setdefault("infer", []).append(infer_dt)
        pair_times.append(elapsed + infer_dt)

    print(f"{len(pair_times)} pairs, mode {cfg.frontend.geometry_mode}, "
          f"{failures} failures")
    for stage, values in stage_times.items():
        print(_stat_line(stage, values))
    print(_stat_line("pair", pair_times))
    fps = 1.0 / float(np.median(pair_times))
    in_band = "inside" if 35.0 <= fps <= 64.0 else "outside"
    print(f"throughput: {fps:.1f} pairs/s ({in_band} the 35-64 fps real-time band)")
    summary = {
        stage: {"mean_s": float(np.mean(v)), "median_s": float(np.median(v)),
                "p95_s": float(np.percentile(v, 95))}
        for stage, v in {**stage_times, "pair": pair_times}.items()
    }
    manifest_path = out / "bench_manifest.json"
    write_manifest(
        manifest_path,
        _manifest(cfg, "bench",
                  {**summary, "fps": fps,
                   "hardware": f"{platform.platform()} / {platform.processor() or 'unknown cpu'}"},
                  {"pairs": len(pair_times), "failures": failures},
                  []),
    )
    print(f"manifest written to {manifest_path}")
    return 0


def _bench_uses_dataset(cfg: PipelineConfig) -> bool:
    try:
        cfg.validate_dataset()
        return True
    except DofvoError:
        return False


def _bench_intrinsics(cfg: PipelineConfig):
    if _bench_uses_dataset(cfg):
        return cfg.intrinsics
    from .synth import DEFAULT_INTRINSICS

    return DEFAULT_INTRINSICS


def _bench_frames(cfg: PipelineConfig, n_pairs: int):
    """Dataset frames when available, otherwise rendered synthetic views."""
    if _bench_uses_dataset(cfg):
        index_csv, image_dir, _ = sequence_paths(cfg.dataset_root, cfg.camera_dir, cfg.gt_dir)
        records = load_camera_index(index_csv)[: n_pairs + 1]
        return [load_image(Path(image_dir) / r.image_filename) for r in records]

    from .synth import camera_walk, make_blob_world, render_frame

    rng = np.random.default_rng(subseed(cfg.seed, "bench-scene"))
    world = make_blob_world(rng)
    poses = camera_walk(rng, n_pairs + 1)
    return [render_frame(world, pose) for pose in poses]


_COMMANDS = {
    "init-config": cmd_init_config,
    "convert-gt": cmd_convert_gt,
    "run-vo": cmd_run_vo,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing command")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
