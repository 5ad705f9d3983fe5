"""Command line front end: ``hipgraf {measure,evaluate,losses,phantom}``.

Exit status is 0 on full success, 1 when some scenes failed, 2 on a fatal
error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import report
from .curvefit import FitConfig, ss_score
from .errors import EmptyEvaluationError, HipGrafError
from .imgio import (
    LANDMARK_NAMES,
    STRUCTURE_NAMES,
    BinaryMask,
    GroundTruth,
    SceneRecord,
    load_manifest,
    write_manifest,
)
from .measure import (
    LossWeights,
    MeasureConfig,
    MeasurementReport,
    br_distance,
    classify,
    composite_score,
    infer_landmarks_from_masks,
    landmark_ce,
    measure_scene,
)
from .metrics import EvalRecord, Thresholds, dsc, hausdorff, landmark_error, summarize
from .phantom import PhantomSpec, generate_batch

log = logging.getLogger("hipgraf")

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    manifest: Optional[Path] = None
    out: Path = Path("out")
    fit: FitConfig = field(default_factory=FitConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    success_deg: float = 5.0
    poor_deg: float = 10.0
    graf_cutoff: float = 60.0
    workers: int = 1
    std_mode: str = "population"
    angle_truth: str = "manifest"

    def __post_init__(self) -> None:
        for name in ("success_deg", "poor_deg", "graf_cutoff"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def measure_config(self) -> MeasureConfig:
        return MeasureConfig(graf_cutoff=self.graf_cutoff)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Order-preserving map, optionally over a process pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def _to_image_frame(record: SceneRecord, x: float) -> float:
    return record.width - 1 - x if record.laterality == "right" else x


# -- measure -------------------------------------------------------------------

MEASURE_HEADER = ["scene_id", "status", "alpha", "beta", "graf_type", "standard_plane",
                  "p1_x", "p1_y", "p2_x", "p2_y", "p3_x", "p3_y", "warnings", "error"]


def _measure_one(args: tuple[SceneRecord, MeasureConfig]) -> list[str]:
    record, cfg = args
    try:
        rep = measure_scene(record.structures, record.predicted_landmarks, cfg)
    except HipGrafError as exc:
        return [record.scene_id, "error"] + [""] * 11 + [f"{type(exc).__name__}: {exc}"]
    coords = []
    for _, p in rep.landmarks_used.items():
        coords += [report.csv_num(_to_image_frame(record, p.x)), report.csv_num(p.y)]
    return ([record.scene_id, "ok", report.csv_num(rep.alpha), report.csv_num(rep.beta),
             rep.graf_type, str(rep.standard_plane).lower()]
            + coords + ["; ".join(rep.warnings), ""])


def cmd_measure(config: RunConfig) -> int:
    records = load_manifest(config.manifest, workers=config.workers)
    rows = _map(_measure_one, [(r, config.measure_config) for r in records], config.workers)
    config.out.mkdir(parents=True, exist_ok=True)
    report.write_csv(config.out / "measurements.csv", MEASURE_HEADER, rows)
    failed = sum(row[1] != "ok" for row in rows)
    log.info("measured %d scenes, %d failed", len(rows), failed)
    return EXIT_PARTIAL if failed else EXIT_OK


# -- evaluate ----------------------------------------------------------------

def _truth_angles(gt: GroundTruth, mode: str, cfg: MeasureConfig) -> tuple[float, float]:
    if mode == "manifest" and gt.alpha is not None and gt.beta is not None:
        return gt.alpha, gt.beta
    ref = measure_scene(gt.structures, gt.landmarks, cfg)
    return ref.alpha, ref.beta


def _structure_scores(pred: Optional[BinaryMask], truth: Optional[BinaryMask],
                      shape: tuple[int, int]) -> tuple[Optional[float], Optional[float]]:
    if pred is None and truth is None:
        return None, None
    p = pred if pred is not None else BinaryMask.zeros(shape[1], shape[0])
    t = truth if truth is not None else BinaryMask.zeros(shape[1], shape[0])
    if p.is_empty and t.is_empty:
        return None, None
    d = dsc(p, t)
    h = hausdorff(p, t) if not (p.is_empty or t.is_empty) else None
    return d, h


def evaluate_record(record: SceneRecord, config: RunConfig) -> EvalRecord:
    gt = record.ground_truth
    cfg = config.measure_config
    rep: MeasurementReport = measure_scene(record.structures, record.predicted_landmarks, cfg)
    alpha_true, beta_true = _truth_angles(gt, config.angle_truth, cfg)
    shape = (record.height, record.width)
    dscs, hds = {}, {}
    for name in STRUCTURE_NAMES:
        dscs[name], hds[name] = _structure_scores(record.structures.get(name),
                                                  gt.structures.get(name), shape)
    dists = {}
    for name in LANDMARK_NAMES:
        p, t = rep.landmarks_used.get(name), gt.landmarks.get(name)
        dists[name] = landmark_error(p, t) if (p is not None and t is not None) else None
    return EvalRecord(
        scene_id=record.scene_id, dsc=dscs, hd=hds, landmark_dist=dists,
        alpha_pred=rep.alpha, alpha_true=alpha_true, beta_pred=rep.beta, beta_true=beta_true,
        predicted_type=rep.graf_type, true_type=classify(alpha_true, config.graf_cutoff),
        warnings=rep.warnings,
    )


def _evaluate_one(args: tuple[SceneRecord, RunConfig]) -> tuple[str, Any]:
    record, config = args
    if record.ground_truth is None:
        return "skipped", f"{record.scene_id}: no ground truth"
    try:
        return "ok", evaluate_record(record, config)
    except HipGrafError as exc:
        return "error", f"{record.scene_id}: {type(exc).__name__}: {exc}"


def cmd_evaluate(config: RunConfig) -> int:
    records = load_manifest(config.manifest, workers=config.workers)
    results = _map(_evaluate_one, [(r, config) for r in records], config.workers)
    evals = [val for status, val in results if status == "ok"]
    failed = [val for status, val in results if status == "error"]
    for status, val in results:
        if status != "ok":
            log.warning("%s %s", status, val)
    if not evals:
        raise EmptyEvaluationError("no scene could be evaluated")

    summary = summarize(evals, Thresholds(config.success_deg, config.poor_deg), config.std_mode)
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "eval_records.csv", report.RECORD_HEADER,
                     [report.record_row(r) for r in evals])
    (out / "summary.json").write_text(report.summary_json(summary), encoding="utf-8")
    (out / "report.txt").write_text(
        report.render_report(summary, config.success_deg, config.poor_deg), encoding="utf-8")
    report.write_cdf(out / "cdf_alpha.csv", summary.alpha.cdf)
    report.write_cdf(out / "cdf_beta.csv", summary.beta.cdf)
    if failed:
        report.write_csv(out / "failures.csv", ["detail"], [[f] for f in failed])
    return EXIT_PARTIAL if failed else EXIT_OK


# -- losses ------------------------------------------------------------------

LOSS_HEADER = (["scene_id", "status"] + [f"ss_{s}" for s in STRUCTURE_NAMES]
               + ["l_ss", "l_br", "l_landmark", "l_maskrcnn", "l_total", "error"])


def scene_losses(record: SceneRecord, config: RunConfig) -> dict[str, Any]:
    gt = record.ground_truth
    if gt is None:
        raise EmptyEvaluationError(f"{record.scene_id}: losses need ground-truth masks")
    ss = ss_score(record.structures, gt.structures, config.fit)

    derived, _ = infer_landmarks_from_masks(record.structures)
    pk = record.predicted_landmarks.p1_bony_rim if record.predicted_landmarks else None
    if pk is None:
        raise EmptyEvaluationError(f"{record.scene_id}: BR distance needs a predicted bony rim")
    l_br = br_distance(derived.p1_bony_rim, pk)

    l_lm = None
    labels, probs = record.extras.get("lm_labels"), record.extras.get("lm_probs")
    if labels is not None and probs is not None:
        l_lm = sum(landmark_ce(y, p) for y, p in zip(labels, probs))
    l_mask = float(record.extras.get("maskrcnn_loss", 0.0))
    total = composite_score(l_mask, l_lm or 0.0, l_br, ss.total, config.weights)
    return {"ss": ss, "l_ss": ss.total, "l_br": l_br, "l_landmark": l_lm,
            "l_maskrcnn": l_mask, "l_total": total}


def _losses_one(args: tuple[SceneRecord, RunConfig]) -> tuple[str, Any]:
    record, config = args
    try:
        return "ok", scene_losses(record, config)
    except HipGrafError as exc:
        return "error", f"{type(exc).__name__}: {exc}"


def cmd_losses(config: RunConfig) -> int:
    records = load_manifest(config.manifest, workers=config.workers)
    results = _map(_losses_one, [(r, config) for r in records], config.workers)
    rows = []
    sums = {"l_ss": 0.0, "l_br": 0.0, "l_landmark": 0.0, "l_maskrcnn": 0.0, "l_total": 0.0}
    per_struct = {s: 0.0 for s in STRUCTURE_NAMES}
    any_lm = False
    for rec, (status, val) in zip(records, results):
        if status != "ok":
            rows.append([rec.scene_id, "error"] + [""] * 9 + [val])
            continue
        for s in STRUCTURE_NAMES:
            per_struct[s] += val["ss"].per_structure[s] or 0.0
        for k in sums:
            if val[k] is not None:
                sums[k] += val[k]
        any_lm = any_lm or val["l_landmark"] is not None
        rows.append([rec.scene_id, "ok"]
                    + [report.csv_num(val["ss"].per_structure[s]) for s in STRUCTURE_NAMES]
                    + [report.csv_num(val[k]) for k in sums] + [""])
    n_ok = sum(status == "ok" for status, _ in results)
    if n_ok:
        rows.append(["__batch__", "ok"]
                    + [report.csv_num(per_struct[s]) for s in STRUCTURE_NAMES]
                    + [report.csv_num(sums[k] if (k != "l_landmark" or any_lm) else None)
                       for k in sums] + [""])
    config.out.mkdir(parents=True, exist_ok=True)
    report.write_csv(config.out / "losses.csv", LOSS_HEADER, rows)
    w = config.weights
    text = (f"Scenes: {len(records)} ({n_ok} scored)\n"
            f"Weights: lambda1={w.lambda1:g} lambda2={w.lambda2:g} "
            f"lambda3={w.lambda3:g} lambda4={w.lambda4:g}\n"
            f"Batch L_SS:       {report.fmt(sums['l_ss'])}\n"
            f"Batch L_BR:       {report.fmt(sums['l_br'])}\n"
            f"Batch L_landmark: {report.fmt(sums['l_landmark']) if any_lm else 'n/a'}\n"
            f"Batch L_maskrcnn: {report.fmt(sums['l_maskrcnn'])}\n"
            f"Batch L:          {report.fmt(sums['l_total'])}\n")
    (config.out / "losses_report.txt").write_text(text, encoding="utf-8")
    return EXIT_PARTIAL if n_ok < len(records) else EXIT_OK


# -- phantom -----------------------------------------------------------------

def cmd_phantom(args: argparse.Namespace) -> int:
    template = PhantomSpec(
        width=args.canvas, height=args.canvas,
        edge_jitter_px=args.jitter, dropout_fraction=args.dropout,
        landmark_jitter_px=args.landmark_jitter, rotation_deg=args.rotation,
        fused_structures=args.fused,
    )
    scenes = generate_batch(args.n, (args.alpha_min, args.alpha_max),
                            (args.beta_min, args.beta_max), args.seed, template)
    records = [s.to_record() for s in scenes]
    if args.self_eval:
        records = [replace(r, structures=r.ground_truth.structures,
                           predicted_landmarks=r.ground_truth.landmarks) for r in records]
    out = Path(args.out)
    write_manifest(records, out / "manifest.jsonl", args.mask_format)
    rows = [[s.scene_id, report.fmt(s.alpha_true), report.fmt(s.beta_true),
             classify(s.alpha_true, args.graf_cutoff)] for s in scenes]
    report.write_csv(out / "truth.csv", ["scene_id", "alpha", "beta", "graf_type"], rows)
    print(f"{'scene_id':<14}{'alpha':>9}{'beta':>9}  type")
    for sid, a, b, t in rows:
        print(f"{sid:<14}{a:>9}{b:>9}  {t}")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------

def _common(p: argparse.ArgumentParser, manifest: bool = True) -> None:
    if manifest:
        p.add_argument("--manifest", required=True, type=Path, help="JSON-lines scene manifest")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--xi", type=float, default=1e-3, help="ridge weight for cubic fits")
    for i, default in enumerate((1.0, 0.5, 0.5, 1.0), start=1):
        p.add_argument(f"--lambda{i}", type=float, default=default)
    p.add_argument("--success-deg", type=float, default=5.0)
    p.add_argument("--poor-deg", type=float, default=10.0)
    p.add_argument("--graf-cutoff", type=float, default=60.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--std-mode", choices=("population", "sample"), default="population")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hipgraf", description="Graf hip angle measurement and evaluation for segmentation masks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("measure", help="measure alpha/beta for every scene"))
    ev = sub.add_parser("evaluate", help="compare measurements against ground truth")
    _common(ev)
    ev.add_argument("--angle-truth", choices=("manifest", "labels"), default="manifest",
                    help="take reference angles from gt.alpha/gt.beta, or measure them "
                         "from the ground-truth masks and landmarks")
    _common(sub.add_parser("losses", help="shape-similarity, bony-rim and composite scores"))

    ph = sub.add_parser("phantom", help="write a synthetic dataset and manifest")
    _common(ph, manifest=False)
    ph.add_argument("--n", type=int, default=100)
    ph.add_argument("--alpha-min", type=float, default=45.0)
    ph.add_argument("--alpha-max", type=float, default=75.0)
    ph.add_argument("--beta-min", type=float, default=35.0)
    ph.add_argument("--beta-max", type=float, default=80.0)
    ph.add_argument("--canvas", type=int, default=512)
    ph.add_argument("--jitter", type=float, default=0.0, help="edge jitter amplitude (px)")
    ph.add_argument("--landmark-jitter", type=float, default=None,
                    help="std of predicted-landmark noise (px); defaults to --jitter")
    ph.add_argument("--dropout", type=float, default=0.0)
    ph.add_argument("--rotation", type=float, default=0.0)
    ph.add_argument("--fused", action="store_true", help="connect ilium and lower limb")
    ph.add_argument("--mask-format", choices=("png", "rle"), default="png")
    ph.add_argument("--self-eval", action="store_true",
                    help="write predictions identical to the ground truth")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        manifest=getattr(args, "manifest", None),
        out=args.out,
        fit=FitConfig(xi=args.xi),
        weights=LossWeights(args.lambda1, args.lambda2, args.lambda3, args.lambda4),
        success_deg=args.success_deg,
        poor_deg=args.poor_deg,
        graf_cutoff=args.graf_cutoff,
        workers=args.workers,
        std_mode=args.std_mode,
        angle_truth=getattr(args, "angle_truth", "manifest"),
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "phantom":
            return cmd_phantom(args)
        config = config_from_args(args)
        return {"measure": cmd_measure, "evaluate": cmd_evaluate,
                "losses": cmd_losses}[args.command](config)
    except (HipGrafError, OSError, ValueError) as exc:
        print(f"hipgraf: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
