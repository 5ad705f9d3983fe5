"""Plain-text tables and CSV writers for evaluation and loss runs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .imgio import LANDMARK_NAMES, STRUCTURE_NAMES
from .metrics import EvalRecord, EvalSummary, MeanStd, TTestResult

STRUCTURE_TITLES = {
    "flat_ilium": "Flat Ilium",
    "lower_limb": "Lower Limb",
    "labrum": "Labrum",
    "co_junction": "CO Junction",
}
LANDMARK_TITLES = {
    "p1_bony_rim": "Bony Rim",
    "p2_lower_limb": "Lower Limb Point",
    "p3_labrum_mid": "Midpoint of the Labrum",
}
ROW_LABEL = "hipgraf"


def fmt(value: Optional[float], digits: int = 3) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}f}"


def csv_num(value: Optional[float]) -> str:
    return fmt(value, 6) if value is not None else ""


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _p_text(tt: Optional[TTestResult]) -> str:
    if tt is None:
        return "(p=n/a)"
    return "(p<0.01)" if tt.p < 0.01 else f"(p={tt.p:.3f})"


def _ms(m: MeanStd) -> tuple[str, str]:
    return fmt(m.mean), f"({fmt(m.std)})"


def _table(title: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    rule = "-" * (sum(widths) + 3 * (len(widths) - 1))
    lines = [title, rule, "   ".join(h.ljust(w) for h, w in zip(header, widths)), rule]
    lines += ["   ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.append(rule)
    return "\n".join(lines) + "\n"


def render_report(summary: EvalSummary, success_deg: float, poor_deg: float) -> str:
    a, b = summary.alpha, summary.beta
    parts = [f"Scenes evaluated: {summary.n}\n"]
    parts.append(_table(
        "Mean absolute difference and standard deviation of alpha and beta angles (deg)",
        ["", "Angle alpha (std) (p-value)", "Angle beta (std) (p-value)"],
        [[ROW_LABEL,
          f"{fmt(a.error.mean)} ({fmt(a.error.std)}) {_p_text(a.ttest)}",
          f"{fmt(b.error.mean)} ({fmt(b.error.std)}) {_p_text(b.ttest)}"]],
    ))
    parts.append(_table(
        "Angle estimate quality",
        ["", f"Success (<{success_deg:g} deg, %)", f"Poor (>{poor_deg:g} deg, %)", "Pearson r"],
        [["alpha", fmt(100 * a.success_rate), fmt(100 * a.poor_rate), fmt(a.pearson)],
         ["beta", fmt(100 * b.success_rate), fmt(100 * b.poor_rate), fmt(b.pearson)]],
    ))
    mc = summary.misclassification
    parts.append(_table(
        "Misclassification rate of the hip joint category (%)",
        ["", "Overall errors", "FN", "FP"],
        [[ROW_LABEL, fmt(100 * mc["overall"]), fmt(100 * mc["false_negative"]),
          fmt(100 * mc["false_positive"])]],
    ))
    lm = [_ms(summary.landmark[k]) for k in LANDMARK_NAMES]
    parts.append(_table(
        "Mean (and standard deviation) distance of three landmarks (pixel)",
        ["Mean distance"] + [LANDMARK_TITLES[k] + " (std)" for k in LANDMARK_NAMES],
        [[ROW_LABEL] + [m for m, _ in lm], [""] + [s for _, s in lm]],
    ))
    for title, table in (
        ("Overall segmentation evaluation by Dice similarity coefficient (DSC)", summary.dsc),
        ("Edge accuracy evaluation by Hausdorff distance (HD) (pixel)", summary.hd),
    ):
        cells = [_ms(table[s]) for s in STRUCTURE_NAMES]
        parts.append(_table(
            title,
            [""] + [STRUCTURE_TITLES[s] + " (std)" for s in STRUCTURE_NAMES],
            [[ROW_LABEL] + [m for m, _ in cells], [""] + [s for _, s in cells]],
        ))
    return "\n".join(parts)


def _clean(obj: Any) -> Any:
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else round(obj, 9)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def summary_json(summary: EvalSummary) -> str:
    data = asdict(summary)
    for key in ("alpha", "beta"):
        data[key].pop("cdf")
    return json.dumps(_clean(data), indent=2, sort_keys=True) + "\n"


RECORD_HEADER = (
    ["scene_id", "alpha_pred", "alpha_true", "alpha_error", "beta_pred", "beta_true",
     "beta_error", "predicted_type", "true_type"]
    + [f"dsc_{s}" for s in STRUCTURE_NAMES]
    + [f"hd_{s}" for s in STRUCTURE_NAMES]
    + [f"dist_{k}" for k in LANDMARK_NAMES]
    + ["warnings"]
)


def record_row(r: EvalRecord) -> list[str]:
    return (
        [r.scene_id, csv_num(r.alpha_pred), csv_num(r.alpha_true), csv_num(r.alpha_error),
         csv_num(r.beta_pred), csv_num(r.beta_true), csv_num(r.beta_error),
         r.predicted_type, r.true_type]
        + [csv_num(r.dsc.get(s)) for s in STRUCTURE_NAMES]
        + [csv_num(r.hd.get(s)) for s in STRUCTURE_NAMES]
        + [csv_num(r.landmark_dist.get(k)) for k in LANDMARK_NAMES]
        + ["; ".join(r.warnings)]
    )


def write_cdf(path: Path, cdf: Sequence[tuple[float, float]]) -> None:
    write_csv(path, ["threshold", "fraction"], [[csv_num(t), csv_num(f)] for t, f in cdf])
