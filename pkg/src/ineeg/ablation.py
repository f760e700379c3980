"""Exhaustive (model, window, feature mask) grid and its summary tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .dataset import (
    CANONICAL_WINDOWS,
    Condition,
    FeatureMask,
    SkippedSubjectWarning,
    assemble_from_windows,
    enumerate_feature_masks,
    stack_windows,
)
from .evaluation import DEFAULT_K, DEFAULT_REPEATS, METRICS, cross_validate, paired_scores, repeat_seeds
from .features import FeaturizedRecording
from .models import ModelSpec
from .stats import wilcoxon_signed_rank

logger = logging.getLogger(__name__)


@dataclass
class AblationResult:
    condition: str
    model: str
    window: int
    mask: FeatureMask
    mean: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)
    fold_metrics: list = field(default_factory=list)
    p_value: float | None = None
    unit: str = "fold"  # what the SD runs over: folds (Generalised) or subjects (Personalised)
    subjects: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def key(self) -> tuple:
        return (self.condition, self.model, self.window, self.mask.bits)

    def to_row(self) -> dict:
        return {
            "condition": self.condition,
            "model": self.model,
            "window": self.window,
            "mask": self.mask.name,
            "fold_metrics": self.fold_metrics,
            "mean": self.mean,
            "sd": self.sd,
            "p_value": self.p_value,
            "unit": self.unit,
            "subjects": self.subjects,
            "skipped": self.skipped,
            "error": self.error,
        }

    @classmethod
    def from_row(cls, row: dict) -> "AblationResult":
        required = ("condition", "model", "window", "mask", "mean", "sd", "p_value")
        missing = [k for k in required if k not in row]
        if missing:
            raise ValueError(f"missing keys {missing}")
        return cls(row["condition"], row["model"], int(row["window"]), FeatureMask.from_name(row["mask"]),
                   dict(row["mean"]), dict(row["sd"]), list(row.get("fold_metrics", [])), row["p_value"],
                   row.get("unit", "fold"), list(row.get("subjects", [])), list(row.get("skipped", [])),
                   row.get("error"))


@dataclass(frozen=True)
class GridCell:
    condition: Condition
    spec: ModelSpec
    window: int
    mask: FeatureMask


class _Context:
    """Featurized cohort plus a one-window cache of stacked windows."""

    def __init__(self, feats, seed, k, repeats, balance_scope, pairing="fold"):
        self.feats = feats
        self.pairing = pairing
        self.seed = seed
        self.k = k
        self.repeats = repeats
        self.balance_scope = balance_scope
        self._window = None
        self._stacks = None

    def stacks(self, window):
        if window != self._window:
            self._stacks = [stack_windows(f, window) for f in self.feats]
            self._window = window
        return self._stacks


def _cv_with_pairs(spec, ds, ctx):
    cv = cross_validate(spec, ds, ctx.k, ctx.seed)
    model_scores, base_scores = paired_scores(cv, ds, ctx.k, repeat_seeds(ctx.seed, ctx.repeats),
                                             ctx.pairing)
    return cv, model_scores, base_scores


def run_cell(cell: GridCell, ctx: _Context) -> AblationResult:
    res = AblationResult(cell.condition.value, cell.spec.name, cell.window, cell.mask)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SkippedSubjectWarning)
            built = assemble_from_windows(ctx.feats, ctx.stacks(cell.window), cell.condition, cell.window,
                                          cell.mask, ctx.seed, ctx.balance_scope)
        res.skipped.extend(str(w.message) for w in caught if issubclass(w.category, SkippedSubjectWarning))

        if cell.condition is Condition.GENERALISED:
            cv, ms, bs = _cv_with_pairs(cell.spec, built, ctx)
            res.mean, res.sd = cv.mean, cv.sd
            res.fold_metrics = [f.as_dict() for f in cv.folds]
            res.unit = "fold"
        else:
            res.unit = "subject"
            pooled_m, pooled_b, per_subject = [], [], []
            for ds in built:
                pos, neg = ds.class_counts()
                if min(pos, neg) < ctx.k:
                    res.skipped.append(f"subject {ds.subject}: {min(pos, neg)} samples per class < k={ctx.k}")
                    continue
                cv, ms, bs = _cv_with_pairs(cell.spec, ds, ctx)
                pooled_m.append(ms)
                pooled_b.append(bs)
                per_subject.append({"subject": ds.subject, "mean": cv.mean, "sd": cv.sd})
            if not per_subject:
                raise ValueError("no subject has enough samples for cross-validation")
            arr = np.array([[s["mean"][m] for m in METRICS] for s in per_subject])
            res.mean = dict(zip(METRICS, arr.mean(axis=0).tolist()))
            res.sd = dict(zip(METRICS, arr.std(axis=0).tolist()))
            res.fold_metrics = [s["mean"] for s in per_subject]
            res.subjects = per_subject
            ms, bs = np.concatenate(pooled_m), np.concatenate(pooled_b)
        res.p_value = wilcoxon_signed_rank(ms, bs).pvalue
    except Exception as exc:  # recorded per cell; the grid carries on
        res.error = f"{type(exc).__name__}: {exc}"
    return res


_WORKER_CTX: _Context | None = None


def _init_worker(*args):
    global _WORKER_CTX
    _WORKER_CTX = _Context(*args)


def _run_in_worker(cell):
    return run_cell(cell, _WORKER_CTX)


def build_grid(conditions, models: Sequence[ModelSpec], windows: Sequence[int],
               masks: Sequence[FeatureMask] | None = None) -> list[GridCell]:
    masks = list(masks) if masks is not None else enumerate_feature_masks()
    conds = [Condition.parse(c) for c in conditions]
    # window-major so each worker reuses its stacked windows
    return [GridCell(c, spec, w, m) for c in conds for w in windows for m in masks for spec in models]


def sort_results(results: Iterable[AblationResult], model_order: Sequence[str] | None = None):
    cond_rank = {c.value: i for i, c in enumerate(Condition)}
    model_rank = {m: i for i, m in enumerate(model_order or [])}
    return sorted(results, key=lambda r: (cond_rank.get(r.condition, 99), model_rank.get(r.model, 99), r.model,
                                          r.window, r.mask.bits))


def run_ablation(feats: Sequence[FeaturizedRecording], condition, models: Sequence[ModelSpec],
                 windows: Sequence[int] = CANONICAL_WINDOWS, seed: int = 0,
                 masks: Sequence[FeatureMask] | None = None, k: int = DEFAULT_K,
                 repeats: int = DEFAULT_REPEATS, jobs: int | None = 1, balance_scope: str = "condition",
                 pairing: str = "fold", progress: Callable[[int, int], None] | None = None) -> list[AblationResult]:
    """Evaluate every (model, window, mask) cell of one or more conditions.

    ``condition`` may be a single condition or a list. Results come back in
    canonical order (condition, model, window, mask bits) whatever ``jobs``.
    """
    if pairing not in ("fold", "sample"):
        raise ValueError("pairing must be 'fold' or 'sample'")
    conditions = [condition] if isinstance(condition, (str, Condition)) else list(condition)
    grid = build_grid(conditions, models, windows, masks)
    jobs = jobs or os.cpu_count() or 1
    results = []
    if jobs <= 1:
        ctx = _Context(list(feats), seed, k, repeats, balance_scope, pairing)
        for i, cell in enumerate(grid):
            results.append(run_cell(cell, ctx))
            if progress:
                progress(i + 1, len(grid))
    else:
        chunk = max(1, len(grid) // (jobs * 8))
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(list(feats), seed, k, repeats, balance_scope, pairing)) as pool:
            for i, res in enumerate(pool.map(_run_in_worker, grid, chunksize=chunk)):
                results.append(res)
                if progress:
                    progress(i + 1, len(grid))
    failed = sum(r.failed for r in results)
    if failed:
        logger.warning("%d of %d grid cells failed", failed, len(results))
    return sort_results(results, [m.name for m in models])


# ------------------------------------------------------------------- summaries


def best_per_model_window(results: Iterable[AblationResult]) -> list[AblationResult]:
    """Best mask per (condition, model, window): highest mean accuracy, then
    precision, then the earliest mask in canonical order."""
    best: dict[tuple, AblationResult] = {}
    for r in results:
        if r.failed:
            continue
        key = (r.condition, r.model, r.window)
        cur = best.get(key)
        if cur is None or (r.mean["accuracy"], r.mean["precision"], -r.mask.bits) > (
                cur.mean["accuracy"], cur.mean["precision"], -cur.mask.bits):
            best[key] = r
    order = []
    for r in results:
        key = (r.condition, r.model, r.window)
        if key in best and best[key] not in order:
            order.append(best[key])
    return order


def format_pct(mean: float, sd: float | None = None) -> str:
    if sd is None:
        return f"{100 * mean:.1f}%"
    return f"{100 * mean:.1f}% ({100 * sd:.1f}%)"


TABLE_HEADER = ("Model", "W-Size", "Features", "Accuracy (SD)", "Precision (SD)", "Recall (SD)")


def table_rows(best: Sequence[AblationResult], condition: str, baseline: bool = True) -> list[tuple]:
    rows = []
    if baseline:
        rows.append(("Baseline (Random)", "-", "-", "50%", "50%", "50%"))
    for r in best:
        if r.condition != condition:
            continue
        rows.append((r.model, str(r.window), r.mask.name,
                     *(format_pct(r.mean[m], r.sd[m]) for m in METRICS)))
    return rows


def render_table(best: Sequence[AblationResult], condition: str, baseline: bool = True) -> str:
    rows = table_rows(best, condition, baseline)
    shown = []
    prev_model = None
    for row in rows:
        model = row[0] if row[0] != prev_model else ""
        prev_model = row[0]
        shown.append((model,) + row[1:])
    widths = [max(len(str(x)) for x in col) for col in zip(TABLE_HEADER, *shown)]
    fmt = " | ".join(f"{{:<{w}}}" for w in widths)
    lines = [condition, fmt.format(*TABLE_HEADER), "-+-".join("-" * w for w in widths)]
    lines += [fmt.format(*row) for row in shown]
    return "\n".join(lines)


def render_csv(best: Sequence[AblationResult], conditions: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("Condition",) + TABLE_HEADER + ("p_value",))
    for cond in conditions:
        for r in best:
            if r.condition == cond:
                w.writerow((cond, r.model, r.window, r.mask.name,
                            *(format_pct(r.mean[m], r.sd[m]) for m in METRICS), r.p_value))
    return buf.getvalue()


def write_results_jsonl(results: Iterable[AblationResult], path) -> None:
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_row(), sort_keys=True) + "\n")


def read_results_jsonl(path) -> list[AblationResult]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(AblationResult.from_row(json.loads(line)))
            except (ValueError, TypeError, KeyError) as exc:
                raise ValueError(f"{path}: line {lineno}: corrupt result row ({exc})") from None
    return out


def render_subject_table(best: Sequence[AblationResult]) -> str:
    """Per-subject accuracy of every Personalised best row."""
    lines = []
    for r in best:
        if r.unit != "subject" or not r.subjects:
            continue
        lines.append(f"{r.model} W={r.window} {r.mask.name}")
        for s in r.subjects:
            lines.append(f"  {s['subject']}: " + ", ".join(
                f"{m} {format_pct(s['mean'][m], s['sd'][m])}" for m in METRICS))
    return "\n".join(lines)
