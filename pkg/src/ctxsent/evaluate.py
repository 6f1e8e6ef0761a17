"""Metrics, entropy-bucketed error analysis, knowledge-type comparison, and sweeps."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Mapping, Sequence

from .classifier import ClassifierOutput
from .datamodel import POLARITIES, Polarity, PolarityDistribution, PredictionRecord, argmax_label
from .fusion import FusionConfig, delta, fuse_records

MAX_ENTROPY_BITS = math.log2(3.0)

SWEEP_MODES = ("two-phase", "full-grid")


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    """Accuracy plus per-class and macro precision/recall/F1.

    Zero-denominator precision or recall is defined as 0; macro values are
    unweighted means over the three classes.
    """

    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: tuple[ClassMetrics, ClassMetrics, ClassMetrics]
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": {
                polarity.label: {
                    "precision": cm.precision,
                    "recall": cm.recall,
                    "f1": cm.f1,
                    "support": cm.support,
                }
                for polarity, cm in zip(POLARITIES, self.per_class)
            },
            "n": self.n,
        }


def compute_metrics(golds: Sequence[Polarity], preds: Sequence[Polarity]) -> MetricsReport:
    if len(golds) != len(preds):
        raise ValueError(f"gold/prediction length mismatch: {len(golds)} vs {len(preds)}")
    if not golds:
        raise ValueError("cannot compute metrics on empty input")
    n = len(golds)
    matches = sum(1 for g, p in zip(golds, preds) if g is p)
    per_class = []
    for polarity in POLARITIES:
        tp = sum(1 for g, p in zip(golds, preds) if g is polarity and p is polarity)
        fp = sum(1 for g, p in zip(golds, preds) if g is not polarity and p is polarity)
        fn = sum(1 for g, p in zip(golds, preds) if g is polarity and p is not polarity)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(ClassMetrics(precision=precision, recall=recall, f1=f1, support=tp + fn))
    return MetricsReport(
        accuracy=matches / n,
        macro_precision=sum(c.precision for c in per_class) / 3.0,
        macro_recall=sum(c.recall for c in per_class) / 3.0,
        macro_f1=sum(c.f1 for c in per_class) / 3.0,
        per_class=tuple(per_class),
        n=n,
    )


def entropy(p: PolarityDistribution) -> float:
    """Shannon entropy in bits; ranges over [0, log2(3)] for three classes."""
    total = 0.0
    for x in p.probs:
        if x > 0.0:
            total -= x * math.log2(x)
    return total


def default_entropy_edges(bins: int = 8) -> tuple[float, ...]:
    """Equal-width bin edges over [0, log2(3)]."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    return tuple(i * MAX_ENTROPY_BITS / bins for i in range(bins + 1))


@dataclass(frozen=True)
class EntropyBucketReport:
    """Per-bucket counts and error rates over base-distribution entropy.

    Empty buckets report error_rate None rather than 0. Entropy is base 2;
    the edges used are recorded on the report.
    """

    edges: tuple[float, ...]
    counts: tuple[int, ...]
    error_rates: tuple[float | None, ...]
    hard_only: bool
    alpha: float
    n: int

    def to_dict(self) -> dict:
        return {
            "entropy_base": 2,
            "edges": list(self.edges),
            "counts": list(self.counts),
            "error_rates": list(self.error_rates),
            "hard_only": self.hard_only,
            "alpha": self.alpha,
            "n": self.n,
        }


def error_rate_by_entropy(
    records: Sequence[PredictionRecord],
    golds: Mapping[str, Polarity],
    edges: Sequence[float] | None = None,
    hard_only: bool = False,
    alpha: float = 0.3,
    label_source: str = "final",
) -> EntropyBucketReport:
    """Bucket samples by base-distribution entropy and report per-bucket error rates.

    label_source picks which prediction is scored: "final" uses the record's
    final label, "base" re-derives the label from the base distribution. The
    hard filter recomputes the confidence gap from the base distribution
    against the alpha given here.
    """
    if label_source not in ("final", "base"):
        raise ValueError(f"label_source must be 'final' or 'base', got {label_source!r}")
    bin_edges = tuple(edges) if edges is not None else default_entropy_edges()
    if len(bin_edges) < 2 or any(b <= a for a, b in zip(bin_edges, bin_edges[1:])):
        raise ValueError("edges must be strictly increasing with at least two values")
    buckets = len(bin_edges) - 1
    counts = [0] * buckets
    errors = [0] * buckets
    analyzed = 0
    for record in records:
        gold = golds.get(record.sample_id)
        if gold is None:
            raise ValueError(f"sample {record.sample_id!r} has no gold label")
        if hard_only and delta(record.base) > alpha:
            continue
        h = entropy(record.base)
        index = min(max(bisect_right(bin_edges, h) - 1, 0), buckets - 1)
        label = record.final_label if label_source == "final" else argmax_label(record.base)
        counts[index] += 1
        analyzed += 1
        if label is not gold:
            errors[index] += 1
    rates = tuple(errors[i] / counts[i] if counts[i] else None for i in range(buckets))
    return EntropyBucketReport(
        edges=bin_edges,
        counts=tuple(counts),
        error_rates=rates,
        hard_only=hard_only,
        alpha=alpha,
        n=analyzed,
    )


# ---------------------------------------------------------------------------
# Hyperparameter sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridPoint:
    alpha: float
    beta: float
    macro_f1: float


@dataclass(frozen=True)
class SweepResult:
    """Evaluated grid plus the selected configuration.

    The selected pair attains the maximum dev macro-F1 over the evaluated
    points; ties resolve to the smallest beta, then the smallest alpha.
    """

    grid: tuple[GridPoint, ...]
    selected_alpha: float
    selected_beta: float
    selected_f1: float
    rule: str

    def __post_init__(self) -> None:
        if not self.grid:
            raise ValueError("sweep grid is empty")
        best = min(self.grid, key=lambda g: (-g.macro_f1, g.beta, g.alpha))
        if (best.alpha, best.beta, best.macro_f1) != (self.selected_alpha, self.selected_beta, self.selected_f1):
            raise ValueError(
                f"selected point ({self.selected_alpha}, {self.selected_beta}) does not attain "
                f"the grid maximum at ({best.alpha}, {best.beta})"
            )

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "selected_alpha": self.selected_alpha,
            "selected_beta": self.selected_beta,
            "selected_f1": self.selected_f1,
            "grid": [{"alpha": g.alpha, "beta": g.beta, "macro_f1": g.macro_f1} for g in self.grid],
        }


def _golds_for(outputs: Sequence[ClassifierOutput], golds: Mapping[str, Polarity]) -> list[Polarity]:
    missing = [o.sample_id for o in outputs if o.sample_id not in golds]
    if missing:
        raise ValueError(f"no gold label for ids: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return [golds[o.sample_id] for o in outputs]


def sweep(
    base_outputs: Sequence[ClassifierOutput],
    ctx_outputs: Sequence[ClassifierOutput],
    golds: Mapping[str, Polarity],
    alpha_grid: Sequence[float],
    beta_grid: Sequence[float],
    strategy: str = "cf",
    mode: str = "two-phase",
    fixed_alpha: float = 0.3,
    cxmi_threshold: float = 1.1,
) -> SweepResult:
    """Grid-search fusion hyperparameters on a dev set.

    two-phase first sweeps beta at the fixed alpha, then sweeps alpha at the
    best beta; full-grid evaluates the product grid. Selection is the argmax
    over all evaluated points with the documented tie-breaking.
    """
    if mode not in SWEEP_MODES:
        raise ValueError(f"mode must be one of {SWEEP_MODES}, got {mode!r}")
    if not alpha_grid or not beta_grid:
        raise ValueError("alpha_grid and beta_grid must be non-empty")
    gold_list = _golds_for(base_outputs, golds)

    def evaluate_point(alpha: float, beta: float) -> GridPoint:
        config = FusionConfig(alpha=alpha, beta=beta, strategy=strategy, cxmi_threshold=cxmi_threshold)
        records = fuse_records(base_outputs, ctx_outputs, config)
        report = compute_metrics(gold_list, [r.final_label for r in records])
        return GridPoint(alpha=alpha, beta=beta, macro_f1=report.macro_f1)

    points: list[GridPoint] = []
    if mode == "full-grid":
        for beta in beta_grid:
            for alpha in alpha_grid:
                points.append(evaluate_point(alpha, beta))
    else:
        phase_one = [evaluate_point(fixed_alpha, beta) for beta in beta_grid]
        points.extend(phase_one)
        best_beta = min(phase_one, key=lambda g: (-g.macro_f1, g.beta)).beta
        seen = {(g.alpha, g.beta) for g in points}
        for alpha in alpha_grid:
            if (alpha, best_beta) not in seen:
                points.append(evaluate_point(alpha, best_beta))

    best = min(points, key=lambda g: (-g.macro_f1, g.beta, g.alpha))
    return SweepResult(
        grid=tuple(points),
        selected_alpha=best.alpha,
        selected_beta=best.beta,
        selected_f1=best.macro_f1,
        rule=mode,
    )


# ---------------------------------------------------------------------------
# Knowledge-type comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KnowledgeTypeRow:
    knowledge_type: str
    accuracy: float
    macro_f1: float
    n: int


def compare_knowledge_types(
    base_records: Sequence[PredictionRecord],
    per_type: Mapping[str, Sequence[PredictionRecord]],
    golds: Mapping[str, Polarity],
) -> list[KnowledgeTypeRow]:
    """One metrics row per knowledge type, plus a "base" row first.

    All prediction sets must cover exactly the same sample ids.
    """
    base_ids = {r.sample_id for r in base_records}
    for name, records in per_type.items():
        ids = {r.sample_id for r in records}
        if ids != base_ids:
            diff = sorted(ids.symmetric_difference(base_ids))
            raise ValueError(f"prediction set {name!r} covers different ids (e.g. {diff[:5]})")

    def row(name: str, records: Sequence[PredictionRecord]) -> KnowledgeTypeRow:
        gold_list = []
        for record in records:
            gold = golds.get(record.sample_id)
            if gold is None:
                raise ValueError(f"sample {record.sample_id!r} has no gold label")
            gold_list.append(gold)
        report = compute_metrics(gold_list, [r.final_label for r in records])
        return KnowledgeTypeRow(knowledge_type=name, accuracy=report.accuracy, macro_f1=report.macro_f1, n=report.n)

    rows = [row("base", base_records)]
    rows.extend(row(name, per_type[name]) for name in per_type)
    return rows


def knowledge_rows_to_csv(rows: Sequence[KnowledgeTypeRow]) -> str:
    lines = ["knowledge_type,accuracy,macro_f1,n"]
    lines.extend(f"{r.knowledge_type},{r.accuracy!r},{r.macro_f1!r},{r.n}" for r in rows)
    return "\n".join(lines) + "\n"
