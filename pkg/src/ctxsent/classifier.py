"""Turn per-choice likelihoods into polarity distributions.

Base predictions see only the sample; context-conditioned predictions embed
the generated context into the task instruction. Scores are softmaxed at
temperature 1.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .backend import Backend, ChoiceScores, ScoreHint
from .datamodel import (
    ContextRecord,
    PolarityDistribution,
    Sample,
    SchemaError,
    read_jsonl,
    write_jsonl,
)
from .prompts import render_task_instruction

_LOG_FLOOR = 1e-300


def softmax(scores: Sequence[float]) -> PolarityDistribution:
    """Exp-normalize three scores, stabilized by max subtraction."""
    values = [float(s) for s in scores]
    if len(values) != 3:
        raise ValueError(f"softmax expects 3 scores, got {len(values)}")
    if any(not math.isfinite(v) for v in values):
        raise ValueError(f"softmax requires finite scores: {values!r}")
    top = max(values)
    exps = [math.exp(v - top) for v in values]
    total = sum(exps)
    return PolarityDistribution((exps[0] / total, exps[1] / total, exps[2] / total))


@dataclass(frozen=True)
class ClassifierOutput:
    """One classification result: distribution plus its raw scores.

    raw is None for results imported from external prediction files; imported
    rows get a synthetic raw vector of log-probabilities so the softmax
    relationship still holds.
    """

    sample_id: str
    dist: PolarityDistribution
    raw: ChoiceScores | None
    conditioned_on: str | None = None

    def __post_init__(self) -> None:
        if self.raw is not None:
            recovered = softmax(self.raw.scores)
            drift = max(abs(a - b) for a, b in zip(recovered.probs, self.dist.probs))
            if drift > 1e-9:
                raise ValueError(f"dist is not the softmax of raw scores (max drift {drift:.2e})")


@dataclass(frozen=True)
class BatchFailure:
    sample_id: str
    error: str


@dataclass(frozen=True)
class BatchResult:
    """Successful outputs in input order plus an error manifest."""

    outputs: tuple[ClassifierOutput, ...]
    failures: tuple[BatchFailure, ...]


def predict(
    sample: Sample,
    level: str,
    backend: Backend,
    context: ContextRecord | None = None,
    image_token: str | None = None,
    normalization: str = "total",
    instruction_template: str | None = None,
) -> ClassifierOutput:
    """Classify one sample, optionally conditioned on a generated context."""
    prompt, choices = render_task_instruction(
        sample,
        level,
        context=context.text if context else None,
        image_token=image_token,
        template=instruction_template,
    )
    hint = ScoreHint(sample_id=sample.id, gold=sample.gold, conditioned=context is not None)
    try:
        scores = backend.score_choices(
            prompt, choices, image=sample.image, hint=hint, normalization=normalization
        )
    except Exception as exc:
        message = f"sample {sample.id!r}: {exc}"
        try:
            wrapped = type(exc)(message)
        except Exception:
            wrapped = RuntimeError(message)
        raise wrapped from exc
    return ClassifierOutput(
        sample_id=sample.id,
        dist=softmax(scores.scores),
        raw=scores,
        conditioned_on=context.knowledge_type if context else None,
    )


def predict_batch(
    samples: Sequence[Sample],
    level: str,
    backend: Backend,
    contexts: Mapping[str, ContextRecord] | None = None,
    image_token: str | None = None,
    normalization: str = "total",
    instruction_template: str | None = None,
) -> BatchResult:
    """Element-wise predict with bounded concurrency.

    Outputs keep input order; per-sample failures land in the manifest instead
    of aborting the batch.
    """
    if not samples:
        return BatchResult(outputs=(), failures=())
    workers = max(1, backend.config.concurrency_limit)

    def run(sample: Sample) -> ClassifierOutput:
        context = contexts.get(sample.id) if contexts else None
        return predict(
            sample,
            level,
            backend,
            context=context,
            image_token=image_token,
            normalization=normalization,
            instruction_template=instruction_template,
        )

    outputs: list[ClassifierOutput] = []
    failures: list[BatchFailure] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run, sample) for sample in samples]
        for sample, future in zip(samples, futures):
            try:
                outputs.append(future.result())
            except Exception as exc:
                failures.append(BatchFailure(sample_id=sample.id, error=f"{type(exc).__name__}: {exc}"))
    return BatchResult(outputs=tuple(outputs), failures=tuple(failures))


# ---------------------------------------------------------------------------
# Predictions JSONL import/export
# ---------------------------------------------------------------------------

def output_to_dict(output: ClassifierOutput) -> dict:
    row: dict = {
        "sample_id": output.sample_id,
        "probs": list(output.dist.probs),
        "conditioned_on": output.conditioned_on,
    }
    if output.raw is not None:
        row["raw_scores"] = list(output.raw.scores)
        row["normalization_mode"] = output.raw.normalization_mode
    return row


def output_from_dict(row: Mapping) -> ClassifierOutput:
    """Parse one prediction row.

    External task-specific models plug in here: the minimal schema is
    {sample_id, probs: [3], conditioned_on}. When raw scores are absent they
    are reconstructed as log-probabilities.
    """
    try:
        dist = PolarityDistribution(tuple(float(v) for v in row["probs"]))
        sample_id = str(row["sample_id"])
    except KeyError as exc:
        raise SchemaError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc)) from None
    if row.get("raw_scores") is not None:
        raw = ChoiceScores(
            scores=tuple(float(v) for v in row["raw_scores"]),
            normalization_mode=row.get("normalization_mode", "total"),
        )
    else:
        raw = ChoiceScores(scores=tuple(math.log(max(p, _LOG_FLOOR)) for p in dist.probs))
    return ClassifierOutput(
        sample_id=sample_id, dist=dist, raw=raw, conditioned_on=row.get("conditioned_on")
    )


def write_outputs(path: str | Path, outputs: Iterable[ClassifierOutput]) -> None:
    write_jsonl(path, (output_to_dict(o) for o in outputs))


def read_outputs(path: str | Path) -> list[ClassifierOutput]:
    outputs = []
    for lineno, row in read_jsonl(path):
        try:
            outputs.append(output_from_dict(row))
        except SchemaError as exc:
            raise SchemaError(f"{path}: line {lineno}: {exc}") from None
    return outputs
