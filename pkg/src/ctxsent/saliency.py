"""Gradient-weighted attention flow from exported tensors.

Consumes dumps produced by an externally instrumented model run (this package
never touches model internals) and aggregates, per layer, the mean flow from
the context span and from the original input span to the prediction position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np


class SaliencyError(ValueError):
    """Malformed dump or unusable span definition."""


@dataclass(frozen=True, eq=False)
class LayerTensors:
    """One layer's attention and gradient tensors, both shaped (heads, T, T)."""

    attention: np.ndarray
    grad: np.ndarray


@dataclass(frozen=True, eq=False)
class SaliencyDump:
    """Exported tensors plus the token spans they are scored over.

    Entry (k, j) of a flow matrix is read as flow from token j to token k;
    the prediction position indexes the row. Context and input spans must be
    disjoint and within [0, T).
    """

    layers: tuple[LayerTensors, ...]
    context_indices: tuple[int, ...]
    input_indices: tuple[int, ...]
    prediction_index: int
    model_id: str = ""
    sample_id: str = ""

    def __post_init__(self) -> None:
        if not self.layers:
            raise SaliencyError("dump has no layers")
        t = self.layers[0].attention.shape[-1]
        for i, layer in enumerate(self.layers):
            if layer.attention.ndim != 3 or layer.attention.shape[1] != layer.attention.shape[2]:
                raise SaliencyError(f"layer {i}: attention must be (heads, T, T), got {layer.attention.shape}")
            if layer.attention.shape != layer.grad.shape:
                raise SaliencyError(
                    f"layer {i}: attention shape {layer.attention.shape} != grad shape {layer.grad.shape}"
                )
            if layer.attention.shape[-1] != t:
                raise SaliencyError(f"layer {i}: inconsistent sequence length {layer.attention.shape[-1]} vs {t}")
        for name, span in (("context", self.context_indices), ("input", self.input_indices)):
            for idx in span:
                if not 0 <= idx < t:
                    raise SaliencyError(f"{name} index {idx} outside [0, {t})")
        if set(self.context_indices) & set(self.input_indices):
            raise SaliencyError("context and input spans must be disjoint")
        if not 0 <= self.prediction_index < t:
            raise SaliencyError(f"prediction index {self.prediction_index} outside [0, {t})")


@dataclass(frozen=True)
class SaliencyScores:
    """Per-layer mean flow into the prediction position, by source span."""

    context_to_prediction: tuple[float, ...]
    input_to_prediction: tuple[float, ...]

    def __post_init__(self) -> None:
        for name, values in (
            ("context_to_prediction", self.context_to_prediction),
            ("input_to_prediction", self.input_to_prediction),
        ):
            if any(v < 0.0 for v in values):
                raise SaliencyError(f"{name} contains a negative score")


def saliency_matrix(attention: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Per-layer importance map: |attention * grad| elementwise, summed over heads."""
    attention = np.asarray(attention, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if attention.shape != grad.shape:
        raise SaliencyError(f"attention shape {attention.shape} != grad shape {grad.shape}")
    if attention.ndim != 3:
        raise SaliencyError(f"expected (heads, T, T) tensors, got shape {attention.shape}")
    return np.abs(attention * grad).sum(axis=0)


def s_scores(dump: SaliencyDump) -> SaliencyScores:
    """Mean flow from each span into the prediction position, layer by layer."""
    if not dump.context_indices:
        raise SaliencyError("context span is empty")
    if not dump.input_indices:
        raise SaliencyError("input span is empty")
    ctx = list(dump.context_indices)
    inp = list(dump.input_indices)
    context_scores = []
    input_scores = []
    for layer in dump.layers:
        flows = saliency_matrix(layer.attention, layer.grad)
        row = flows[dump.prediction_index]
        context_scores.append(float(row[ctx].mean()))
        input_scores.append(float(row[inp].mean()))
    return SaliencyScores(
        context_to_prediction=tuple(context_scores), input_to_prediction=tuple(input_scores)
    )


def dump_from_dict(data: Mapping[str, Any]) -> SaliencyDump:
    try:
        layers = tuple(
            LayerTensors(
                attention=np.asarray(layer["attention"], dtype=np.float64),
                grad=np.asarray(layer["grad"], dtype=np.float64),
            )
            for layer in data["layers"]
        )
        metadata = data.get("metadata", {})
        return SaliencyDump(
            layers=layers,
            context_indices=tuple(int(i) for i in data["context_indices"]),
            input_indices=tuple(int(i) for i in data["input_indices"]),
            prediction_index=int(data["prediction_index"]),
            model_id=str(metadata.get("model_id", "")),
            sample_id=str(metadata.get("sample_id", "")),
        )
    except KeyError as exc:
        raise SaliencyError(f"dump is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise SaliencyError(f"malformed dump: {exc}") from None


def load_dump(path: str | Path) -> SaliencyDump:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SaliencyError(f"{path}: invalid JSON ({exc.msg})") from None
    return dump_from_dict(data)


def scores_to_csv(scores: SaliencyScores) -> str:
    lines = ["layer,s_context_to_pred,s_input_to_pred"]
    for i, (c, s) in enumerate(zip(scores.context_to_prediction, scores.input_to_prediction)):
        lines.append(f"{i},{c!r},{s!r}")
    return "\n".join(lines) + "\n"
