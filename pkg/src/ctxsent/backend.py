"""Model backends and the content-addressed response cache.

Two backend kinds share one call surface: a remote chat-completions-style HTTP
endpoint and a deterministic mock. The mock doubles as a synthetic oracle so
whole pipelines can run and be verified without any model server.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import numpy as np
import requests

from .datamodel import POLARITIES, Polarity
from .digest import derive_seed, stable_digest
from .prompts import RenderedPrompt

logger = logging.getLogger(__name__)

KINDS = ("remote", "mock")

NORMALIZATION_MODES = ("total", "per-token")


class ConfigurationError(ValueError):
    """Invalid backend configuration or missing credential."""


class TransportError(RuntimeError):
    """Remote call failed after all retries."""

    def __init__(self, message: str, last_status: int | None = None):
        super().__init__(message)
        self.last_status = last_status


class CapabilityError(RuntimeError):
    """The backend cannot serve the requested operation (e.g. no likelihoods)."""


@dataclass(frozen=True)
class MockOracleParams:
    """Synthetic-oracle knobs for the mock backend.

    A fixed fraction of samples is generated as hard (top-two probabilities
    close); the rest are easy. Base accuracies on the two groups are spread
    around base_accuracy so the overall expectation matches it. Context
    answers hit hard_context_accuracy on hard samples; easy_context_accuracy
    defaults so that the overall context accuracy matches base_accuracy,
    i.e. context relocates competence toward hard samples instead of adding
    net accuracy. Wrong context answers are confidently wrong, modelling
    assertive but irrelevant background noise.
    """

    seed: int = 0
    base_accuracy: float = 0.7
    hard_context_accuracy: float = 0.85
    hard_fraction: float = 0.4
    hard_penalty: float = 0.25
    easy_context_accuracy: float | None = None

    def __post_init__(self) -> None:
        for name in ("base_accuracy", "hard_context_accuracy", "hard_fraction", "hard_penalty"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must be within [0, 1], got {value}")
        if self.easy_context_accuracy is not None and not 0.0 <= self.easy_context_accuracy <= 1.0:
            raise ConfigurationError(f"easy_context_accuracy must be within [0, 1], got {self.easy_context_accuracy}")

    @property
    def _spread(self) -> float:
        # Largest penalty that keeps both group accuracies inside [0, 1] while
        # the hard_fraction-weighted mean stays exactly base_accuracy.
        limits = [self.hard_penalty]
        if self.hard_fraction < 1.0:
            limits.append(self.base_accuracy / (1.0 - self.hard_fraction))
        if self.hard_fraction > 0.0:
            limits.append((1.0 - self.base_accuracy) / self.hard_fraction)
        return min(limits)

    @property
    def hard_base_accuracy(self) -> float:
        return self.base_accuracy - (1.0 - self.hard_fraction) * self._spread

    @property
    def easy_base_accuracy(self) -> float:
        return self.base_accuracy + self.hard_fraction * self._spread

    @property
    def effective_easy_context_accuracy(self) -> float:
        if self.easy_context_accuracy is not None:
            return self.easy_context_accuracy
        if self.hard_fraction >= 1.0:
            return self.hard_context_accuracy
        balanced = (self.base_accuracy - self.hard_fraction * self.hard_context_accuracy) / (
            1.0 - self.hard_fraction
        )
        return min(1.0, max(0.0, balanced))


@dataclass(frozen=True)
class BackendConfig:
    """Connection and behaviour settings for one backend."""

    kind: str
    model_id: str
    base_url: str | None = None
    api_key_env: str | None = None
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 2
    concurrency_limit: int = 4
    mock: MockOracleParams | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"backend kind must be one of {KINDS}, got {self.kind!r}")
        if not self.model_id:
            raise ConfigurationError("model_id must be non-empty")
        if self.temperature < 0:
            raise ConfigurationError(f"temperature must be >= 0, got {self.temperature}")
        if self.concurrency_limit < 1:
            raise ConfigurationError(f"concurrency_limit must be >= 1, got {self.concurrency_limit}")
        if self.kind == "remote" and not self.base_url:
            raise ConfigurationError("remote backend requires base_url")


@dataclass(frozen=True)
class ChoiceScores:
    """Per-choice log-likelihoods in canonical polarity order."""

    scores: tuple[float, float, float]
    normalization_mode: str = "total"

    def __post_init__(self) -> None:
        scores = tuple(float(s) for s in self.scores)
        if len(scores) != 3:
            raise ValueError(f"expected 3 choice scores, got {len(scores)}")
        if any(not math.isfinite(s) for s in scores):
            raise ValueError(f"choice scores must be finite: {scores!r}")
        if self.normalization_mode not in NORMALIZATION_MODES:
            raise ValueError(f"normalization_mode must be one of {NORMALIZATION_MODES}")
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class ScoreHint:
    """Sample-level metadata for scoring calls.

    The remote backend ignores it. The mock oracle keys its per-sample
    behaviour (hardness, correctness) on sample_id and biases scores toward
    gold; without a gold label it derives a stable pseudo-gold instead.
    """

    sample_id: str
    gold: Polarity | None = None
    conditioned: bool = False


class Backend(Protocol):
    config: BackendConfig

    def generate(self, prompt: RenderedPrompt, image: str | None = None) -> str: ...

    def score_choices(
        self,
        prompt: RenderedPrompt,
        choices: Sequence[str],
        image: str | None = None,
        hint: ScoreHint | None = None,
        normalization: str = "total",
    ) -> ChoiceScores: ...


def _check_choices(choices: Sequence[str]) -> None:
    if len(choices) != 3:
        raise ValueError(f"score_choices requires exactly 3 choices, got {len(choices)}")


class MockBackend:
    """Deterministic stand-in for a model server.

    generate() returns text that starts with the first 12 hex characters of
    the prompt hash, so downstream artifacts are trivially traceable. Scores
    come from the synthetic oracle described on MockOracleParams. Determinism
    is keyed on (seed, sample identity, conditioned flag); distinct samples
    are expected to render distinct prompts, as with real datasets, which
    keeps the prompt-keyed cache transparent.
    """

    _VOCAB = (
        "context", "background", "history", "detail", "scene", "figure",
        "event", "period", "culture", "record", "insight", "note",
    )

    def __init__(self, config: BackendConfig, seed: int | None = None):
        self.config = config
        self.params = config.mock if config.mock is not None else MockOracleParams()
        if seed is not None:
            self.params = replace(self.params, seed=seed)

    def _rng(self, *parts: object) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.params.seed, *parts))

    def generate(self, prompt: RenderedPrompt, image: str | None = None) -> str:
        rng = self._rng("generate", prompt.hash, self.config.model_id)
        words = [self._VOCAB[int(i)] for i in rng.integers(0, len(self._VOCAB), size=12)]
        return f"{prompt.hash[:12]} " + " ".join(words) + "."

    def is_hard_sample(self, identity: str) -> bool:
        return float(self._rng("hard", identity).random()) < self.params.hard_fraction

    def score_choices(
        self,
        prompt: RenderedPrompt,
        choices: Sequence[str],
        image: str | None = None,
        hint: ScoreHint | None = None,
        normalization: str = "total",
    ) -> ChoiceScores:
        _check_choices(choices)
        identity = hint.sample_id if hint else prompt.hash
        conditioned = hint.conditioned if hint else False
        if hint and hint.gold is not None:
            gold = hint.gold
        else:
            gold = POLARITIES[derive_seed(self.params.seed, "gold", identity) % 3]

        hard = self.is_hard_sample(identity)
        params = self.params
        rng = self._rng("score", identity, "ctx" if conditioned else "base")
        if conditioned:
            accuracy = params.hard_context_accuracy if hard else params.effective_easy_context_accuracy
        else:
            accuracy = params.hard_base_accuracy if hard else params.easy_base_accuracy
        correct = float(rng.random()) < accuracy
        if conditioned:
            # Wrong context reads as confidently wrong background noise.
            margin_lo, margin_hi = (0.30, 0.80) if correct else (0.60, 0.95)
        else:
            margin_lo, margin_hi = (0.01, 0.25) if hard else (0.45, 0.90)
        others = [p for p in POLARITIES if p is not gold]
        if correct:
            winner, runner = gold, others[int(rng.integers(2))]
        else:
            winner, runner = others[int(rng.integers(2))], gold
        third = next(p for p in POLARITIES if p not in (winner, runner))

        margin = float(rng.uniform(margin_lo, margin_hi))
        # Third probability stays below (1 - margin) / 3 so the ordering
        # winner >= runner >= third holds by construction.
        p3_hi = (1.0 - margin) / 3.0
        p3 = float(rng.uniform(min(0.02, p3_hi / 2.0), p3_hi))
        p1 = (1.0 - p3 + margin) / 2.0
        p2 = (1.0 - p3 - margin) / 2.0
        probs = [0.0, 0.0, 0.0]
        probs[winner.index], probs[runner.index], probs[third.index] = p1, p2, p3
        scores = tuple(math.log(p) for p in probs)
        return ChoiceScores(scores=scores, normalization_mode=normalization)


class RemoteBackend:
    """HTTP client for a chat-completions-style endpoint.

    Requests go to POST {base_url}/chat/completions with a Bearer credential
    read from the environment variable named by api_key_env. Scoring requests
    add an echo_choices array and expect choice_logprobs (plus
    choice_token_counts for per-token normalization) in the response.
    In-flight requests are capped at concurrency_limit.
    """

    RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})

    def __init__(self, config: BackendConfig):
        if config.kind != "remote":
            raise ConfigurationError(f"RemoteBackend requires kind=remote, got {config.kind!r}")
        self.config = config
        self._session = requests.Session()
        self._semaphore = threading.BoundedSemaphore(config.concurrency_limit)

    def _api_key(self) -> str:
        env = self.config.api_key_env
        if not env:
            raise ConfigurationError("remote backend requires api_key_env naming the credential variable")
        value = os.environ.get(env, "")
        if not value:
            raise ConfigurationError(f"credential environment variable {env!r} is not set")
        return value

    def _post(self, payload: Mapping[str, Any]) -> dict[str, Any]:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self._api_key()}", "Content-Type": "application/json"}
        attempts = self.config.max_retries + 1
        last_status: int | None = None
        last_error = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                time.sleep(min(0.05 * 2**attempt, 2.0))
            try:
                with self._semaphore:
                    response = self._session.post(
                        url, json=payload, headers=headers, timeout=self.config.timeout
                    )
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
                continue
            last_status = response.status_code
            if response.status_code in self.RETRY_STATUSES:
                last_error = f"server returned status {response.status_code}"
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"request failed with status {response.status_code}: {response.text[:200]}",
                    last_status=response.status_code,
                )
            try:
                return response.json()
            except ValueError:
                raise TransportError("response body is not JSON", last_status=response.status_code) from None
        raise TransportError(f"{last_error} (after {attempts} attempts)", last_status=last_status)

    def _messages(self, prompt: RenderedPrompt, image: str | None) -> list[dict[str, Any]]:
        content: list[dict[str, Any]] = [{"type": "text", "text": prompt.text}]
        if image:
            content.append({"type": "image_url", "image_url": {"url": image}})
        return [{"role": "user", "content": content}]

    def generate(self, prompt: RenderedPrompt, image: str | None = None) -> str:
        payload = {
            "model": self.config.model_id,
            "messages": self._messages(prompt, image),
            "temperature": self.config.temperature,
        }
        body = self._post(payload)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError(f"response carries no generated text: {json.dumps(body)[:200]}") from None
        if not isinstance(text, str):
            raise TransportError("generated content is not a string")
        return text

    def score_choices(
        self,
        prompt: RenderedPrompt,
        choices: Sequence[str],
        image: str | None = None,
        hint: ScoreHint | None = None,
        normalization: str = "total",
    ) -> ChoiceScores:
        _check_choices(choices)
        if normalization not in NORMALIZATION_MODES:
            raise ValueError(f"normalization must be one of {NORMALIZATION_MODES}")
        payload = {
            "model": self.config.model_id,
            "messages": self._messages(prompt, image),
            "temperature": self.config.temperature,
            "echo_choices": list(choices),
        }
        body = self._post(payload)
        logprobs = body.get("choice_logprobs")
        if not isinstance(logprobs, list) or len(logprobs) != 3:
            raise CapabilityError(
                f"backend {self.config.model_id!r} did not return choice_logprobs; "
                "likelihood scoring is unsupported by this endpoint"
            )
        scores = [float(v) for v in logprobs]
        if normalization == "per-token":
            counts = body.get("choice_token_counts")
            if not isinstance(counts, list) or len(counts) != 3 or any(int(c) <= 0 for c in counts):
                raise CapabilityError(
                    "per-token normalization requires choice_token_counts in the response"
                )
            scores = [s / int(c) for s, c in zip(scores, counts)]
        return ChoiceScores(scores=tuple(scores), normalization_mode=normalization)


# ---------------------------------------------------------------------------
# Response cache
# ---------------------------------------------------------------------------

def text_cache_key(model_id: str, prompt_hash: str) -> str:
    return stable_digest("generate", model_id, prompt_hash)


def scores_cache_key(model_id: str, prompt_hash: str, choices: Sequence[str], normalization: str) -> str:
    return stable_digest("score", model_id, prompt_hash, *choices, normalization)


class ResponseCache:
    """Append-only JSONL cache of backend responses, keyed by content digest.

    Lines are {key, kind, value, model_id, created_at}. Corrupt lines are
    skipped with a warning. Duplicate keys resolve last-write-wins, which
    compact() makes physical.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    key = entry["key"]
                    if entry["kind"] not in ("text", "scores"):
                        raise ValueError(f"bad kind {entry['kind']!r}")
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    logger.warning("skipping corrupt cache line %s:%d (%s)", self.path, lineno, exc)
                    continue
                self._entries[key] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> dict[str, Any] | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, kind: str, value: Any, model_id: str) -> None:
        entry = {
            "key": key,
            "kind": kind,
            "value": value,
            "model_id": model_id,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock:
            self._entries[key] = entry
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False))
                fh.write("\n")

    def compact(self) -> None:
        """Rewrite the file with one line per key (last write wins)."""
        with self._lock:
            with open(self.path, "w", encoding="utf-8") as fh:
                for entry in self._entries.values():
                    fh.write(json.dumps(entry, ensure_ascii=False))
                    fh.write("\n")


class CachingBackend:
    """Wrap a backend with the response cache; hits skip the inner call."""

    def __init__(self, inner: Backend, cache: ResponseCache):
        self.inner = inner
        self.cache = cache

    @property
    def config(self) -> BackendConfig:
        return self.inner.config

    def generate(self, prompt: RenderedPrompt, image: str | None = None) -> str:
        key = text_cache_key(self.config.model_id, prompt.hash)
        entry = self.cache.get(key)
        if entry is not None and entry["kind"] == "text":
            return entry["value"]
        text = self.inner.generate(prompt, image=image)
        self.cache.put(key, "text", text, self.config.model_id)
        return text

    def score_choices(
        self,
        prompt: RenderedPrompt,
        choices: Sequence[str],
        image: str | None = None,
        hint: ScoreHint | None = None,
        normalization: str = "total",
    ) -> ChoiceScores:
        key = scores_cache_key(self.config.model_id, prompt.hash, choices, normalization)
        entry = self.cache.get(key)
        if entry is not None and entry["kind"] == "scores":
            value = entry["value"]
            return ChoiceScores(scores=tuple(value["scores"]), normalization_mode=value["normalization_mode"])
        scores = self.inner.score_choices(prompt, choices, image=image, hint=hint, normalization=normalization)
        self.cache.put(
            key,
            "scores",
            {"scores": list(scores.scores), "normalization_mode": scores.normalization_mode},
            self.config.model_id,
        )
        return scores


def make_backend(
    config: BackendConfig, seed: int | None = None, cache: ResponseCache | None = None
) -> Backend:
    """Build a backend from its config, optionally seeded (mock) and cached."""
    backend: Backend
    if config.kind == "mock":
        backend = MockBackend(config, seed=seed)
    else:
        backend = RemoteBackend(config)
    if cache is not None:
        backend = CachingBackend(backend, cache)
    return backend
