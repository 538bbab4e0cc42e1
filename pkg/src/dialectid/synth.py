"""Synthetic dialect corpus: per-class first-order Markov strings.

Each class gets its own Dirichlet-sampled initial distribution and bigram
transition matrix over a small alphabet; low concentration makes the rows
sharply peaked, so classes are separable from character statistics alone.
The module also ships a count-based bigram likelihood classifier used as an
independent baseline when judging the neural models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from collections import Counter

import numpy as np

from .data import Dataset, LabelSet, Sample, TEXT_MODE
from .errors import ConfigError
from .numerics import STREAM_SYNTH, make_stream

MAX_ALPHABET = 26   # single lowercase letter per symbol


@dataclass
class SynthSpec:
    classes: int = 3
    alphabet: int = 8
    concentration: float = 0.1
    length_range: tuple[int, int] = (20, 40)
    samples_per_class: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if self.classes < 2:
            raise ConfigError(f"classes must be >= 2, got {self.classes}")
        if not 1 <= self.alphabet <= MAX_ALPHABET:
            raise ConfigError(
                f"alphabet must be in [1, {MAX_ALPHABET}], got {self.alphabet}"
            )
        if not (math.isfinite(self.concentration) and self.concentration > 0):
            raise ConfigError(f"concentration must be positive, got {self.concentration}")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"bad length range {self.length_range}")
        if self.samples_per_class < 1:
            raise ConfigError(f"samples_per_class must be >= 1, got {self.samples_per_class}")


def synth_labels(classes: int) -> LabelSet:
    width = len(str(classes - 1))
    return LabelSet([f"c{k:0{width}d}" for k in range(classes)])


def synth_alphabet(alphabet: int) -> str:
    return "abcdefghijklmnopqrstuvwxyz"[:alphabet]


def _draw_models(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    alpha = np.full(spec.alphabet, spec.concentration)
    initials = np.empty((spec.classes, spec.alphabet))
    transitions = np.empty((spec.classes, spec.alphabet, spec.alphabet))
    for k in range(spec.classes):
        initials[k] = rng.dirichlet(alpha)
        for a in range(spec.alphabet):
            transitions[k, a] = rng.dirichlet(alpha)
    return initials, transitions


def class_markov_models(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-class initial distributions (K, A) and transition matrices
    (K, A, A), rows normalized to 1 within 1e-9."""
    spec.validate()
    return _draw_models(spec, make_stream(spec.seed, STREAM_SYNTH))


def gen_synthetic(spec: SynthSpec) -> Dataset:
    """Markov-chain samples, `samples_per_class` per class, class-major
    order; identical seeds give identical datasets.

    One stream drives everything: model parameters are drawn first, sample
    noise continues on the same stream, so the chains visible through
    `class_markov_models` are exactly the ones sampled from.
    """
    spec.validate()
    rng = make_stream(spec.seed, STREAM_SYNTH)
    initials, transitions = _draw_models(spec, rng)

    letters = synth_alphabet(spec.alphabet)
    labels = synth_labels(spec.classes)
    lo, hi = spec.length_range
    samples = []
    for k in range(spec.classes):
        for _ in range(spec.samples_per_class):
            n = int(rng.integers(lo, hi + 1))
            ids = np.empty(n, dtype=np.int64)
            ids[0] = rng.choice(spec.alphabet, p=initials[k])
            for t in range(1, n):
                ids[t] = rng.choice(spec.alphabet, p=transitions[k, ids[t - 1]])
            samples.append(Sample(label=k, text="".join(letters[i] for i in ids)))
    return Dataset(samples, labels, TEXT_MODE)


def split_dataset(dataset: Dataset, fractions: tuple[float, ...]) -> tuple[Dataset, ...]:
    """Split per class at cumulative-fraction boundaries, preserving order
    within each part.  Fractions must sum to 1 within 1e-9."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions {fractions} do not sum to 1")
    if any(f < 0 for f in fractions):
        raise ConfigError(f"negative split fraction in {fractions}")

    by_class: dict[int, list[Sample]] = {}
    for s in dataset.samples:
        by_class.setdefault(s.label, []).append(s)

    parts: list[list[Sample]] = [[] for _ in fractions]
    for _, group in sorted(by_class.items()):
        n = len(group)
        cuts = [int(math.floor(sum(fractions[: j + 1]) * n)) for j in range(len(fractions))]
        cuts[-1] = n
        start = 0
        for j, end in enumerate(cuts):
            parts[j].extend(group[start:end])
            start = end
    return tuple(Dataset(p, dataset.labels, dataset.mode) for p in parts)


class BigramOracle:
    """Add-one-smoothed character bigram likelihood classifier.

    Entirely count-based: no shared code with the recurrent models, which
    makes it a fair independent baseline.  Ties break toward the lowest
    label id.
    """

    START = "\x02"

    def __init__(self, labels: LabelSet):
        self.labels = labels
        self._counts = [Counter() for _ in range(len(labels))]
        self._context_totals = [Counter() for _ in range(len(labels))]
        self._charset: set[str] = set()

    def fit(self, dataset: Dataset) -> "BigramOracle":
        for s in dataset.samples:
            prev = self.START
            for ch in s.text:
                self._counts[s.label][(prev, ch)] += 1
                self._context_totals[s.label][prev] += 1
                self._charset.add(ch)
                prev = ch
        return self

    def log_likelihood(self, text: str, label: int) -> float:
        v = len(self._charset) + 1   # +1 for unseen symbols
        counts = self._counts[label]
        totals = self._context_totals[label]
        score = 0.0
        prev = self.START
        for ch in text:
            score += math.log((counts[(prev, ch)] + 1) / (totals[prev] + v))
            prev = ch
        return score

    def predict(self, text: str) -> int:
        scores = [self.log_likelihood(text, k) for k in range(len(self.labels))]
        best = max(range(len(scores)), key=lambda k: (scores[k], -k))
        return best

    def accuracy(self, dataset: Dataset) -> float:
        hits = sum(1 for s in dataset.samples if self.predict(s.text) == s.label)
        return hits / len(dataset.samples)
