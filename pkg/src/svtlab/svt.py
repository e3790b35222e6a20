"""Sparse vector technique variants.

Seven variants are implemented exactly as their pseudocode reads, including
the ones that are not differentially private (they are audit subjects):

========  =========  ===================  ===================  =====  ==========================
variant   eps1       threshold noise      query noise          abort  notes
========  =========  ===================  ===================  =====  ==========================
alg1      eps/2      Lap(D/eps1)          Lap(2cD/eps2)        yes
alg2      eps/2      Lap(cD/eps1)         Lap(2cD/eps2)        yes    threshold re-drawn per hit
alg3      eps/2      Lap(D/eps1)          Lap(cD/eps2)         yes    outputs q_i + nu_i
alg4      eps/4      Lap(D/eps1)          Lap(D/eps2)          yes
alg5      eps/2      Lap(D/eps1)          none                 no
alg6      free       Lap(D/eps1)          Lap(D/eps2)          no     generalized threshold test
alg7      free       Lap(D/eps1)          Lap(2cD/eps2)        yes    optional Lap(cD/eps3) values
========  =========  ===================  ===================  =====  ==========================

With ``monotonic=True`` (alg7 only) the query noise halves to ``Lap(cD/eps2)``.

Randomness: every run splits the caller's generator into three child streams
(threshold, query, numeric).  Query noise is one uniform per query in stream
order, so a run and an interactive session started from equal seeds see the
same noise.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import (InvalidCutoffError, SessionClosedError,
                     UnsupportedCombinationError)
from .mechanisms import QuerySet, SelectionResult, laplace_from_uniform


class Variant(str, enum.Enum):
    ALG1 = "alg1"
    ALG2 = "alg2"
    ALG3 = "alg3"
    ALG4 = "alg4"
    ALG5 = "alg5"
    ALG6 = "alg6"
    ALG7 = "alg7"
    GPTT = "alg6"  # alias: alg6 with a caller-chosen split

    @property
    def aborts(self) -> bool:
        return self not in (Variant.ALG5, Variant.ALG6)

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        if text == "gptt":
            return cls.ALG6
        if text.isdigit():
            text = "alg" + text
        return cls(text)


class Mark(enum.Enum):
    """Indicator answers.  Numeric answers are plain floats."""

    BELOW = 0
    ABOVE = 1

    def __repr__(self):
        return "⊥" if self is Mark.BELOW else "⊤"


BELOW = Mark.BELOW
ABOVE = Mark.ABOVE
Answer = Union[Mark, float]


def is_positive(answer: Answer) -> bool:
    return answer is not Mark.BELOW


def pattern(spec: str) -> tuple:
    """Shorthand for indicator patterns: ``pattern("--+")`` is ``(⊥, ⊥, ⊤)``.

    ``0``/``-`` mean below, ``1``/``+`` mean above.
    """
    table = {"0": BELOW, "-": BELOW, "1": ABOVE, "+": ABOVE}
    return tuple(table[ch] for ch in spec if not ch.isspace())


@dataclass(frozen=True)
class BudgetSplit:
    eps1: float
    eps2: float
    eps3: float = 0.0

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ValueError("eps1 and eps2 must be positive")
        if self.eps3 < 0:
            raise ValueError("eps3 must be nonnegative")

    @property
    def total(self) -> float:
        return math.fsum((self.eps1, self.eps2, self.eps3))

    @classmethod
    def from_ratio(cls, epsilon: float, ratio: float, eps3: float = 0.0) -> "BudgetSplit":
        """Split ``epsilon`` as ``eps1:eps2 = 1:ratio``."""
        if epsilon <= 0 or ratio <= 0:
            raise ValueError("epsilon and ratio must be positive")
        eps1 = epsilon / (1.0 + ratio)
        return cls(eps1, epsilon - eps1, eps3)


def optimize_split(epsilon_for_selection: float, c: int, monotonic: bool = False) -> BudgetSplit:
    """Split minimising the variance of threshold noise minus query noise.

    The optimum of ``2(D/eps1)^2 + 2(kD/eps2)^2`` at fixed ``eps1 + eps2`` is
    ``eps1:eps2 = 1:k^(2/3)``, with ``k = 2c`` in general and ``k = c`` for
    monotonic queries.
    """
    if epsilon_for_selection <= 0:
        raise ValueError("epsilon must be positive")
    if c < 1:
        raise ValueError("c must be at least 1")
    k = c if monotonic else 2 * c
    return BudgetSplit.from_ratio(epsilon_for_selection, k ** (2.0 / 3.0))


_FIXED_EPS1_FRACTION = {
    Variant.ALG1: 0.5,
    Variant.ALG2: 0.5,
    Variant.ALG3: 0.5,
    Variant.ALG4: 0.25,
    Variant.ALG5: 0.5,
}


@dataclass(frozen=True)
class SvtConfig:
    """Which SVT variant to run and with what budget.

    Variants 1-5 fix their own split of ``epsilon``; variants 6 (GPTT) and 7
    take an explicit ``split`` or fall back to ``epsilon/2`` each.
    """

    variant: Variant
    cutoff_c: int = 1
    thresholds: Union[float, Sequence[float]] = 0.0
    epsilon: Optional[float] = None
    split: Optional[BudgetSplit] = None
    monotonic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.variant.aborts and self.cutoff_c < 1:
            raise ValueError("aborting variants need cutoff_c >= 1")
        if not np.isscalar(self.thresholds):
            object.__setattr__(self, "thresholds",
                               tuple(float(t) for t in self.thresholds))
        if self.split is None and self.epsilon is None:
            raise ValueError("give either epsilon or split")
        if self.split is not None:
            if self.variant in _FIXED_EPS1_FRACTION:
                raise UnsupportedCombinationError(
                    f"{self.variant.value} fixes its own budget split")
            if self.epsilon is not None and abs(self.split.total - self.epsilon) > 1e-12:
                raise ValueError("split does not add up to epsilon")
        elif self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def budget(self) -> BudgetSplit:
        if self.split is not None:
            return self.split
        eps = self.epsilon
        eps1 = eps * _FIXED_EPS1_FRACTION.get(self.variant, 0.5)
        return BudgetSplit(eps1, eps - eps1)

    @property
    def total_epsilon(self) -> float:
        return self.budget.total

    def thresholds_for(self, n: int) -> np.ndarray:
        if np.isscalar(self.thresholds):
            return np.full(n, float(self.thresholds))
        t = np.asarray(self.thresholds, dtype=float)
        if t.shape[0] != n:
            raise ValueError(f"{t.shape[0]} thresholds for {n} queries")
        return t


class NoiseScales(NamedTuple):
    threshold: float
    query: float
    numeric: Optional[float] = None
    redraw: Optional[float] = None  # alg2: scale of the re-drawn threshold noise


def noise_scales(config: SvtConfig, delta: float = 1.0) -> NoiseScales:
    if config.monotonic and config.variant is not Variant.ALG7:
        raise UnsupportedCombinationError(
            "the monotonic calibration is only defined for alg7")
    v = config.variant
    b = config.budget
    c = config.cutoff_c
    if v is Variant.ALG1:
        return NoiseScales(delta / b.eps1, 2 * c * delta / b.eps2)
    if v is Variant.ALG2:
        # pseudocode draws nu with eps1, the summary table with eps2; equal under the fixed split
        return NoiseScales(c * delta / b.eps1, 2 * c * delta / b.eps2,
                           redraw=c * delta / b.eps2)
    if v is Variant.ALG3:
        return NoiseScales(delta / b.eps1, c * delta / b.eps2)
    if v is Variant.ALG4:
        return NoiseScales(delta / b.eps1, delta / b.eps2)
    if v is Variant.ALG5:
        return NoiseScales(delta / b.eps1, 0.0)
    if v is Variant.ALG6:
        return NoiseScales(delta / b.eps1, delta / b.eps2)
    # alg7
    query = (1 if config.monotonic else 2) * c * delta / b.eps2
    numeric = c * delta / b.eps3 if b.eps3 > 0 else None
    return NoiseScales(delta / b.eps1, query, numeric)


def emits_numeric(config: SvtConfig) -> bool:
    return config.variant is Variant.ALG3 or (
        config.variant is Variant.ALG7 and config.budget.eps3 > 0)


@dataclass(frozen=True)
class OutcomeVector:
    answers: tuple
    abort_index: Optional[int] = None

    def __len__(self):
        return len(self.answers)

    @property
    def positives(self) -> tuple:
        return tuple(i for i, a in enumerate(self.answers) if is_positive(a))

    def matches(self, target: Sequence[Answer]) -> bool:
        return tuple(self.answers) == tuple(target)


def _child_streams(rng: np.random.Generator):
    seeds = rng.integers(0, 2 ** 63, size=3)
    return tuple(np.random.default_rng(int(s)) for s in seeds)


def _noise(stream: np.random.Generator, n: int, scale: float) -> np.ndarray:
    if scale == 0:
        return np.zeros(n)
    return laplace_from_uniform(stream.random(n), scale)


def run_svt(config: SvtConfig, qs: QuerySet, rng: np.random.Generator) -> OutcomeVector:
    """Answer the whole query stream ``qs`` in one pass."""
    n = len(qs)
    if n == 0:
        return OutcomeVector(())
    scales = noise_scales(config, qs.sensitivity_delta)
    thr_stream, query_stream, num_stream = _child_streams(rng)
    margins = qs.scores - config.thresholds_for(n)
    aborts = config.variant.aborts
    c = config.cutoff_c if aborts else 0

    if scales.redraw is not None:
        u = thr_stream.random(1 + c)
        rho = np.concatenate([laplace_from_uniform(u[:1], scales.threshold),
                              laplace_from_uniform(u[1:], scales.redraw)])
    else:
        rho = laplace_from_uniform(thr_stream.random(1), scales.threshold)
    nu = _noise(query_stream, n, scales.query)

    codes, answered = kernels.svt_scan(margins, nu, rho, c, scales.redraw is not None)
    answers = [ABOVE if code else BELOW for code in codes]
    hits = np.flatnonzero(codes)
    if config.variant is Variant.ALG3:
        for i in hits:
            answers[i] = float(qs.scores[i] + nu[i])
    elif scales.numeric is not None and hits.size:
        gamma = _noise(num_stream, hits.size, scales.numeric)
        for i, g in zip(hits, gamma):
            answers[i] = float(qs.scores[i] + g)
    abort_index = None
    if aborts and hits.size >= c:
        abort_index = answered - 1
    return OutcomeVector(tuple(answers), abort_index)


class SvtSession:
    """Interactive SVT: queries arrive one at a time.

    Single-owner mutable state; drive it from one thread at a time.
    """

    def __init__(self, config: SvtConfig, rng: np.random.Generator, delta: float = 1.0):
        self.config = config
        self.delta = delta
        self.scales = noise_scales(config, delta)
        self._thr_stream, self._query_stream, self._num_stream = _child_streams(rng)
        self.noisy_threshold_state = float(
            laplace_from_uniform(self._thr_stream.random(1), self.scales.threshold)[0])
        self.positives_count = 0
        self.aborted = False
        self.answered = 0

    def feed(self, true_answer: float, threshold: Optional[float] = None) -> Answer:
        if self.aborted:
            raise SessionClosedError("session aborted after reaching the cutoff")
        if threshold is None:
            t = self.config.thresholds
            threshold = t if np.isscalar(t) else t[self.answered]
        margin = float(true_answer) - float(threshold)
        nu = float(_noise(self._query_stream, 1, self.scales.query)[0])
        self.answered += 1
        if not (margin + nu >= self.noisy_threshold_state):
            return BELOW
        self.positives_count += 1
        if self.config.variant is Variant.ALG3:
            answer: Answer = float(true_answer) + nu
        elif self.scales.numeric is not None:
            answer = float(true_answer) + float(_noise(self._num_stream, 1, self.scales.numeric)[0])
        else:
            answer = ABOVE
        if self.scales.redraw is not None:
            self.noisy_threshold_state = float(
                laplace_from_uniform(self._thr_stream.random(1), self.scales.redraw)[0])
        if self.config.variant.aborts and self.positives_count >= self.config.cutoff_c:
            self.aborted = True
        return answer


def open_session(config: SvtConfig, rng: np.random.Generator, delta: float = 1.0) -> SvtSession:
    return SvtSession(config, rng, delta)


def feed(session: SvtSession, true_answer: float, threshold: Optional[float] = None) -> Answer:
    return session.feed(true_answer, threshold)


def query_noise_std(config: SvtConfig, delta: float = 1.0) -> float:
    """Standard deviation of the per-query Laplace noise."""
    return math.sqrt(2.0) * noise_scales(config, delta).query


def run_svt_retraversal(config: SvtConfig, qs: QuerySet, threshold_boost_sigmas: float,
                        rng: np.random.Generator, max_passes: int = 1000) -> SelectionResult:
    """Alg7 with a raised threshold, re-scanning unselected queries until ``c`` are picked.

    Every threshold is raised by ``threshold_boost_sigmas`` standard deviations
    of the query noise.  The threshold noise is drawn once; each encounter of a
    query gets fresh query noise.  Stops after ``c`` selections, when the pool
    is exhausted, or after ``max_passes`` passes.
    """
    if config.variant is not Variant.ALG7:
        raise UnsupportedCombinationError("retraversal is defined for alg7")
    if threshold_boost_sigmas < 0:
        raise ValueError("threshold boost must be nonnegative")
    n = len(qs)
    c = config.cutoff_c
    if c > n:
        raise InvalidCutoffError(f"cutoff c={c} exceeds {n} queries")
    scales = noise_scales(config, qs.sensitivity_delta)
    thr_stream, query_stream, _ = _child_streams(rng)
    boost = threshold_boost_sigmas * math.sqrt(2.0) * scales.query
    margins = qs.scores - (config.thresholds_for(n) + boost)
    rho = laplace_from_uniform(thr_stream.random(1), scales.threshold)

    remaining = np.arange(n)
    selected: list = []
    passes = 0
    while passes < max_passes and len(selected) < c and remaining.size:
        passes += 1
        nu = _noise(query_stream, remaining.size, scales.query)
        codes, answered = kernels.svt_scan(margins[remaining], nu, rho, c - len(selected), False)
        hit_mask = np.zeros(remaining.size, dtype=bool)
        hit_mask[:answered] = codes.astype(bool)
        selected.extend(int(i) for i in remaining[hit_mask])
        if scales.query == 0 and not hit_mask.any():
            break  # deterministic comparisons: another pass cannot change anything
        remaining = remaining[~hit_mask]
    return SelectionResult(tuple(selected), config.total_epsilon / c, passes)


def absolute_error_adapter(estimate: float, true_answer: float) -> float:
    """Score ``|estimate - true_answer|`` for a standard SVT; noise goes outside the ``abs``."""
    return abs(estimate - true_answer)
