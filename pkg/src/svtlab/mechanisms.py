"""Laplace noise and the exponential mechanism.

All sampling goes through an explicit :class:`numpy.random.Generator`.  Laplace
draws use the inverse-CDF transform of one uniform per variate so a seeded
stream always maps to the same noise values, whether drawn one at a time or
in a batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyCandidateError, InvalidCutoffError

_LOG_HALF = math.log(0.5)
# smallest uniform we allow into the quantile; keeps draws finite
_TINY_U = 2.0 ** -60


@dataclass(frozen=True)
class LaplaceDist:
    """Zero-centred Laplace distribution with scale ``scale_b``."""

    scale_b: float

    def __post_init__(self):
        if not (self.scale_b > 0 and math.isfinite(self.scale_b)):
            raise ValueError(f"Laplace scale must be positive and finite, got {self.scale_b!r}")

    @property
    def variance(self) -> float:
        return 2.0 * self.scale_b ** 2

    @property
    def std(self) -> float:
        return math.sqrt(2.0) * self.scale_b

    def pdf(self, x):
        return laplace_pdf(self, x)

    def cdf(self, x):
        return laplace_cdf(self, x)

    def logpdf(self, x):
        return laplace_logpdf(self, x)

    def logcdf(self, x):
        return laplace_logcdf(self, x)

    def logsf(self, x):
        return laplace_logsf(self, x)

    def quantile(self, p):
        return laplace_quantile(self, p)

    def sample(self, rng: np.random.Generator, size=None):
        return laplace_sample(self, rng, size)


def laplace_pdf(dist: LaplaceDist, x):
    b = dist.scale_b
    return np.exp(-np.abs(x) / b) / (2.0 * b)


def laplace_logpdf(dist: LaplaceDist, x):
    b = dist.scale_b
    return -np.abs(x) / b - math.log(2.0 * b)


def laplace_cdf(dist: LaplaceDist, x):
    """``x <= 0``: ``exp(x/b)/2``; otherwise ``1 - exp(-x/b)/2``."""
    b = dist.scale_b
    x = np.asarray(x, dtype=float)
    lower = 0.5 * np.exp(np.minimum(x, 0.0) / b)
    upper = 1.0 - 0.5 * np.exp(-np.maximum(x, 0.0) / b)
    out = np.where(x <= 0, lower, upper)
    return out[()] if out.ndim == 0 else out


def laplace_logcdf(dist: LaplaceDist, x):
    b = dist.scale_b
    x = np.asarray(x, dtype=float)
    lower = _LOG_HALF + np.minimum(x, 0.0) / b
    upper = np.log1p(-0.5 * np.exp(-np.maximum(x, 0.0) / b))
    out = np.where(x <= 0, lower, upper)
    return out[()] if out.ndim == 0 else out


def laplace_logsf(dist: LaplaceDist, x):
    """Log of ``P(X >= x)``; by symmetry this is ``logcdf(-x)``."""
    return laplace_logcdf(dist, -np.asarray(x, dtype=float))


def laplace_interval_mass(dist: LaplaceDist, lo, hi):
    """``P(lo <= X <= hi)`` without cancellation for narrow intervals; 0 if ``hi <= lo``."""
    b = dist.scale_b
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        left = 0.5 * np.exp(np.minimum(hi, 0.0) / b) * -np.expm1(np.minimum(lo - hi, 0.0) / b)
        right = 0.5 * np.exp(-np.maximum(lo, 0.0) / b) * -np.expm1(np.minimum(lo - hi, 0.0) / b)
        straddle = -0.5 * np.expm1(np.minimum(lo, 0.0) / b) - 0.5 * np.expm1(-np.maximum(hi, 0.0) / b)
    out = np.where(hi <= 0, left, np.where(lo >= 0, right, straddle))
    out = np.where(hi > lo, out, 0.0)
    return out[()] if out.ndim == 0 else out


def laplace_quantile(dist: LaplaceDist, p):
    b = dist.scale_b
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        lower = b * np.log(2.0 * np.minimum(p, 0.5))
        upper = -b * np.log(2.0 * (1.0 - np.maximum(p, 0.5)))
    out = np.where(p < 0.5, lower, upper)
    return out[()] if out.ndim == 0 else out


def laplace_from_uniform(u, scale_b: float) -> np.ndarray:
    """Map uniforms in ``[0, 1)`` to Laplace(``scale_b``) variates.

    Works on arrays only; callers needing a scalar pass a length-1 array so the
    same vectorised code path (and therefore the same bits) is used.
    """
    u = np.maximum(np.asarray(u, dtype=float), _TINY_U)
    b = scale_b
    return np.where(u < 0.5, b * np.log(2.0 * np.minimum(u, 0.5)),
                    -b * np.log(2.0 * (1.0 - np.maximum(u, 0.5))))


def laplace_sample(dist: LaplaceDist, rng: np.random.Generator, size=None):
    """Inverse-CDF Laplace sample(s) from ``rng``; one uniform per variate."""
    if size is None:
        return float(laplace_from_uniform(rng.random(1), dist.scale_b)[0])
    return laplace_from_uniform(rng.random(size), dist.scale_b)


@dataclass(frozen=True)
class QuerySet:
    """True query answers sharing one sensitivity bound.

    ``monotonic=True`` is the caller's promise that neighbouring datasets move
    every answer in the same direction; it only changes noise calibration.
    """

    scores: np.ndarray
    sensitivity_delta: float = 1.0
    monotonic: bool = False

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float).reshape(-1)
        if not np.all(np.isfinite(scores)):
            raise ValueError("query scores must be finite")
        if not (self.sensitivity_delta > 0 and math.isfinite(self.sensitivity_delta)):
            raise ValueError("sensitivity_delta must be positive")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    def __len__(self):
        return self.scores.shape[0]


@dataclass(frozen=True)
class SelectionResult:
    chosen_indices: tuple
    per_round_budget: float
    passes: int = field(default=1, compare=False)


def em_weight_factor(qs: QuerySet, epsilon: float) -> float:
    """Coefficient on the score inside ``exp``: eps/(2*delta), or eps/delta if monotonic."""
    if qs.monotonic:
        return epsilon / qs.sensitivity_delta
    return epsilon / (2.0 * qs.sensitivity_delta)


def em_probabilities(qs: QuerySet, epsilon: float, exclude: Iterable[int] = ()) -> np.ndarray:
    """Exact selection probabilities of one exponential-mechanism draw.

    Excluded indices get probability zero.  Weights are formed in log space
    with the maximum subtracted before exponentiating.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    logw = em_weight_factor(qs, epsilon) * qs.scores
    mask = np.ones(len(qs), dtype=bool)
    excl = list(exclude)
    if excl:
        mask[excl] = False
    if not mask.any():
        raise EmptyCandidateError("all candidates are excluded")
    logw = np.where(mask, logw, -np.inf)
    w = np.exp(logw - logw[mask].max())
    return w / w.sum()


def _draw_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(probs)
    u = rng.random()
    # side="right" never lands on a zero-probability slot
    return int(np.searchsorted(cum, u * cum[-1], side="right"))


def em_select_one(qs: QuerySet, epsilon: float, exclude: Iterable[int] = (),
                  rng: Optional[np.random.Generator] = None) -> int:
    if rng is None:
        raise ValueError("an explicit random generator is required")
    return _draw_index(em_probabilities(qs, epsilon, exclude), rng)


def em_select_top_c(qs: QuerySet, epsilon: float, c: int,
                    rng: np.random.Generator) -> SelectionResult:
    """Run ``c`` exponential-mechanism rounds at ``epsilon / c`` each.

    Each winner leaves the candidate pool before the next round.
    """
    if c < 1 or c > len(qs):
        raise InvalidCutoffError(f"cutoff c={c} outside 1..{len(qs)}")
    per_round = epsilon / c
    factor = em_weight_factor(qs, per_round)
    logw = factor * qs.scores
    chosen = []
    active = np.ones(len(qs), dtype=bool)
    for _ in range(c):
        lw = np.where(active, logw, -np.inf)
        w = np.exp(lw - lw[active].max())
        idx = _draw_index(w / w.sum(), rng)
        chosen.append(idx)
        active[idx] = False
    return SelectionResult(tuple(chosen), per_round)


def utility_bounds(k: int, beta: float, epsilon: float) -> tuple[float, float]:
    """Accuracy margins ``(alpha_svt, alpha_em)`` for picking the one large query among ``k``.

    Natural logarithms throughout.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    alpha_svt = 8.0 * (math.log(k) + math.log(2.0 / beta)) / epsilon
    alpha_em = (math.log(k - 1) + math.log((1.0 - beta) / beta)) / epsilon
    return alpha_svt, alpha_em


def sequential_budget(parts: Sequence[float]) -> float:
    """Total budget of sequentially composed mechanisms."""
    return float(math.fsum(parts))
