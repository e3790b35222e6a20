"""Numerical privacy audits of the SVT variants.

The probability that a variant emits a given output pattern on a fixed query
vector is a one-dimensional integral over the threshold noise ``z``::

    Pr = ∫ pdf_rho(z) · ∏_{below} F_nu(z - d_i) · ∏_{above} S_nu(z - d_i) dz,

with ``d_i = q_i - T_i`` and ``F``/``S`` the query-noise CDF and survival
function.  ``prob_output_quadrature`` evaluates it in log space;
``prob_output_montecarlo`` estimates it by simulating the mechanism.  Comparing
the two outputs on neighbouring inputs gives the privacy-loss ratio.

Patterns are tuples of :data:`BELOW`, :data:`ABOVE` and floats (numeric
outputs).  For numeric entries quadrature returns a log *density*; pass
``numeric_bin=h`` to get the probability of landing within ``h`` of the value
instead, which is what Monte Carlo estimates.
"""
from __future__ import annotations

import csv
import enum
import io
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, List, NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .errors import InvalidPatternError, UnsupportedVariantError
from .mechanisms import (LaplaceDist, laplace_from_uniform, laplace_interval_mass,
                         laplace_logpdf)
from .quadrature import log_integrate
from .svt import (ABOVE, BELOW, Mark, OutcomeVector, SvtConfig, Variant, emits_numeric,
                  noise_scales)

BOUND_TOLERANCE = 1e-6
WILSON_Z = 1.959963984540054
# Monte Carlo numeric bins are this fraction of the numeric noise scale
NUMERIC_BIN_FRACTION = 1e-2


class Side(str, enum.Enum):
    D = "D"
    DPRIME = "Dprime"


class Method(str, enum.Enum):
    QUADRATURE = "quadrature"
    MONTECARLO = "montecarlo"


class Verdict(str, enum.Enum):
    WITHIN_BOUND = "WithinBound"
    VIOLATES_BOUND = "ViolatesBound"
    UNBOUNDED = "Unbounded"


def _as_pattern(target) -> tuple:
    if isinstance(target, OutcomeVector):
        target = target.answers
    out = []
    for a in target:
        if isinstance(a, Mark):
            out.append(a)
        elif isinstance(a, str):
            key = a.strip().lower()
            if key in ("below", "⊥", "0", "-"):
                out.append(BELOW)
            elif key in ("above", "⊤", "1", "+"):
                out.append(ABOVE)
            else:
                out.append(float(a))
        else:
            out.append(float(a))
    return tuple(out)


@dataclass(frozen=True)
class NeighborInstance:
    """Query answers on two neighbouring datasets plus the output pattern to score."""

    scores_d: np.ndarray
    scores_d_prime: np.ndarray
    delta: float = 1.0
    thresholds: Optional[np.ndarray] = None
    target_output: tuple = ()
    instance_id: str = ""
    m: Optional[int] = None

    def __post_init__(self):
        d = np.asarray(self.scores_d, dtype=float).reshape(-1)
        dp = np.asarray(self.scores_d_prime, dtype=float).reshape(-1)
        if d.shape != dp.shape:
            raise ValueError("score vectors must have equal length")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if np.any(np.abs(d - dp) > self.delta * (1 + 1e-12)):
            raise ValueError("scores differ by more than delta: not neighbours")
        t = np.zeros_like(d) if self.thresholds is None else np.broadcast_to(
            np.asarray(self.thresholds, dtype=float), d.shape).copy()
        for arr in (d, dp, t):
            arr.setflags(write=False)
        object.__setattr__(self, "scores_d", d)
        object.__setattr__(self, "scores_d_prime", dp)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "target_output", _as_pattern(self.target_output))
        if len(self.target_output) > d.shape[0]:
            raise InvalidPatternError("pattern longer than the query stream")

    def scores(self, on) -> np.ndarray:
        return self.scores_d if Side(on) is Side.D else self.scores_d_prime

    def with_pattern(self, target) -> "NeighborInstance":
        return replace(self, target_output=_as_pattern(target))


def validate_pattern(config: SvtConfig, pattern: Sequence, n_queries: int) -> None:
    """Reject patterns the variant can never emit."""
    pattern = _as_pattern(pattern)
    numeric_ok = emits_numeric(config)
    positives = 0
    for a in pattern:
        if isinstance(a, float):
            if not numeric_ok:
                raise InvalidPatternError(f"{config.variant.value} never emits numeric answers")
            positives += 1
        elif a is ABOVE:
            if numeric_ok:
                raise InvalidPatternError(
                    f"{config.variant.value} answers positives with numeric values")
            positives += 1
    if config.variant.aborts:
        c = config.cutoff_c
        if positives > c:
            raise InvalidPatternError(f"{positives} positives exceed cutoff c={c}")
        if positives == c and pattern and pattern[-1] is BELOW:
            raise InvalidPatternError("answers continue after the abort")
        if positives < c and len(pattern) != n_queries:
            raise InvalidPatternError("fewer than c positives but the stream is not exhausted")
    elif len(pattern) != n_queries:
        raise InvalidPatternError("non-aborting variants answer every query")


def numeric_bin_width(config: SvtConfig, delta: float = 1.0) -> float:
    """Default Monte Carlo bin half-width for numeric answers."""
    scales = noise_scales(config, delta)
    scale = scales.query if config.variant is Variant.ALG3 else scales.numeric
    return NUMERIC_BIN_FRACTION * scale


def _integrand(config: SvtConfig, scores, thresholds, pattern, delta, numeric_bin):
    """Build the log-integrand and its support for one side of an instance."""
    scales = noise_scales(config, delta)
    b_rho, b_nu = scales.threshold, scales.query
    lo, hi = -math.inf, math.inf
    below, above, kinks = [], [], [0.0]
    const = 0.0
    extras: List[Callable] = []
    for j, a in enumerate(pattern):
        d = float(scores[j] - thresholds[j])
        if isinstance(a, float):
            if config.variant is Variant.ALG3:
                # nu_j is pinned to a - q_j; the comparison becomes z <= a - T_j
                x = a - float(scores[j])
                if numeric_bin is None:
                    const += float(laplace_logpdf(LaplaceDist(b_nu), x))
                    hi = min(hi, a - float(thresholds[j]))
                else:
                    extras.append(_binned_alg3_term(x, float(thresholds[j]) - float(scores[j]),
                                                    numeric_bin, b_nu))
                    hi = min(hi, a + numeric_bin - float(thresholds[j]))
                    kinks.append(a - numeric_bin - float(thresholds[j]))
                continue
            # alg7: independent numeric noise; comparison as for an Above answer
            gamma = LaplaceDist(scales.numeric)
            x = a - float(scores[j])
            if numeric_bin is None:
                const += float(laplace_logpdf(gamma, x))
            else:
                mass = float(laplace_interval_mass(gamma, x - numeric_bin, x + numeric_bin))
                const += math.log(mass) if mass > 0 else -math.inf
            a = ABOVE
        if b_nu == 0:
            if a is BELOW:
                lo = max(lo, d)
            else:
                hi = min(hi, d)
        else:
            (below if a is BELOW else above).append(d)
            kinks.append(d)
    below_arr = np.array(below, dtype=float)
    above_arr = np.array(above, dtype=float)
    nu_for_kernel = b_nu if b_nu > 0 else 1.0

    def logf(z):
        out = kernels.log_integrand(z, below_arr, above_arr, b_rho, nu_for_kernel) + const
        for term in extras:
            out = out + term(z)
        return out

    return logf, lo, hi, kinks, max(b_rho, b_nu), const


def _binned_alg3_term(x, t_minus_q, h, b):
    """log P(x - h <= nu <= x + h and nu >= z + T - q) as a function of z."""
    dist = LaplaceDist(b)

    def term(z):
        lower = np.maximum(x - h, z + t_minus_q)
        with np.errstate(divide="ignore"):
            return np.log(laplace_interval_mass(dist, lower, x + h))

    return term


def prob_output_quadrature(config: SvtConfig, inst: NeighborInstance, on=Side.D,
                           numeric_bin: Optional[float] = None, tol: float = 1e-12) -> float:
    """Log-probability that ``config`` emits ``inst.target_output`` on one side.

    Returns ``-inf`` for impossible outputs.  Numeric entries contribute a log
    density unless ``numeric_bin`` is given.
    """
    if config.variant is Variant.ALG2:
        raise UnsupportedVariantError("alg2 re-draws its threshold; use Monte Carlo")
    pattern = inst.target_output
    scores = inst.scores(on)
    validate_pattern(config, pattern, scores.shape[0])
    if not pattern:
        return 0.0
    logf, lo, hi, kinks, scale, const = _integrand(
        config, scores, inst.thresholds, pattern, inst.delta, numeric_bin)
    if const == -math.inf:
        return -math.inf
    return log_integrate(logf, lo, hi, kinks, scale=scale, tol=tol)


class McEstimate(NamedTuple):
    log_prob: float
    ci_halfwidth: float


def wilson_halfwidth(successes: int, n: int, z: float = WILSON_Z) -> float:
    """Half-width of the Wilson score interval; rule of three (3/n) at zero successes."""
    if successes == 0:
        return 3.0 / n
    p = successes / n
    denom = 1.0 + z * z / n
    return z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom


def prob_output_montecarlo(config: SvtConfig, inst: NeighborInstance, on=Side.D,
                           n_samples: int = 10 ** 6, rng: Optional[np.random.Generator] = None,
                           numeric_bin: Optional[float] = None,
                           batch_size: int = 200_000) -> McEstimate:
    """Fraction of simulated runs that reproduce the target pattern.

    Numeric answers count as a match when within ``numeric_bin`` (default:
    1% of the numeric noise scale) of the target value.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if rng is None:
        raise ValueError("an explicit random generator is required")
    pattern = inst.target_output
    scores = inst.scores(on)
    validate_pattern(config, pattern, scores.shape[0])
    L = len(pattern)
    if L == 0:
        return McEstimate(0.0, 0.0)
    scales = noise_scales(config, inst.delta)
    h = numeric_bin if numeric_bin is not None else (
        numeric_bin_width(config, inst.delta) if emits_numeric(config) else 0.0)
    margins = scores[:L] - inst.thresholds[:L]
    codes = np.array([0 if a is BELOW else (2 if isinstance(a, float) else 1) for a in pattern],
                     dtype=np.int8)
    positives_before = np.concatenate([[0], np.cumsum(codes > 0)[:-1]])
    redraw = scales.redraw is not None
    rho_index = positives_before if redraw else np.zeros(L, dtype=np.int64)
    n_rho = int(rho_index.max()) + 1
    numeric_cols = np.flatnonzero(codes == 2)
    targets = np.array([a for a in pattern if isinstance(a, float)], dtype=float)

    hits = 0
    done = 0
    while done < n_samples:
        n = min(batch_size, n_samples - done)
        rho = np.empty((n, n_rho))
        rho[:, 0] = laplace_from_uniform(rng.random(n), scales.threshold)
        if n_rho > 1:
            rho[:, 1:] = laplace_from_uniform(rng.random((n, n_rho - 1)), scales.redraw)
        if scales.query > 0:
            nu = laplace_from_uniform(rng.random((n, L)), scales.query)
            noisy = margins[None, :] + nu
        else:
            nu = None
            noisy = np.broadcast_to(margins, (n, L))
        ok = np.zeros((n, L), dtype=np.uint8)
        if numeric_cols.size:
            if config.variant is Variant.ALG3:
                values = scores[numeric_cols][None, :] + nu[:, numeric_cols]
            else:
                gamma = laplace_from_uniform(rng.random((n, numeric_cols.size)), scales.numeric)
                values = scores[numeric_cols][None, :] + gamma
            ok[:, numeric_cols] = np.abs(values - targets[None, :]) <= h
        hits += kernels.mc_match_count(noisy, rho, rho_index, codes, ok)
        done += n
    p = hits / n_samples
    log_p = math.log(p) if hits else -math.inf
    return McEstimate(log_p, wilson_halfwidth(hits, n_samples))


@dataclass(frozen=True)
class AuditReport:
    log_prob_d: float
    log_prob_d_prime: float
    log_ratio: float
    method: Method
    ci_halfwidth: float = 0.0
    claimed_bound: Optional[float] = None
    verdict: Verdict = Verdict.WITHIN_BOUND
    variant: str = ""
    instance_id: str = ""
    m: Optional[int] = None
    pattern: tuple = field(default=(), compare=False)

    def to_row(self) -> dict:
        return {
            "variant": self.variant,
            "instance_id": self.instance_id,
            "m": "" if self.m is None else self.m,
            "method": self.method.value,
            "log_prob_d": repr(self.log_prob_d),
            "log_prob_dprime": repr(self.log_prob_d_prime),
            "log_ratio": repr(self.log_ratio),
            "ci": repr(self.ci_halfwidth),
            "verdict": self.verdict.value,
        }


CSV_FIELDS = ["variant", "instance_id", "m", "method", "log_prob_d", "log_prob_dprime",
              "log_ratio", "ci", "verdict"]


def log_ratio_of(log_d: float, log_dp: float) -> float:
    if log_d == -math.inf and log_dp == -math.inf:
        return math.nan
    if log_dp == -math.inf:
        return math.inf
    if log_d == -math.inf:
        return -math.inf
    return log_d - log_dp


def judge(log_d: float, log_dp: float, claim: Optional[float]) -> Verdict:
    """Unbounded when exactly one side is impossible; otherwise compare |ratio| to the claim."""
    if (log_d == -math.inf) != (log_dp == -math.inf):
        return Verdict.UNBOUNDED
    ratio = log_ratio_of(log_d, log_dp)
    if math.isnan(ratio) or claim is None:
        return Verdict.WITHIN_BOUND
    return Verdict.WITHIN_BOUND if abs(ratio) <= claim + BOUND_TOLERANCE else Verdict.VIOLATES_BOUND


def audit_instance(config: SvtConfig, inst: NeighborInstance, method=Method.QUADRATURE,
                   eps_claim: Optional[float] = None, n_samples: int = 10 ** 6,
                   rng: Optional[np.random.Generator] = None,
                   numeric_bin: Optional[float] = None) -> AuditReport:
    """Score one instance on both sides and judge it against ``eps_claim``.

    ``eps_claim`` defaults to the configuration's total budget.
    """
    method = Method(method)
    claim = config.total_epsilon if eps_claim is None else eps_claim
    if method is Method.QUADRATURE:
        log_d = prob_output_quadrature(config, inst, Side.D, numeric_bin)
        log_dp = prob_output_quadrature(config, inst, Side.DPRIME, numeric_bin)
        ci = 0.0
    else:
        est_d = prob_output_montecarlo(config, inst, Side.D, n_samples, rng, numeric_bin)
        est_dp = prob_output_montecarlo(config, inst, Side.DPRIME, n_samples, rng, numeric_bin)
        log_d, log_dp = est_d.log_prob, est_dp.log_prob
        ci = max(est_d.ci_halfwidth, est_dp.ci_halfwidth)
    return AuditReport(log_d, log_dp, log_ratio_of(log_d, log_dp), method, ci, claim,
                       judge(log_d, log_dp, claim), config.variant.value, inst.instance_id,
                       inst.m, inst.target_output)


class Counterexample(str, enum.Enum):
    ALG3_APPENDIX = "Alg3_Appendix"
    ALG5_THM2 = "Alg5_Thm2"
    ALG6_APPENDIX = "Alg6_Appendix"

    @classmethod
    def parse(cls, value) -> "Counterexample":
        if isinstance(value, cls):
            return value
        aliases = {"appendixa1": cls.ALG3_APPENDIX, "alg3": cls.ALG3_APPENDIX,
                   "thm2": cls.ALG5_THM2, "alg5": cls.ALG5_THM2,
                   "appendixa2": cls.ALG6_APPENDIX, "alg6": cls.ALG6_APPENDIX}
        key = str(value).strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        return aliases[key]


@dataclass(frozen=True)
class CounterexampleSpec:
    id: Counterexample
    size_m: int = 1
    epsilon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "id", Counterexample.parse(self.id))
        if self.size_m < 1:
            raise ValueError("size_m must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


class CounterexampleCase(NamedTuple):
    instance: NeighborInstance
    config: SvtConfig
    expected_log_ratio: float
    expected_is_lower_bound: bool = False


def make_counterexample(spec: CounterexampleSpec) -> CounterexampleCase:
    """Known neighbouring inputs on which a non-private variant leaks.

    * ``Alg3_Appendix``: ``m`` below answers then the numeric answer 0; the
      log-ratio is exactly ``(m-1)·eps/2``.
    * ``Alg5_Thm2``: without query noise, ``(0, 1)`` vs ``(1, 0)`` with
      pattern ``(⊥, ⊤)`` is impossible on one side: unbounded loss.
    * ``Alg6_Appendix``: ``0^{2m}`` vs ``1^m (-1)^m`` with ``⊥^m ⊤^m``; the
      log-ratio is at least ``m·eps/2``.
    """
    m, eps, delta = spec.size_m, spec.epsilon, 1.0
    if spec.id is Counterexample.ALG3_APPENDIX:
        d = np.concatenate([np.zeros(m), [delta]])
        dp = np.concatenate([np.full(m, delta), [0.0]])
        inst = NeighborInstance(d, dp, delta, 0.0, (BELOW,) * m + (0.0,),
                                spec.id.value, m)
        cfg = SvtConfig(Variant.ALG3, cutoff_c=1, thresholds=0.0, epsilon=eps)
        return CounterexampleCase(inst, cfg, (m - 1) * eps / 2.0)
    if spec.id is Counterexample.ALG5_THM2:
        inst = NeighborInstance([0.0, 1.0], [1.0, 0.0], delta, 0.0, (BELOW, ABOVE),
                                spec.id.value, None)
        return CounterexampleCase(inst, SvtConfig(Variant.ALG5, thresholds=0.0, epsilon=eps),
                                  math.inf)
    d = np.zeros(2 * m)
    dp = np.concatenate([np.ones(m), -np.ones(m)])
    inst = NeighborInstance(d, dp, delta, 0.0, (BELOW,) * m + (ABOVE,) * m, spec.id.value, m)
    cfg = SvtConfig(Variant.ALG6, thresholds=0.0, epsilon=eps)
    return CounterexampleCase(inst, cfg, m * eps / 2.0, True)


def enumerate_patterns(config: SvtConfig, length: int) -> Iterator[tuple]:
    """All indicator patterns ``config`` can emit on a stream of ``length`` queries."""
    if emits_numeric(config):
        raise UnsupportedVariantError("pattern enumeration covers indicator outputs only")
    if not config.variant.aborts:
        yield from itertools.product((BELOW, ABOVE), repeat=length)
        return
    c = config.cutoff_c
    for n in range(length + 1):
        for combo in itertools.product((BELOW, ABOVE), repeat=n):
            k = combo.count(ABOVE)
            if (k == c and n and combo[-1] is ABOVE) or (k < c and n == length):
                yield combo


def adversarial_family(config: SvtConfig, max_len: int, delta: float = 1.0) -> Iterator[NeighborInstance]:
    """``q(D) = 0^l`` against every ``q(D') ∈ {-delta, 0, delta}^l``, for ``l <= max_len``.

    Each neighbour pair is paired with every pattern the variant can emit.
    """
    for length in range(1, max_len + 1):
        patterns = list(enumerate_patterns(config, length))
        for steps in itertools.product((-1, 0, 1), repeat=length):
            dp = delta * np.array(steps, dtype=float)
            tag = "".join("+0-"[1 - s] for s in steps)
            for pat in patterns:
                yield NeighborInstance(np.zeros(length), dp, delta, 0.0, pat,
                                       f"adv[{tag}]{_pattern_tag(pat)}", length)


def _pattern_tag(pattern) -> str:
    return "".join("⊤" if a is ABOVE else "⊥" if a is BELOW else f"<{a:g}>" for a in pattern)


@dataclass(frozen=True)
class BoundSummary:
    worst: Optional[AuditReport]
    reports: tuple
    claimed_bound: float

    @property
    def verdict(self) -> Verdict:
        if any(r.verdict is Verdict.UNBOUNDED for r in self.reports):
            return Verdict.UNBOUNDED
        if any(r.verdict is Verdict.VIOLATES_BOUND for r in self.reports):
            return Verdict.VIOLATES_BOUND
        return Verdict.WITHIN_BOUND

    @property
    def max_abs_log_ratio(self) -> float:
        vals = [abs(r.log_ratio) for r in self.reports if not math.isnan(r.log_ratio)]
        return max(vals, default=0.0)


def verify_dp_bound(config: SvtConfig, instances: Iterable[NeighborInstance],
                    eps_claim: Optional[float] = None) -> BoundSummary:
    """Quadrature-audit every instance and report the worst ``|log-ratio|``.

    Side probabilities are cached by (scores, thresholds, pattern), which
    makes sweeps over a shared ``q(D)`` cheap.
    """
    claim = config.total_epsilon if eps_claim is None else eps_claim
    cache: dict = {}

    def side_prob(inst, side):
        key = (inst.scores(side).tobytes(), inst.thresholds.tobytes(), inst.delta,
               inst.target_output)
        if key not in cache:
            cache[key] = prob_output_quadrature(config, inst, side)
        return cache[key]

    reports = []
    worst = None
    for inst in instances:
        log_d, log_dp = side_prob(inst, Side.D), side_prob(inst, Side.DPRIME)
        rep = AuditReport(log_d, log_dp, log_ratio_of(log_d, log_dp), Method.QUADRATURE, 0.0,
                          claim, judge(log_d, log_dp, claim), config.variant.value,
                          inst.instance_id, inst.m, inst.target_output)
        reports.append(rep)
        if worst is None or _severity(rep) > _severity(worst):
            worst = rep
    return BoundSummary(worst, tuple(reports), claim)


def _severity(rep: AuditReport) -> float:
    return -1.0 if math.isnan(rep.log_ratio) else abs(rep.log_ratio)


class GrowthRow(NamedTuple):
    m: int
    measured_log_ratio: float
    expected: float
    report: AuditReport


def ratio_growth_curve(spec: CounterexampleSpec, m_values: Sequence[int],
                       method=Method.QUADRATURE, n_samples: int = 10 ** 6,
                       rng: Optional[np.random.Generator] = None) -> List[GrowthRow]:
    """Measured vs expected log-ratio of a counterexample as its size grows."""
    rows = []
    for m in m_values:
        case = make_counterexample(replace(spec, size_m=m))
        rep = audit_instance(case.config, case.instance, method, None, n_samples, rng)
        rows.append(GrowthRow(m, rep.log_ratio, case.expected_log_ratio, rep))
    return rows


def write_audit_csv(reports: Iterable[AuditReport], out) -> None:
    """Write reports as CSV to a path or text stream."""
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_audit_csv(reports, fh)
        return
    writer = csv.DictWriter(out, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        writer.writerow(rep.to_row())


def audit_csv_text(reports: Iterable[AuditReport]) -> str:
    buf = io.StringIO()
    write_audit_csv(reports, buf)
    return buf.getvalue()
