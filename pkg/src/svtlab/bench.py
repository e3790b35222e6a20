"""Top-c selection benchmark: datasets, FNR/SER metrics and seeded trials.

Each trial shuffles the items, treats every item count as a query with
sensitivity 1 (counts are monotonic), runs one selection method and scores it
against the true top-c.  The benchmark threshold is the midpoint between the
c-th and (c+1)-th true scores; it comes from the raw data and is an
evaluation device, not a private step.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DataError, InvalidCutoffError, UndefinedMetricError
from .mechanisms import QuerySet, em_select_top_c
from .svt import BudgetSplit, SvtConfig, Variant, run_svt, run_svt_retraversal


@dataclass(frozen=True)
class ItemHistogram:
    ids: tuple
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float).reshape(-1)
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != counts.shape[0]:
            raise ValueError("ids and counts differ in length")
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be unique")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValueError("counts must be finite and nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return len(self.ids)

    def as_dict(self) -> dict:
        return dict(zip(self.ids, self.counts.tolist()))

    @property
    def items(self) -> list:
        return list(zip(self.ids, self.counts.tolist()))


def ingest_transactions(path) -> ItemHistogram:
    """Count, for each item, the transactions (lines) that contain it."""
    counts: dict = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                for item in set(line.split()):
                    counts[item] = counts.get(item, 0) + 1
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not counts:
        raise DataError(f"{path} contains no transactions")
    ids = sorted(counts)
    return ItemHistogram(ids, [counts[i] for i in ids])


def read_histogram_csv(path) -> ItemHistogram:
    """Read an ``item,count`` CSV with a header row."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"item", "count"} <= set(reader.fieldnames):
                raise DataError(f"{path}: expected header 'item,count'")
            rows = [(r["item"], float(r["count"])) for r in reader]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: bad count value ({exc})") from exc
    if not rows:
        raise DataError(f"{path} has no items")
    try:
        return ItemHistogram([r[0] for r in rows], [r[1] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def load_dataset(path) -> ItemHistogram:
    """Histogram CSV if the file has an ``item,count`` header, else transactions."""
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip().replace(" ", "")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if first == "item,count":
        return read_histogram_csv(path)
    return ingest_transactions(path)


def write_histogram_csv(hist: ItemHistogram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item", "count"])
        for item, count in zip(hist.ids, hist.counts):
            writer.writerow([item, _fmt_count(count)])


def _fmt_count(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def gen_zipf(n_items: int, n_records: int, seed: int) -> ItemHistogram:
    """Multinomial counts with ``P(rank i) ∝ 1/i``.

    Ids are zero-padded ranks, so lexicographic id order equals rank order.
    """
    if n_items < 1 or n_records < 1:
        raise ValueError("n_items and n_records must be positive")
    weights = 1.0 / np.arange(1, n_items + 1)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n_records, weights / weights.sum())
    width = len(str(n_items))
    return ItemHistogram([f"item{i:0{width}d}" for i in range(1, n_items + 1)], counts)


class TopC(NamedTuple):
    indices: frozenset
    threshold: float
    order: tuple  # indices of the top-c in rank order


def true_top_c(hist: ItemHistogram, c: int) -> TopC:
    """The ``c`` highest-scoring items (ties by id) and the midpoint threshold."""
    if c < 1:
        raise InvalidCutoffError("c must be positive")
    if len(hist) < c + 1:
        raise InvalidCutoffError(f"need at least c+1={c + 1} items, have {len(hist)}")
    ids = np.array(hist.ids)
    order = np.lexsort((ids, -hist.counts))
    top = order[:c]
    threshold = 0.5 * (hist.counts[order[c - 1]] + hist.counts[order[c]])
    return TopC(frozenset(int(i) for i in top), float(threshold), tuple(int(i) for i in top))


def score_fnr(selected: Iterable[int], top_c: Iterable[int]) -> float:
    top = set(top_c)
    if not top:
        raise ValueError("top_c is empty")
    return len(top - set(selected)) / len(top)


def score_ser(selected: Sequence[int], top_c: Iterable[int], hist: ItemHistogram) -> float:
    """``1 - mean score(selected) / mean score(top_c)``."""
    selected = list(selected)
    if not selected:
        raise UndefinedMetricError("SER is undefined for an empty selection")
    top_mean = float(np.mean(hist.counts[list(top_c)]))
    if top_mean == 0:
        raise UndefinedMetricError("top-c scores are all zero")
    return 1.0 - float(np.mean(hist.counts[selected])) / top_mean


_RATIO_TOKEN = re.compile(r"^(?:\d+(?:\.\d*)?|\.\d+|c|c23|2c23)$")


def _ratio_value(token: str, c: int) -> float:
    if token == "c":
        return float(c)
    if token == "c23":
        return c ** (2.0 / 3.0)
    if token == "2c23":
        return (2.0 * c) ** (2.0 / 3.0)
    return float(token)


@dataclass(frozen=True)
class BenchMethod:
    """A selection method parsed from its flag spelling.

    Grammar: ``em``, ``svt-dpbook``, ``svt-s:<r1>:<r2>`` and
    ``svt-retr:<r1>:<r2>:<k>D``, where a ratio token is a number, ``c``,
    ``c23`` (c^(2/3)) or ``2c23`` ((2c)^(2/3)).  ``r1:r2`` is eps1:eps2.
    """

    kind: str
    r1: str = "1"
    r2: str = "1"
    boost: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "BenchMethod":
        parts = text.strip().lower().split(":")
        kind = parts[0]
        if kind in ("em", "svt-dpbook") and len(parts) == 1:
            return cls(kind)
        if kind == "svt-s" and len(parts) == 3:
            return cls(kind, *cls._ratio(parts[1:]))
        if kind == "svt-retr" and len(parts) == 4:
            m = re.fullmatch(r"(\d+(?:\.\d*)?)d", parts[3])
            if not m:
                raise ValueError(f"boost must look like '3D', got {parts[3]!r}")
            return cls(kind, *cls._ratio(parts[1:3]), boost=float(m.group(1)))
        raise ValueError(f"unknown method {text!r}")

    @staticmethod
    def _ratio(tokens):
        for t in tokens:
            if not _RATIO_TOKEN.match(t):
                raise ValueError(f"bad ratio token {t!r}")
            if t not in ("c", "c23", "2c23") and float(t) <= 0:
                raise ValueError("ratio parts must be positive")
        return tokens

    @property
    def name(self) -> str:
        if self.kind in ("em", "svt-dpbook"):
            return self.kind
        if self.kind == "svt-s":
            return f"svt-s:{self.r1}:{self.r2}"
        return f"svt-retr:{self.r1}:{self.r2}:{self.boost:g}D"

    def split(self, epsilon: float, c: int) -> BudgetSplit:
        return BudgetSplit.from_ratio(epsilon, _ratio_value(self.r2, c) / _ratio_value(self.r1, c))


@dataclass(frozen=True)
class BenchPlan:
    method: BenchMethod
    c: int
    epsilon: float
    trials: int = 100
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.method, str):
            object.__setattr__(self, "method", BenchMethod.parse(self.method))
        if self.c < 1 or self.trials < 1 or not self.epsilon > 0:
            raise ValueError("c, trials and epsilon must be positive")


@dataclass(frozen=True)
class BenchResult:
    plan: BenchPlan
    selected_count: np.ndarray
    fnr: np.ndarray
    ser: np.ndarray  # nan where the selection was empty

    def _stat(self, values, fn) -> float:
        finite = values[~np.isnan(values)]
        return float(fn(finite)) if finite.size else math.nan

    @property
    def mean_ser(self) -> float:
        return self._stat(self.ser, np.mean)

    @property
    def std_ser(self) -> float:
        return self._stat(self.ser, np.std)

    @property
    def mean_fnr(self) -> float:
        return self._stat(self.fnr, np.mean)

    @property
    def std_fnr(self) -> float:
        return self._stat(self.fnr, np.std)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial; does not depend on other trials."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def select(method: BenchMethod, qs: QuerySet, c: int, epsilon: float, threshold: float,
           rng: np.random.Generator) -> tuple:
    """Run one method on a query set; returns the selected positions."""
    if method.kind == "em":
        return em_select_top_c(qs, epsilon, c, rng).chosen_indices
    if method.kind == "svt-dpbook":
        cfg = SvtConfig(Variant.ALG2, cutoff_c=c, thresholds=threshold, epsilon=epsilon)
        return run_svt(cfg, qs, rng).positives
    cfg = SvtConfig(Variant.ALG7, cutoff_c=c, thresholds=threshold,
                    split=method.split(epsilon, c), monotonic=True)
    if method.kind == "svt-s":
        return run_svt(cfg, qs, rng).positives
    return run_svt_retraversal(cfg, qs, method.boost, rng).chosen_indices


def run_bench(plan: BenchPlan, hist: ItemHistogram) -> BenchResult:
    top = true_top_c(hist, plan.c)
    counts = np.empty(plan.trials, dtype=np.int64)
    fnr = np.empty(plan.trials)
    ser = np.empty(plan.trials)
    for t in range(plan.trials):
        rng = trial_rng(plan.seed, t)
        perm = rng.permutation(len(hist))
        qs = QuerySet(hist.counts[perm], 1.0, monotonic=True)
        chosen = [int(perm[i]) for i in select(plan.method, qs, plan.c, plan.epsilon,
                                                 top.threshold, rng)]
        counts[t] = len(chosen)
        fnr[t] = score_fnr(chosen, top.indices)
        ser[t] = score_ser(chosen, top.indices, hist) if chosen else math.nan
    return BenchResult(plan, counts, fnr, ser)


RESULT_FIELDS = ["method", "c", "epsilon", "trial", "selected_count", "fnr", "ser"]
SUMMARY_FIELDS = ["method", "c", "epsilon", "mean_ser", "std_ser", "mean_fnr", "std_fnr"]


def _fmt(x: float) -> str:
    return "NA" if math.isnan(x) else repr(float(x))


def result_rows(results: Iterable[BenchResult]) -> List[list]:
    rows = []
    for res in results:
        p = res.plan
        for t in range(p.trials):
            rows.append([p.method.name, p.c, repr(p.epsilon), t, int(res.selected_count[t]),
                         _fmt(res.fnr[t]), _fmt(res.ser[t])])
    return rows


def summary_rows(results: Iterable[BenchResult]) -> List[list]:
    return [[r.plan.method.name, r.plan.c, repr(r.plan.epsilon), _fmt(r.mean_ser),
             _fmt(r.std_ser), _fmt(r.mean_fnr), _fmt(r.std_fnr)] for r in results]


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def run_grid(methods: Sequence[str], cs: Sequence[int], epsilon: float, trials: int, seed: int,
             hist: ItemHistogram) -> List[BenchResult]:
    """Every method at every cutoff, in flag order."""
    parsed = [BenchMethod.parse(m) for m in methods]
    return [run_bench(BenchPlan(m, c, epsilon, trials, seed), hist) for m in parsed for c in cs]
