import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from svtlab.errors import InvalidCutoffError, SessionClosedError, UnsupportedCombinationError
from svtlab.mechanisms import QuerySet
from svtlab.svt import (ABOVE, BELOW, BudgetSplit, SvtConfig, Variant, absolute_error_adapter,
                        noise_scales, open_session, optimize_split, pattern, run_svt,
                        run_svt_retraversal)

ALL_VARIANTS = [v.value for v in (Variant.ALG1, Variant.ALG2, Variant.ALG3, Variant.ALG4,
                                  Variant.ALG5, Variant.ALG6, Variant.ALG7)]


def make_config(variant, c=2, thresholds=0.0, eps=1.0):
    if variant == "alg7":
        return SvtConfig(variant, cutoff_c=c, thresholds=thresholds,
                         split=BudgetSplit(0.3 * eps, 0.5 * eps, 0.2 * eps))
    return SvtConfig(variant, cutoff_c=c, thresholds=thresholds, epsilon=eps)


def test_variant_parsing():
    assert Variant.parse("GPTT") is Variant.ALG6
    assert Variant.GPTT is Variant.ALG6
    assert Variant.parse(3) is Variant.ALG3
    assert Variant.ALG5.aborts is False and Variant.ALG7.aborts is True


def test_pattern_shorthand():
    assert pattern("-+0 1") == (BELOW, ABOVE, BELOW, ABOVE)


def test_budget_split_validation():
    with pytest.raises(ValueError):
        BudgetSplit(0.0, 1.0)
    with pytest.raises(ValueError):
        BudgetSplit(1.0, 1.0, -0.1)
    s = BudgetSplit.from_ratio(1.0, 3.0, 0.5)
    assert s.eps1 == 0.25 and s.eps2 == 0.75 and s.total == 1.5


def test_config_rejects_split_for_fixed_variants():
    with pytest.raises(UnsupportedCombinationError):
        SvtConfig("alg1", split=BudgetSplit(0.5, 0.5))
    with pytest.raises(ValueError):
        SvtConfig("alg7", epsilon=1.0, split=BudgetSplit(0.5, 0.6))
    with pytest.raises(ValueError):
        SvtConfig("alg1", cutoff_c=0, epsilon=1.0)
    SvtConfig("alg5", cutoff_c=0, epsilon=1.0)  # ignores c


def test_noise_scales_table():
    assert noise_scales(SvtConfig("alg1", cutoff_c=1, epsilon=1.0)) == (2.0, 4.0, None, None)
    s = noise_scales(SvtConfig("alg2", cutoff_c=3, epsilon=1.0))
    assert (s.threshold, s.query, s.redraw) == (6.0, 12.0, 6.0)
    assert noise_scales(SvtConfig("alg3", cutoff_c=3, epsilon=1.0))[:2] == (2.0, 6.0)
    assert noise_scales(SvtConfig("alg4", cutoff_c=3, epsilon=1.0))[:2] == (4.0, 4.0 / 3.0)
    assert noise_scales(SvtConfig("alg5", epsilon=0.7)).query == 0.0
    assert noise_scales(SvtConfig("gptt", split=BudgetSplit(0.25, 0.5)))[:2] == (4.0, 2.0)
    s = noise_scales(SvtConfig("alg7", cutoff_c=2, split=BudgetSplit(0.5, 0.5)), delta=1.0)
    assert s == (2.0, 8.0, None, None)
    s = noise_scales(SvtConfig("alg7", cutoff_c=2, split=BudgetSplit(0.5, 0.5), monotonic=True))
    assert s.query == 4.0
    s = noise_scales(SvtConfig("alg7", cutoff_c=2, split=BudgetSplit(0.5, 0.5, 0.25)), delta=2.0)
    assert s == (4.0, 16.0, 16.0, None)


@pytest.mark.parametrize("variant", ["alg1", "alg2", "alg3", "alg4", "alg5", "alg6"])
def test_monotonic_flag_only_for_alg7(variant):
    cfg = make_config(variant)
    cfg = SvtConfig(cfg.variant, cfg.cutoff_c, 0.0, cfg.epsilon, cfg.split, monotonic=True)
    with pytest.raises(UnsupportedCombinationError):
        noise_scales(cfg)


def test_optimize_split_examples():
    s = optimize_split(1.0, 1, monotonic=True)
    assert s.eps1 == pytest.approx(0.5) and s.eps2 == pytest.approx(0.5)
    s = optimize_split(0.1, 1)
    assert s.eps1 == pytest.approx(0.1 / (1 + 2 ** (2 / 3)), abs=1e-15)
    assert s.eps1 == pytest.approx(0.03865, abs=1e-5)
    assert s.eps2 == pytest.approx(0.06135, abs=1e-5)
    assert s.eps3 == 0.0
    s = optimize_split(0.1, 100, monotonic=True)
    assert s.eps2 / s.eps1 == pytest.approx(100 ** (2 / 3))
    assert s.eps1 == pytest.approx(0.0044352, abs=1e-6)


@given(st.floats(0.01, 10.0), st.integers(1, 500), st.booleans())
def test_optimize_split_sums_to_budget(eps, c, monotonic):
    s = optimize_split(eps, c, monotonic)
    assert abs(s.total - eps) <= 1e-12 * max(1.0, eps)


def test_empty_query_set():
    out = run_svt(make_config("alg1"), QuerySet([]), np.random.default_rng(0))
    assert out.answers == () and out.abort_index is None


def test_overwhelming_margin():
    cfg = SvtConfig("alg1", cutoff_c=1, thresholds=0.0, epsilon=1.0)
    for seed in range(50):
        out = run_svt(cfg, QuerySet([1e9, 0.0, 0.0]), np.random.default_rng(seed))
        assert out.answers == (ABOVE,) and out.abort_index == 0


def test_alg5_deterministic_below():
    cfg = SvtConfig("alg5", thresholds=0.0, epsilon=1.0)
    for seed in range(50):
        out = run_svt(cfg, QuerySet([-1e9] * 5), np.random.default_rng(seed))
        assert out.answers == (BELOW,) * 5 and out.abort_index is None


def test_alg1_abort_exhaustive():
    cfg = SvtConfig("alg1", cutoff_c=2, thresholds=0.0, epsilon=1.0)
    qs = QuerySet([0.5, -0.5, 1.0, 0.0])
    for seed in range(10 ** 4):
        out = run_svt(cfg, qs, np.random.default_rng(seed))
        pos = out.positives
        assert len(pos) <= 2 and len(out) <= 4
        if len(pos) == 2:
            assert out.abort_index == pos[-1] == len(out) - 1
        else:
            assert out.abort_index is None and len(out) == 4


def test_abort_semantics_many_seeds():
    rng = np.random.default_rng(2024)
    for seed in range(10 ** 5 // len(ALL_VARIANTS) + 1):
        for variant in ALL_VARIANTS:
            c = 1 + seed % 3
            n = 1 + seed % 7
            cfg = make_config(variant, c=c)
            qs = QuerySet(rng.normal(0, 3, n))
            out = run_svt(cfg, qs, np.random.default_rng(seed))
            if cfg.variant.aborts:
                assert len(out.positives) <= c
                assert len(out) == n or len(out.positives) == c
            else:
                assert len(out) == n


def test_numeric_answers():
    cfg = SvtConfig("alg3", cutoff_c=5, thresholds=0.0, epsilon=1.0)
    out = run_svt(cfg, QuerySet([100.0, -100.0, 100.0]), np.random.default_rng(1))
    assert out.answers[1] is BELOW
    assert isinstance(out.answers[0], float) and isinstance(out.answers[2], float)
    cfg = SvtConfig("alg7", cutoff_c=5, split=BudgetSplit(0.5, 0.5, 0.5))
    out = run_svt(cfg, QuerySet([1000.0]), np.random.default_rng(1))
    assert isinstance(out.answers[0], float) and abs(out.answers[0] - 1000) < 200
    cfg = SvtConfig("alg7", cutoff_c=5, split=BudgetSplit(0.5, 0.5))
    assert run_svt(cfg, QuerySet([1000.0]), np.random.default_rng(1)).answers == (ABOVE,)


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_session_matches_batch_run(variant):
    thresholds = [0.3, -0.2, 0.0, 1.0, 0.5, 0.0, -1.0, 0.2]
    for seed in range(200):
        cfg = make_config(variant, c=2, thresholds=thresholds)
        qs = QuerySet(np.random.default_rng(seed + 999).normal(0, 2, 8))
        out = run_svt(cfg, qs, np.random.default_rng(seed))
        session = open_session(cfg, np.random.default_rng(seed))
        got = []
        for q in qs.scores:
            if session.aborted:
                break
            got.append(session.feed(q))
        assert tuple(got) == out.answers


def test_feed_after_abort():
    cfg = SvtConfig("alg1", cutoff_c=1, thresholds=0.0, epsilon=1.0)
    session = open_session(cfg, np.random.default_rng(0))
    assert session.feed(1e9) is ABOVE
    with pytest.raises(SessionClosedError):
        session.feed(0.0)


def test_alg2_session_redraws_threshold():
    cfg = SvtConfig("alg2", cutoff_c=3, thresholds=0.0, epsilon=1.0)
    session = open_session(cfg, np.random.default_rng(4))
    before = session.noisy_threshold_state
    assert session.feed(1e9) is ABOVE
    assert session.noisy_threshold_state != before
    # alg1 keeps its threshold
    session = open_session(SvtConfig("alg1", cutoff_c=3, epsilon=1.0), np.random.default_rng(4))
    before = session.noisy_threshold_state
    session.feed(1e9)
    assert session.noisy_threshold_state == before


@pytest.mark.parametrize("variant", ALL_VARIANTS)
@given(seed=st.integers(0, 2 ** 32), data=st.data())
def test_threshold_shift_equivalence(variant, seed, data):
    n = data.draw(st.integers(1, 8))
    q = np.array(data.draw(st.lists(st.floats(-20, 20), min_size=n, max_size=n)))
    t = np.array(data.draw(st.lists(st.floats(-20, 20), min_size=n, max_size=n)))
    shifted = run_svt(make_config(variant, thresholds=t), QuerySet(q), np.random.default_rng(seed))
    zeroed = run_svt(make_config(variant, thresholds=0.0), QuerySet(q - t),
                     np.random.default_rng(seed))
    marks = lambda out: tuple(a if a in (ABOVE, BELOW) else ABOVE for a in out.answers)
    assert marks(shifted) == marks(zeroed)
    assert shifted.abort_index == zeroed.abort_index


@given(seed=st.integers(0, 2 ** 32), eps=st.floats(0.05, 5.0), c=st.integers(1, 4),
       scores=st.lists(st.floats(-30, 30), min_size=1, max_size=10))
def test_alg7_even_split_reproduces_alg1(seed, eps, c, scores):
    qs = QuerySet(scores)
    a1 = run_svt(SvtConfig("alg1", cutoff_c=c, epsilon=eps), qs, np.random.default_rng(seed))
    a7 = run_svt(SvtConfig("alg7", cutoff_c=c, split=BudgetSplit(eps / 2, eps / 2)), qs,
                 np.random.default_rng(seed))
    assert a1 == a7


def test_retraversal_certain_positives():
    cfg = SvtConfig("alg7", cutoff_c=3, thresholds=0.0, split=BudgetSplit(0.5, 0.5))
    res = run_svt_retraversal(cfg, QuerySet([1e9] * 6), 0.0, np.random.default_rng(0))
    assert res.chosen_indices == (0, 1, 2)
    assert res.passes == 1
    assert res.per_round_budget == pytest.approx(1 / 3)


@pytest.mark.parametrize("boost", [0.0, 1.0, 3.0])
def test_retraversal_exhausts_when_c_equals_n(boost):
    cfg = SvtConfig("alg7", cutoff_c=5, thresholds=0.0, split=BudgetSplit(1.0, 1.0))
    res = run_svt_retraversal(cfg, QuerySet([0.0, 1.0, 2.0, -1.0, 3.0]), boost,
                              np.random.default_rng(3))
    assert sorted(res.chosen_indices) == [0, 1, 2, 3, 4]


def test_retraversal_pass_guard():
    cfg = SvtConfig("alg7", cutoff_c=2, thresholds=1e6, split=BudgetSplit(1.0, 1.0))
    res = run_svt_retraversal(cfg, QuerySet([0.0, 1.0, 2.0]), 5.0, np.random.default_rng(0),
                              max_passes=1000)
    assert res.passes == 1000
    assert len(res.chosen_indices) <= 2


def test_retraversal_errors():
    cfg = SvtConfig("alg7", cutoff_c=4, split=BudgetSplit(1.0, 1.0))
    with pytest.raises(InvalidCutoffError):
        run_svt_retraversal(cfg, QuerySet([1.0, 2.0]), 1.0, np.random.default_rng(0))
    with pytest.raises(UnsupportedCombinationError):
        run_svt_retraversal(SvtConfig("alg1", epsilon=1.0), QuerySet([1.0]), 1.0,
                            np.random.default_rng(0))


def test_retraversal_boost_raises_threshold():
    # a strongly boosted threshold makes low scores rarely win
    cfg = SvtConfig("alg7", cutoff_c=1, thresholds=0.0, split=BudgetSplit(5.0, 5.0),
                    monotonic=True)
    qs = QuerySet([0.0] * 20 + [3.0])
    hits = sum(run_svt_retraversal(cfg, qs, 3.0, np.random.default_rng(s)).chosen_indices == (20,)
               for s in range(300))
    assert hits > 150


@pytest.mark.parametrize("est, true, expected", [(5, 5, 0), (3, 7, 4), (-2, 2, 4)])
def test_absolute_error_adapter(est, true, expected):
    assert absolute_error_adapter(est, true) == expected


def test_adapter_feeds_session():
    cfg = SvtConfig("alg1", cutoff_c=1, thresholds=1.0, epsilon=10.0)
    session = open_session(cfg, np.random.default_rng(0))
    assert session.feed(absolute_error_adapter(5.0, 5.01)) is BELOW
    assert session.feed(absolute_error_adapter(5.0, 50.0)) is ABOVE
    assert math.isfinite(session.noisy_threshold_state)
