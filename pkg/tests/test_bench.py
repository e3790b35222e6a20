import math

import numpy as np
import pytest

from svtlab.bench import (BenchMethod, BenchPlan, ItemHistogram, gen_zipf, ingest_transactions,
                          load_dataset, read_histogram_csv, result_rows, run_bench, run_grid,
                          score_fnr, score_ser, summary_rows, true_top_c, write_histogram_csv)
from svtlab.errors import DataError, InvalidCutoffError, UndefinedMetricError


@pytest.fixture(scope="module")
def zipf_small():
    return gen_zipf(2000, 200_000, 3)


def test_ingest_transactions(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("a b\na\n\n   \n")
    assert ingest_transactions(path).as_dict() == {"a": 2, "b": 1}
    path.write_text("a a b\n")
    assert ingest_transactions(path).as_dict() == {"a": 1, "b": 1}


def test_ingest_errors(tmp_path):
    with pytest.raises(DataError):
        ingest_transactions(tmp_path / "missing.txt")
    empty = tmp_path / "empty.txt"
    empty.write_text("\n\n")
    with pytest.raises(DataError):
        ingest_transactions(empty)


def test_histogram_csv_round_trip(tmp_path):
    hist = ItemHistogram(["x", "y", "z"], [3, 0, 7])
    path = tmp_path / "h.csv"
    write_histogram_csv(hist, path)
    assert path.read_text() == "item,count\nx,3\ny,0\nz,7\n"
    back = read_histogram_csv(path)
    assert back.as_dict() == hist.as_dict()
    assert load_dataset(path).as_dict() == hist.as_dict()


def test_histogram_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("item,count\nx,notanumber\n")
    with pytest.raises(DataError):
        read_histogram_csv(bad)
    bad.write_text("foo,bar\n1,2\n")
    with pytest.raises(DataError):
        read_histogram_csv(bad)


def test_histogram_validation():
    with pytest.raises(ValueError):
        ItemHistogram(["a", "a"], [1, 2])
    with pytest.raises(ValueError):
        ItemHistogram(["a"], [-1])


def test_gen_zipf():
    one = gen_zipf(1, 1000, 0)
    assert one.counts.tolist() == [1000]
    two = gen_zipf(2, 10 ** 6, 0)
    assert two.counts[0] / two.counts[1] == pytest.approx(2.0, rel=0.01)
    big = gen_zipf(10 ** 4, 10 ** 6, 0)
    assert big.counts.sum() == 10 ** 6 and len(big) == 10 ** 4
    assert gen_zipf(50, 1000, 9).as_dict() == gen_zipf(50, 1000, 9).as_dict()
    assert list(big.ids) == sorted(big.ids)


def test_true_top_c_examples():
    top = true_top_c(ItemHistogram(["a", "b", "c"], [10, 8, 6]), 2)
    assert top.indices == {0, 1} and top.threshold == 7
    top = true_top_c(ItemHistogram(["b", "a", "c"], [5, 5, 5]), 1)
    assert top.threshold == 5 and top.indices == {1}
    const = 840.0
    hist = ItemHistogram([f"i{k:02d}" for k in range(1, 11)], [const / k for k in range(1, 11)])
    assert true_top_c(hist, 3).threshold == pytest.approx((const / 3 + const / 4) / 2)
    with pytest.raises(InvalidCutoffError):
        true_top_c(ItemHistogram(["a", "b"], [1, 2]), 2)


def test_fnr():
    assert score_fnr([0, 1], {0, 1}) == 0
    assert score_fnr([2, 3], {0, 1}) == 1
    assert score_fnr([0, 1, 2, 9], {0, 1, 2, 3}) == 0.25


def test_ser():
    hist = ItemHistogram(["a", "b", "c", "d"], [10, 8, 6, 0])
    assert score_ser([0, 1], {0, 1}, hist) == 0
    assert score_ser([0, 2], {0, 1}, hist) == pytest.approx(1 - 8 / 9)
    assert score_ser([3], {0, 1}, hist) == 1.0
    with pytest.raises(UndefinedMetricError):
        score_ser([], {0, 1}, hist)


@pytest.mark.parametrize("text, name", [
    ("em", "em"), ("SVT-DPBook", "svt-dpbook"), ("svt-s:1:c23", "svt-s:1:c23"),
    ("svt-s:1:2c23", "svt-s:1:2c23"), ("svt-retr:1:c23:3D", "svt-retr:1:c23:3D"),
    ("svt-retr:1:3:0.5d", "svt-retr:1:3:0.5D")])
def test_method_grammar_round_trip(text, name):
    method = BenchMethod.parse(text)
    assert method.name == name
    assert BenchMethod.parse(method.name) == method


def test_method_boost_and_splits():
    m = BenchMethod.parse("svt-retr:1:c23:3D")
    assert m.kind == "svt-retr" and m.boost == 3.0
    s = BenchMethod.parse("svt-s:1:c").split(0.1, 50)
    assert s.eps2 / s.eps1 == pytest.approx(50)
    s = BenchMethod.parse("svt-s:1:2c23").split(0.1, 4)
    assert s.eps2 / s.eps1 == pytest.approx(8 ** (2 / 3))
    assert abs(s.total - 0.1) <= 1e-12


@pytest.mark.parametrize("bad", ["svt-s:1", "svt-s:1:x", "svt-retr:1:c23:3", "svt-s:0:1", "foo"])
def test_method_grammar_rejects(bad):
    with pytest.raises(ValueError):
        BenchMethod.parse(bad)


def test_em_huge_budget_is_near_exact():
    hist = gen_zipf(10 ** 4, 10 ** 6, 1)
    res = run_bench(BenchPlan("em", 25, 1e3, 20, 0), hist)
    assert res.mean_ser < 0.01
    assert np.all(res.selected_count == 25)


def test_selection_sizes(zipf_small):
    for method in ["svt-dpbook", "svt-s:1:c23"]:
        res = run_bench(BenchPlan(method, 20, 0.5, 10, 1), zipf_small)
        assert np.all(res.selected_count <= 20)
    res = run_bench(BenchPlan("svt-retr:1:c23:1D", 20, 0.5, 10, 1), zipf_small)
    assert np.all(res.selected_count == 20)
    res = run_bench(BenchPlan("em", 20, 0.5, 10, 1), zipf_small)
    assert np.all(res.selected_count == 20)


def test_metrics_in_range(zipf_small):
    res = run_bench(BenchPlan("svt-s:1:1", 10, 0.2, 10, 2), zipf_small)
    assert np.all((res.fnr >= 0) & (res.fnr <= 1))
    finite = res.ser[~np.isnan(res.ser)]
    assert np.all(finite <= 1)


def test_empty_selection_reported_as_undefined():
    hist = ItemHistogram(["a", "b", "c"], [0, 0, 0])
    # a threshold boosted 50 deviations above every score never fires
    res = run_bench(BenchPlan("svt-retr:1:1:50D", 1, 0.01, 3, 0), hist)
    assert np.all(res.selected_count == 0)
    assert np.all(np.isnan(res.ser)) and math.isnan(res.mean_ser)
    assert np.all(res.fnr == 1.0)
    assert result_rows([res])[0][-1] == "NA"


def test_determinism(zipf_small):
    plan = BenchPlan("svt-retr:1:c23:2D", 15, 0.3, 8, 42)
    a, b = run_bench(plan, zipf_small), run_bench(plan, zipf_small)
    assert np.array_equal(a.fnr, b.fnr) and np.array_equal(a.ser, b.ser, equal_nan=True)
    assert result_rows([a]) == result_rows([b])


def test_trials_are_order_independent(zipf_small):
    long = run_bench(BenchPlan("em", 10, 0.3, 6, 5), zipf_small)
    short = run_bench(BenchPlan("em", 10, 0.3, 3, 5), zipf_small)
    assert np.array_equal(long.fnr[:3], short.fnr)


def test_budget_accounting():
    for token in ["1", "3", "c", "c23", "2c23"]:
        s = BenchMethod.parse(f"svt-s:1:{token}").split(0.1, 77)
        assert abs(s.eps1 + s.eps2 - 0.1) <= 1e-12


def test_summary_rows_layout(zipf_small):
    results = run_grid(["em", "svt-s:1:3"], [5, 10], 0.5, 4, 0, zipf_small)
    rows = summary_rows(results)
    assert [r[:2] for r in rows] == [["em", 5], ["em", 10], ["svt-s:1:3", 5], ["svt-s:1:3", 10]]
    assert all(len(r) == 7 for r in rows)
    assert len(result_rows(results)) == 16


def test_fnr_and_ser_rank_agreement():
    hist = gen_zipf(10 ** 4, 10 ** 6, 7)
    methods = ["svt-dpbook", "svt-s:1:1", "svt-s:1:3", "svt-s:1:c23", "svt-retr:1:c23:2D", "em"]
    results = run_grid(methods, [25, 50], 0.1, 20, 7, hist)
    ser = np.array([r.mean_ser for r in results])
    fnr = np.array([r.mean_fnr for r in results])
    rank = lambda x: np.argsort(np.argsort(x))
    rs, rf = rank(ser), rank(fnr)
    n = len(ser)
    spearman = 1 - 6 * np.sum((rs - rf) ** 2) / (n * (n * n - 1))
    assert spearman >= 0.8
