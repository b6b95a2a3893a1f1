import numpy as np
import pytest
from scipy import stats

from ordinal_consistency import bench
from ordinal_consistency.bench import (
    GAT_LOGISTIC, LEAST_SQUARES, BenchmarkReport, CVResult, Dataset, EmptyDatasetError,
    NonNumericCellError, RaggedRowsError, cross_validate, discretize_targets, emit_report,
    load_dataset, planted_dataset, squared_error_score, standardize, wilcoxon_signed_rank,
)


class TestLoad:
    def test_whitespace_and_comma(self, tmp_path):
        a = tmp_path / "a.txt"
        a.write_text("1 2 0.5\n2 1 0.7\n0 0 0.1\n")
        b = tmp_path / "b.csv"
        b.write_text("1,2,0.5\n2,1,0.7\n0,0,0.1\n")
        da, db = load_dataset(a), load_dataset(b)
        assert da.features.shape == (3, 2) and da.targets.shape == (3,)
        assert np.array_equal(da.features, db.features) and np.array_equal(da.targets, db.targets)
        assert np.allclose(da.targets, (0.5, 0.7, 0.1))

    def test_target_column(self, tmp_path):
        f = tmp_path / "t.txt"
        f.write_text("9 1 2\n8 3 4\n")
        d = load_dataset(f, target_col=0)
        assert np.array_equal(d.targets, (9, 8)) and d.features.shape == (2, 2)

    def test_non_numeric(self, tmp_path):
        f = tmp_path / "bad.txt"
        f.write_text("1 2 abc\n2 1 0.7\n")
        with pytest.raises(NonNumericCellError) as info:
            load_dataset(f)
        assert info.value.row == 1 and info.value.col == 3
        assert "row 1 col 3" in str(info.value)

    def test_ragged(self, tmp_path):
        f = tmp_path / "r.txt"
        f.write_text("1 2 3\n1 2\n")
        with pytest.raises(RaggedRowsError, match="row 2"):
            load_dataset(f)

    def test_empty(self, tmp_path):
        f = tmp_path / "e.txt"
        f.write_text("\n\n")
        with pytest.raises(EmptyDatasetError):
            load_dataset(f)

    def test_distinct_diagnostics(self):
        assert len({EmptyDatasetError, RaggedRowsError, NonNumericCellError}) == 3


class TestDiscretize:
    def test_examples(self):
        assert list(discretize_targets(np.arange(1, 11), 5)) == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
        assert list(discretize_targets(np.arange(10, 0, -1), 5)) == [5, 5, 4, 4, 3, 3, 2, 2, 1, 1]
        with pytest.raises(ValueError):
            discretize_targets(np.ones(10), 2)

    def test_ties_go_low(self):
        labels = discretize_targets([1, 2, 2, 2, 3, 4], 2)
        assert list(labels) == [1, 1, 1, 1, 2, 2]

    def test_every_bin_nonempty(self, rng):
        for _ in range(200):
            k = int(rng.integers(2, 7))
            raw = rng.integers(0, k + 3, size=int(rng.integers(k + 3, 60))).astype(float)
            if np.unique(raw).size < k:
                continue
            labels = discretize_targets(raw, k)
            assert set(labels) == set(range(1, k + 1))
            # order preserving
            o = np.argsort(raw, kind="stable")
            assert np.all(np.diff(labels[o]) >= 0)


class TestStandardize:
    def test_examples(self):
        tr, te = standardize([[1.0], [3.0]], [[2.0]])
        assert np.allclose(tr.ravel(), (-1, 1)) and np.allclose(te, 0)
        tr, te = standardize([[5.0], [5.0]], [[7.0]])
        assert np.all(tr == 0) and np.all(te == 0)

    def test_idempotent(self, rng):
        X = rng.normal(size=(50, 3))
        tr, _ = standardize(X, X)
        tr2, _ = standardize(tr, tr)
        assert np.allclose(tr, tr2, atol=1e-12)


class TestScore:
    def test_examples(self):
        assert squared_error_score([1, 2], [1, 2]) == 0
        assert squared_error_score([1, 1], [3, 1]) == 2
        assert squared_error_score([5] * 4, [1] * 4) == 16
        with pytest.raises(ValueError):
            squared_error_score([1], [1, 2])


class TestWilcoxon:
    def test_identical(self):
        res = wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])
        assert res.pvalue == 1.0 and res.all_zero

    def test_textbook_against_scipy(self):
        # paired depression-scale scores, a standard textbook example without ties
        x = [1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30]
        y = [0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29]
        ours = wilcoxon_signed_rank(x, y)
        ref = stats.wilcoxon(x, y, method="exact").pvalue
        assert ours.pvalue == pytest.approx(ref, abs=1e-6)
        assert ours.pvalue == pytest.approx(0.0390625, abs=1e-12)

    def test_no_ties_exact(self, rng):
        for n in (6, 10, 15, 20):
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            ours = wilcoxon_signed_rank(a, b)
            ref = stats.wilcoxon(a, b, method="exact")
            assert ours.method == "exact"
            assert ours.pvalue == pytest.approx(ref.pvalue, abs=1e-10)

    def test_normal_regime(self, rng):
        a = rng.normal(size=40)
        b = a + rng.normal(0.3, 1, size=40)
        ours = wilcoxon_signed_rank(a, b)
        ref = stats.wilcoxon(a, b, method="approx", correction=False)
        assert ours.method == "normal" and ours.pvalue == pytest.approx(ref.pvalue, abs=1e-10)

    def test_ties_normal_matches_scipy(self, rng):
        a = rng.integers(0, 5, size=40).astype(float)
        b = rng.integers(0, 5, size=40).astype(float)
        ours = wilcoxon_signed_rank(a, b)
        ref = stats.wilcoxon(a, b, method="approx", correction=False, zero_method="wilcox")
        assert ours.pvalue == pytest.approx(ref.pvalue, abs=1e-10)

    def test_exact_with_ties_by_enumeration(self):
        d = np.array([1.0, 1.0, 2.0, -3.0, 3.0, 4.0, -1.0])
        ours = wilcoxon_signed_rank(d, np.zeros_like(d))
        ranks = stats.rankdata(np.abs(d))
        t = ranks[d > 0].sum()
        import itertools
        sums = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product([0, 1], repeat=d.size)]
        sums = np.array(sums)
        p = min(1.0, 2 * min(np.mean(sums <= t + 1e-9), np.mean(sums >= t - 1e-9)))
        assert ours.pvalue == pytest.approx(p, abs=1e-12)

    def test_one_flipped(self, rng):
        a = rng.uniform(1, 2, size=20)
        b = a.copy()
        b[3] = -b[3]
        with pytest.warns(RuntimeWarning):
            res = wilcoxon_signed_rank(a, b)
        assert res.pvalue > 0.5

    def test_strong_signal(self):
        a = np.arange(1, 21, dtype=float)
        assert wilcoxon_signed_rank(a, np.zeros(20)).pvalue < 1e-5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            wilcoxon_signed_rank([1, 2], [1])


class TestCrossValidate:
    def test_leave_one_out(self, rng):
        X = rng.normal(size=(10, 2))
        y = np.array([1, 2] * 5)
        res = cross_validate([LEAST_SQUARES], Dataset("d", X, y, 2), folds=10, seed=0)
        assert res.scores["ls"].size == 10

    def test_paired_and_deterministic(self):
        data, _ = planted_dataset(300, seed=1)
        r1 = cross_validate([GAT_LOGISTIC, LEAST_SQUARES], data, 5, seed=3)
        r2 = cross_validate([GAT_LOGISTIC, LEAST_SQUARES], data, 5, seed=3)
        assert r1.split_hashes["gat"] == r1.split_hashes["ls"]
        for m in ("gat", "ls"):
            assert np.array_equal(r1.scores[m], r2.scores[m])
            assert np.all((r1.scores[m] >= 0) & (r1.scores[m] <= (data.k - 1) ** 2))
        r3 = cross_validate([GAT_LOGISTIC], data, 5, seed=4)
        assert r3.split_hashes["gat"] != r1.split_hashes["gat"]

    def test_folds_partition(self):
        splits = bench.kfold_splits(23, 5, 0)
        tests = np.sort(np.concatenate([te for _, te in splits]))
        assert np.array_equal(tests, np.arange(23))
        for tr, te in splits:
            assert np.intersect1d(tr, te).size == 0

    def test_stratified_and_repeats(self):
        data, _ = planted_dataset(200, seed=2)
        res = cross_validate([LEAST_SQUARES], data, 4, seed=0, repeats=2, stratify=True)
        assert res.scores["ls"].size == 8

    def test_needs_labels(self, rng):
        with pytest.raises(ValueError):
            cross_validate([LEAST_SQUARES], Dataset("d", rng.normal(size=(5, 1)), rng.normal(size=5)), 2)

    def test_small_class_warning(self, caplog):
        data, _ = planted_dataset(100, seed=0)
        with caplog.at_level("WARNING"):
            cross_validate([LEAST_SQUARES], data, 20, seed=0)
        assert any("fewer samples" in r.message for r in caplog.records)

    def test_planted_gat_wins(self):
        data, _ = planted_dataset(1000, seed=5)
        res = cross_validate([GAT_LOGISTIC, LEAST_SQUARES], data, 10, seed=5)
        assert res.scores["gat"].mean() <= res.scores["ls"].mean()


def fake_report():
    a = CVResult("b", 5, {"gat": np.array([0.5, 0.6, 0.4]), "ls": np.array([0.7, 0.8, 0.9])}, {})
    b = CVResult("a", 5, {"gat": np.array([1.0, 1 / 3, 0.25]), "ls": np.array([1.0, 1 / 3, 0.25])}, {})
    return BenchmarkReport(3, [a, b])


@pytest.mark.filterwarnings("ignore:only .* nonzero differences")
class TestReport:
    def test_shape_and_order(self, tmp_path):
        path = emit_report(fake_report(), tmp_path / "r.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "dataset,method,mean_sq_error,std_sq_error,folds,wilcoxon_p,significant"
        assert len(lines) == 5
        assert [l.split(",")[:2] for l in lines[1:]] == [["a", "gat"], ["a", "ls"], ["b", "gat"], ["b", "ls"]]
        assert lines[1].split(",")[2] == "0.527777778"

    def test_byte_identical(self, tmp_path):
        p1 = emit_report(fake_report(), tmp_path / "1.csv")
        p2 = emit_report(fake_report(), tmp_path / "2.csv")
        assert p1.read_bytes() == p2.read_bytes()
        assert not [f for f in tmp_path.iterdir() if f.name.startswith(".")]

    def test_significance_threshold(self, monkeypatch):
        monkeypatch.setattr(bench, "wilcoxon_signed_rank",
                            lambda a, b: bench.WilcoxonResult(0.005, 0.0, 3, "exact"))
        rows = fake_report().rows()
        assert all(r[6] for r in rows)
        monkeypatch.setattr(bench, "wilcoxon_signed_rank",
                            lambda a, b: bench.WilcoxonResult(0.01, 0.0, 3, "exact"))
        assert not any(r[6] for r in fake_report().rows())

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            emit_report(fake_report(), tmp_path / "missing" / "r.csv")

    def test_p_in_unit_interval(self):
        for row in fake_report().rows():
            assert 0 <= row[5] <= 1 and row[4] == 3


class TestRunBenchmark:
    def test_isolates_failures(self, tmp_path):
        good = tmp_path / "good.txt"
        rng = np.random.default_rng(0)
        X = rng.normal(size=(60, 2))
        y = X @ [1.0, 0.5] + 0.1 * rng.normal(size=60)
        good.write_text("\n".join(" ".join(f"{v:.6f}" for v in row) for row in np.column_stack([X, y])))
        report = bench.run_benchmark([good, tmp_path / "missing.txt"], folds=3, seed=0)
        assert len(report.results) == 1 and len(report.failures) == 1
        assert "missing.txt" in next(iter(report.failures))

    @pytest.mark.filterwarnings("ignore:only .* nonzero differences")
    def test_end_to_end_determinism(self, tmp_path):
        data, _ = planted_dataset(200, seed=0)
        r1 = bench.run_benchmark([data], folds=4, seed=1)
        r2 = bench.run_benchmark([data], folds=4, seed=1)
        assert bench.render_report(r1) == bench.render_report(r2)
