"""Metrics tests: hand-counted confusion cases, the concordance oracle for
AUC, decision-curve hand values, and export format checks."""

import json

import numpy as np
import pytest

from resnetplus import metrics as M

from oracles import auc_concordance, net_benefit_direct


def random_probs(rng, n, k):
    z = rng.random((n, k))
    return z / z.sum(axis=1, keepdims=True)


class TestConfusion:
    def test_perfect_diagonal(self):
        cm = M.confusion([0, 1, 2], [0, 1, 2], 3)
        np.testing.assert_array_equal(cm, np.eye(3, dtype=np.int64))

    def test_hand_counted_cell(self):
        cm = M.confusion([0, 1, 2], [0, 1, 1], 3)
        assert cm[2, 1] == 1
        assert np.trace(cm) == 2
        assert cm.sum() == 3

    def test_empty_input(self):
        cm = M.confusion([], [], 4)
        np.testing.assert_array_equal(cm, np.zeros((4, 4), dtype=np.int64))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            M.confusion([0, 3], [0, 1], 3)
        with pytest.raises(ValueError, match="out of range"):
            M.confusion([0, 1], [0, -1], 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            M.confusion([0, 1], [0], 3)


class TestClassificationMetrics:
    def test_perfect(self):
        out = M.classification_metrics(np.eye(3, dtype=np.int64) * 5)
        assert out["accuracy"] == 1.0
        assert out["macro_precision"] == 1.0
        assert out["macro_recall"] == 1.0
        assert out["macro_f1"] == 1.0

    def test_hand_one_vs_all(self):
        cm = M.confusion([0, 1, 2], [0, 1, 1], 3)
        out = M.classification_metrics(cm)
        assert out["accuracy"] == pytest.approx(2 / 3)
        c0, c1, c2 = out["per_class"]
        assert c0.precision == 1.0 and c0.recall == 1.0
        assert c1.precision == pytest.approx(0.5)
        assert c1.recall == 1.0
        assert c2.recall == 0.0 and c2.precision == 0.0 and c2.f1 == 0.0
        assert not c2.zero_support

    def test_zero_support_flagged_and_zero(self):
        cm = np.zeros((3, 3), dtype=np.int64)
        cm[0, 0] = 4
        cm[1, 1] = 4
        out = M.classification_metrics(cm)
        c2 = out["per_class"][2]
        assert c2.zero_support
        assert (c2.precision, c2.recall, c2.f1) == (0.0, 0.0, 0.0)
        # macro still averages over all three classes
        assert out["macro_recall"] == pytest.approx(2 / 3)

    def test_chance_level_on_balanced_data(self):
        rng = np.random.default_rng(0)
        n = 30000
        y = np.repeat(np.arange(3), n // 3)
        pred = rng.integers(0, 3, n)
        out = M.classification_metrics(M.confusion(y, pred, 3))
        sigma = np.sqrt((1 / 3) * (2 / 3) / n)
        assert abs(out["accuracy"] - 1 / 3) < 4 * sigma

    def test_balanced_accuracy_equals_mean_recall(self):
        rng = np.random.default_rng(1)
        y = np.repeat(np.arange(4), 25)
        pred = rng.integers(0, 4, 100)
        out = M.classification_metrics(M.confusion(y, pred, 4))
        assert out["accuracy"] == pytest.approx(out["macro_recall"], abs=1e-12)

    def test_micro_equals_accuracy(self):
        cm = M.confusion([0, 0, 1, 2], [0, 1, 1, 0], 3)
        out = M.classification_metrics(cm)
        assert out["micro_f1"] == out["accuracy"]

    def test_invalid_matrix(self):
        with pytest.raises(ValueError):
            M.classification_metrics(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            M.classification_metrics(np.array([[1, -1], [0, 1]]))


class TestRoc:
    def test_perfect_separation(self):
        scores = np.array([[0.9], [0.8], [0.1], [0.2]])
        y = np.array([0, 0, 1, 1])  # class 0 positives hold the top scores
        curves, _ = M.roc_auc_ovr(np.hstack([scores, 1 - scores]), y)
        assert curves[0].auc == pytest.approx(1.0)

    def test_all_ties_give_half(self):
        scores = np.full((10, 2), 0.5)
        y = np.array([0] * 5 + [1] * 5)
        curves, macro = M.roc_auc_ovr(scores, y)
        assert curves[0].auc == pytest.approx(0.5)
        assert macro == pytest.approx(0.5)

    def test_trapezoid_equals_concordance(self):
        rng = np.random.default_rng(2)
        for trial in range(200):
            n = int(rng.integers(5, 60))
            k = int(rng.integers(2, 5))
            # quantized scores force plenty of exact ties
            probs = np.round(random_probs(rng, n, k), 2)
            y = rng.integers(0, k, n)
            curves, _ = M.roc_auc_ovr(probs, y)
            for c in curves:
                oracle = auc_concordance(probs[:, c.class_index],
                                         y == c.class_index)
                if oracle is None:
                    assert not c.defined
                else:
                    assert c.defined
                    assert abs(c.auc - oracle) < 1e-9, trial

    def test_curve_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(3)
        probs = random_probs(rng, 40, 3)
        y = rng.integers(0, 3, 40)
        curves, _ = M.roc_auc_ovr(probs, y)
        for c in curves:
            assert (c.fpr[0], c.tpr[0]) == (0.0, 0.0)
            assert (c.fpr[-1], c.tpr[-1]) == (1.0, 1.0)
            assert np.all(np.diff(c.fpr) >= 0)
            assert np.all(np.diff(c.tpr) >= 0)
            assert c.thresholds[0] == np.inf
            assert c.thresholds[-1] == -np.inf

    def test_absent_class_excluded_from_macro(self):
        rng = np.random.default_rng(4)
        probs = random_probs(rng, 30, 3)
        y = rng.integers(0, 2, 30)  # class 2 never appears
        curves, macro = M.roc_auc_ovr(probs, y)
        assert not curves[2].defined
        defined = [c.auc for c in curves[:2]]
        assert macro == pytest.approx(np.mean(defined))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        probs = random_probs(rng, 50, 2)
        y = rng.integers(0, 2, 50)
        base, _ = M.roc_auc_ovr(probs, y)
        warped = np.exp(3.0 * probs)  # strictly increasing map
        after, _ = M.roc_auc_ovr(warped, y)
        for b, a in zip(base, after):
            assert a.auc == pytest.approx(b.auc, abs=1e-12)

    def test_dominance_raising_positives_never_hurts(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            scores = rng.random((30, 2))
            y = rng.integers(0, 2, 30)
            before, _ = M.roc_auc_ovr(scores, y)
            boosted = scores.copy()
            boosted[y == 0, 0] += rng.random((y == 0).sum()) * 0.5
            after, _ = M.roc_auc_ovr(boosted, y)
            assert after[0].auc >= before[0].auc - 1e-12


class TestDca:
    def test_hand_value_030_010_pt02(self):
        # 100 samples: 30 true positives scored 0.9, 10 false positives
        # scored 0.9, everything else scored 0.05
        y = np.array([0] * 30 + [1] * 70)
        s0 = np.array([0.9] * 30 + [0.9] * 10 + [0.05] * 60)
        scores = np.stack([s0, 1 - s0], axis=1)
        curves = M.dca_ovr(scores, y, pt_grid=[0.2])
        nb = curves[0].net_benefit[0]
        assert nb == pytest.approx(0.275, abs=1e-12)
        assert nb == pytest.approx(net_benefit_direct(30, 10, 100, 0.2),
                                   abs=1e-12)

    def test_treat_none_identically_zero(self):
        rng = np.random.default_rng(7)
        curves = M.dca_ovr(random_probs(rng, 40, 3), rng.integers(0, 3, 40))
        for c in curves:
            assert np.all(c.treat_none == 0.0)

    def test_treat_all_approaches_prevalence(self):
        rng = np.random.default_rng(8)
        y = rng.integers(0, 2, 50)
        curves = M.dca_ovr(random_probs(rng, 50, 2), y)
        c = curves[0]
        assert c.pt[0] == 0.01
        assert abs(c.treat_all[0] - c.prevalence) < 0.02
        # exact formula check at an arbitrary grid point
        i = 40
        odds = c.pt[i] / (1 - c.pt[i])
        assert c.treat_all[i] == pytest.approx(
            c.prevalence - (1 - c.prevalence) * odds, abs=1e-12)

    def test_perfect_classifier_holds_prevalence(self):
        y = np.array([0] * 10 + [1] * 30)
        s0 = np.where(y == 0, 0.99, 0.0)
        curves = M.dca_ovr(np.stack([s0, 1 - s0], axis=1), y)
        c = curves[0]
        below = c.pt <= 0.98
        np.testing.assert_allclose(c.net_benefit[below], c.prevalence,
                                   atol=1e-12)

    def test_nothing_predicted_positive_gives_zero(self):
        y = np.array([0, 0, 1, 1])
        s0 = np.array([0.001, 0.002, 0.001, 0.003])
        curves = M.dca_ovr(np.stack([s0, 1 - s0], axis=1), y)
        np.testing.assert_array_equal(curves[0].net_benefit, 0.0)

    def test_default_grid(self):
        y = np.array([0, 1])
        curves = M.dca_ovr(np.array([[0.6, 0.4], [0.3, 0.7]]), y)
        assert curves[0].pt[0] == 0.01
        assert curves[0].pt[-1] == 0.99
        assert len(curves[0].pt) == 99

    def test_bad_grid_rejected(self):
        y = np.array([0, 1])
        s = np.array([[0.6, 0.4], [0.3, 0.7]])
        with pytest.raises(ValueError):
            M.dca_ovr(s, y, pt_grid=[0.0, 0.5])
        with pytest.raises(ValueError):
            M.dca_ovr(s, y, pt_grid=[1.0])


@pytest.fixture
def report():
    rng = np.random.default_rng(9)
    probs = random_probs(rng, 60, 3)
    y = rng.integers(0, 3, 60)
    return M.compute_report(probs, y, ["akiec", "bcc", "mel"],
                            latency_mean=0.004, latency_std=0.001)


class TestReportAndExport:
    def test_headline_line(self, report):
        line = report.headline()
        for token in ("ACC", "PRE", "REC", "F1", "AUC"):
            assert token in line
        assert line.index("ACC") < line.index("PRE") < line.index("AUC")

    def test_json_round_trip_is_exact(self, report, tmp_path):
        M.export_report(report, tmp_path, formats=("json",))
        loaded = M.MetricsReport.from_dict(
            json.loads((tmp_path / "metrics.json").read_text()))
        assert loaded.accuracy == report.accuracy
        assert loaded.macro_f1 == report.macro_f1
        np.testing.assert_array_equal(loaded.confusion, report.confusion)
        for a, b in zip(loaded.roc, report.roc):
            np.testing.assert_array_equal(a.fpr, b.fpr)
            np.testing.assert_array_equal(a.tpr, b.tpr)
            np.testing.assert_array_equal(a.thresholds, b.thresholds)
            assert a.auc == b.auc
        for a, b in zip(loaded.dca, report.dca):
            np.testing.assert_array_equal(a.net_benefit, b.net_benefit)
        assert loaded.latency_mean == report.latency_mean

    def test_csv_schema_and_cross_format_consistency(self, report, tmp_path):
        M.export_report(report, tmp_path, formats=("csv", "json"))
        lines = (tmp_path / "metrics.csv").read_text().strip().split("\n")
        assert lines[0] == "class,precision,recall,f1,auc"
        assert lines[-2].startswith("macro,")
        assert lines[-1].startswith("accuracy,")
        blob = json.loads((tmp_path / "metrics.json").read_text())
        for row, jrow in zip(lines[1:4], blob["roc"]):
            csv_auc = float(row.split(",")[4])
            assert csv_auc == jrow["auc"]
        assert float(lines[-1].split(",")[1]) == blob["accuracy"]

    def test_roc_svg_structure(self, report, tmp_path):
        M.export_report(report, tmp_path, formats=("svg",))
        svg = (tmp_path / "roc.svg").read_text()
        assert svg.count("<polyline") == 3 + 1  # one per class + diagonal
        assert 'version="1.1"' in svg
        dca = (tmp_path / "dca.svg").read_text()
        assert dca.count("<polyline") >= 3

    def test_export_is_deterministic(self, report, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        files_a = M.export_report(report, a)
        files_b = M.export_report(report, b)
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_unknown_format_rejected(self, report, tmp_path):
        with pytest.raises(ValueError, match="pdf"):
            M.export_report(report, tmp_path, formats=("pdf",))

    def test_points_csvs_written(self, report, tmp_path):
        M.export_report(report, tmp_path, formats=("csv",))
        roc = (tmp_path / "roc_points.csv").read_text().strip().split("\n")
        assert roc[0] == "class,fpr,tpr,threshold"
        assert len(roc) > 4
        dca = (tmp_path / "dca_points.csv").read_text().strip().split("\n")
        assert dca[0] == "class,pt,net_benefit,treat_all,treat_none"
        assert len(dca) == 1 + 3 * 99

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            M.compute_report(np.zeros((4, 3)), [0, 1], ["a", "b", "c"])
