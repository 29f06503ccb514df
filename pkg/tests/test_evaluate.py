import itertools

import numpy as np
import pytest

from rareaction import evaluate
from rareaction.errors import InvalidInputError, MetricError
from rareaction.evaluate import (
    BinaryConfusion,
    TimeInterval,
    average_precision,
    bootstrap,
    chi2_homogeneity,
    confusion_metrics,
    detection_ap,
    match_intervals,
    multilabel_map,
    roc_auc,
    t_iou,
)


def mann_whitney_auc(scores, labels):
    """Independent oracle: average-rank U statistic normalization."""
    scores = np.asarray(scores, float)
    labels = np.asarray(labels).astype(bool)
    order = np.argsort(scores)
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    n_pos = labels.sum()
    n_neg = (~labels).sum()
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


def brute_force_ap(scores, labels):
    """Precision at every positive, in descending-score (stable) order."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if labels[i]:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / sum(labels)


class TestConfusionMetrics:
    def test_perfect_classification(self):
        m = confusion_metrics(BinaryConfusion(tp=44, fp=0, tn=176, fn=0))
        assert m == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0}

    def test_predict_all_positive_on_imbalanced_data(self):
        # 20% positive data, everything predicted positive
        m = confusion_metrics(BinaryConfusion(tp=44, fp=176, tn=0, fn=0))
        assert m["precision"] == pytest.approx(0.20)
        assert m["recall"] == 1.0
        assert m["accuracy"] == pytest.approx(0.20)

    def test_zero_division_conventions(self):
        m = confusion_metrics(BinaryConfusion(tp=0, fp=0, tn=5, fn=2))
        assert m["precision"] == 0.0
        assert m["recall"] == 0.0
        assert m["f1"] == 0.0

    def test_from_predictions(self):
        conf = BinaryConfusion.from_predictions([1, 1, 0, 0], [1, 0, 1, 0])
        assert (conf.tp, conf.fp, conf.fn, conf.tn) == (1, 1, 1, 1)

    def test_negative_counts_rejected(self):
        with pytest.raises(InvalidInputError):
            BinaryConfusion(tp=-1, fp=0, tn=0, fn=0)


class TestRocAuc:
    def test_perfect_separation(self):
        out = roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert out["auc"] == 1.0

    def test_reversed_scores_give_zero(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])["auc"] == 0.0

    def test_negation_symmetry(self, rng):
        scores = rng.normal(size=200)
        labels = rng.random(200) < 0.3
        labels[0] = True
        labels[1] = False
        a = roc_auc(scores, labels)["auc"]
        b = roc_auc(-scores, labels)["auc"]
        assert a == pytest.approx(1.0 - b, abs=1e-12)

    def test_matches_mann_whitney_with_ties(self, rng):
        for _ in range(30):
            n = int(rng.integers(5, 60))
            scores = rng.integers(0, 6, size=n).astype(float)  # heavy ties
            labels = rng.random(n) < 0.4
            if labels.all() or not labels.any():
                continue
            assert roc_auc(scores, labels)["auc"] == pytest.approx(
                mann_whitney_auc(scores, labels), abs=1e-12
            )

    def test_invariant_under_monotone_transform(self, rng):
        scores = rng.normal(size=100)
        labels = rng.random(100) < 0.5
        labels[:2] = [True, False]
        base = roc_auc(scores, labels)["auc"]
        assert roc_auc(np.exp(scores), labels)["auc"] == pytest.approx(base, abs=1e-12)
        assert roc_auc(3 * scores + 7, labels)["auc"] == pytest.approx(base, abs=1e-12)

    def test_curve_endpoints(self, rng):
        out = roc_auc(rng.normal(size=50), rng.random(50) < 0.5)
        assert (out["fpr"][0], out["tpr"][0]) == (0.0, 0.0)
        assert (out["fpr"][-1], out["tpr"][-1]) == (1.0, 1.0)

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            roc_auc([0.1, 0.2], [1, 1])


class TestBootstrap:
    def test_constant_metric_zero_std(self):
        report = bootstrap(lambda sample: 7.25, list(range(10)), resamples=100, seed=0)
        assert report.mean == 7.25
        assert report.std == 0.0
        assert report.half_width_95 == 0.0

    def test_same_seed_identical(self, rng):
        data = rng.normal(size=30).tolist()
        a = bootstrap(np.mean, data, resamples=50, seed=3)
        b = bootstrap(np.mean, data, resamples=50, seed=3)
        assert a.values == b.values

    def test_identity_resampler_recovers_plain_metric(self, rng):
        data = rng.normal(size=20).tolist()
        report = bootstrap(
            np.mean,
            data,
            resamples=1,
            seed=0,
            resampler=lambda rng_, n: np.arange(n),
        )
        assert report.values == [np.mean(data)]

    def test_resample_size_equals_original(self):
        sizes = []
        bootstrap(lambda s: sizes.append(len(s)) or 0.0, list(range(17)), resamples=5, seed=0)
        assert sizes == [17] * 5

    def test_mean_tracks_full_metric(self, rng):
        labels = rng.random(300) < 0.5
        predicted = labels ^ (rng.random(300) < 0.1)
        data = list(zip(predicted, labels))

        def accuracy(sample):
            p, l = zip(*sample)
            return float(np.mean(np.array(p) == np.array(l)))

        report = bootstrap(accuracy, data, resamples=100, seed=1)
        full = accuracy(data)
        assert abs(report.mean - full) <= 1.96 * report.std / np.sqrt(100) + 0.01

    def test_metric_errors_trigger_redraw(self, rng):
        # a single positive: many resamples miss it and AUC is undefined
        scores = rng.normal(size=8)
        labels = np.zeros(8, bool)
        labels[0] = True
        data = list(zip(scores, labels))

        def auc(sample):
            s, l = zip(*sample)
            return roc_auc(np.array(s), np.array(l))["auc"]

        report = bootstrap(auc, data, resamples=40, seed=2)
        assert report.redraws > 0
        assert len(report.values) == 40

    def test_report_consistency_enforced(self):
        with pytest.raises(InvalidInputError):
            evaluate.BootstrapReport(
                resamples=2,
                sample_size=3,
                values=[1.0, 2.0],
                mean=9.9,
                std=0.5,
                half_width_95=0.98,
            )

    def test_empty_data_rejected(self):
        with pytest.raises(InvalidInputError):
            bootstrap(np.mean, [], resamples=10, seed=0)


class TestTIou:
    def test_identical_intervals(self):
        assert t_iou(TimeInterval(4, 6), TimeInterval(4, 6)) == 1.0

    def test_hand_case_one_third(self):
        assert t_iou(TimeInterval(4, 6), TimeInterval(5, 7)) == pytest.approx(1 / 3)

    def test_disjoint_is_zero(self):
        assert t_iou(TimeInterval(0, 1), TimeInterval(2, 3)) == 0.0

    def test_touching_is_zero(self):
        assert t_iou(TimeInterval(0, 2), TimeInterval(2, 4)) == 0.0

    def test_symmetry_and_range(self, rng):
        for _ in range(100):
            a = sorted(rng.uniform(0, 10, size=2))
            b = sorted(rng.uniform(0, 10, size=2))
            if a[0] == a[1] or b[0] == b[1]:
                continue
            ia, ib = TimeInterval(*a), TimeInterval(*b)
            v = t_iou(ia, ib)
            assert v == t_iou(ib, ia)
            assert 0.0 <= v <= 1.0
            assert (v == 1.0) == (a == b)

    def test_invalid_interval_rejected(self):
        with pytest.raises(InvalidInputError):
            TimeInterval(5, 5)
        with pytest.raises(InvalidInputError):
            TimeInterval(-1, 5)


class TestDetectionAp:
    def test_perfect_single_predictions(self):
        videos = [([TimeInterval(4, 6)], [TimeInterval(4, 6)]) for _ in range(9)]
        assert detection_ap(videos, 0.5)["ap_mean"] == 1.0

    def test_whole_video_prediction_fails_at_quarter_tiou(self):
        videos = [([TimeInterval(0, 10)], [TimeInterval(4, 6)])]
        out = detection_ap(videos, 0.25)
        assert out["ap_mean"] == 0.0  # t-IoU is 0.2

    def test_exact_match_correct_at_half(self):
        videos = [([TimeInterval(4, 6)], [TimeInterval(4, 6)])]
        assert detection_ap(videos, 0.5)["ap_mean"] == 1.0

    def test_no_predictions_is_zero_precision(self):
        videos = [([], [TimeInterval(4, 6)])]
        assert detection_ap(videos, 0.25)["ap_mean"] == 0.0

    def test_video_without_truth_rejected(self):
        with pytest.raises(InvalidInputError):
            detection_ap([([TimeInterval(0, 1)], [])], 0.5)

    def test_monotone_in_threshold(self, rng):
        videos = []
        for _ in range(12):
            truths = [TimeInterval(2, 4)]
            start = rng.uniform(0, 3)
            preds = [TimeInterval(start, start + rng.uniform(0.5, 3))]
            videos.append((preds, truths))
        aps = [detection_ap(videos, t)["ap_mean"] for t in (0.1, 0.25, 0.5, 0.75, 1.0)]
        assert all(a >= b for a, b in zip(aps, aps[1:]))

    def test_one_truth_validates_only_one_prediction(self):
        preds = [TimeInterval(4, 6), TimeInterval(4.1, 6.1)]
        truths = [TimeInterval(4, 6)]
        out = detection_ap([(preds, truths)], 0.5)
        assert out["per_video_precision"] == [0.5]

    def test_greedy_matching_prefers_highest_overlap(self):
        preds = [TimeInterval(0, 4), TimeInterval(2, 4)]
        truths = [TimeInterval(2, 4)]
        matches = match_intervals(preds, truths)
        assert matches[1] == (1.0, 0)
        assert matches[0][1] is None


class TestMultilabelMap:
    def test_positives_ranked_first(self):
        scores = np.array([[0.9], [0.8], [0.2], [0.1]])
        labels = np.array([[1], [1], [0], [0]])
        out = multilabel_map(scores, labels)
        assert out["map"] == 1.0

    def test_hand_case(self):
        out = multilabel_map(
            np.array([[0.9], [0.7], [0.5], [0.3]]), np.array([[1], [0], [1], [0]])
        )
        assert out["map"] == pytest.approx((1 + 2 / 3) / 2)

    def test_zero_positive_class_excluded_and_listed(self, rng):
        scores = rng.random((6, 3))
        labels = np.zeros((6, 3), int)
        labels[:2, 0] = 1
        labels[3, 1] = 1
        out = multilabel_map(scores, labels)
        assert out["skipped_classes"] == [2]
        assert set(out["per_class_ap"]) == {0, 1}

    def test_no_positives_anywhere_rejected(self, rng):
        with pytest.raises(MetricError):
            multilabel_map(rng.random((4, 2)), np.zeros((4, 2), int))

    def test_matches_exhaustive_oracle_on_small_instances(self, rng):
        # all label matrices up to 8 samples x 3 classes (sampled exhaustively
        # in n, with every labeling for small n and random ones above)
        for n in range(1, 9):
            labelings = (
                [np.array(bits).reshape(n, 3) for bits in itertools.product([0, 1], repeat=3 * n)]
                if n <= 3
                else [rng.integers(0, 2, size=(n, 3)) for _ in range(64)]
            )
            for labels in labelings:
                if not labels.any():
                    continue
                scores = rng.random((n, 3))
                out = multilabel_map(scores, labels)
                for c in range(3):
                    if labels[:, c].any():
                        expected = brute_force_ap(scores[:, c].tolist(), labels[:, c].tolist())
                        assert out["per_class_ap"][c] == pytest.approx(expected, abs=1e-12)

    def test_average_precision_with_score_ties(self):
        # stable order: original index order within equal scores
        scores = [0.5, 0.5, 0.5]
        labels = [0, 1, 1]
        assert average_precision(scores, labels) == pytest.approx(
            brute_force_ap(scores, labels)
        )


class TestChi2Homogeneity:
    def test_exactly_proportional_sample(self):
        out = chi2_homogeneity([20, 30, 50], [200, 300, 500])
        assert out["statistic"] == 0.0
        assert out["p_value"] == 1.0

    def test_two_class_balanced(self):
        out = chi2_homogeneity([10, 10], [50, 50])
        assert out["statistic"] == 0.0

    def test_pooling_sparse_classes(self):
        # classes 2 and 3 expect < 5 each -> one pooled bucket, df = 2
        out = chi2_homogeneity([10, 8, 1, 1], [50, 46, 2, 2])
        assert out["df"] == 2
        pooled_obs, pooled_exp = evaluate.pool_sparse_classes(
            np.array([10, 8, 1, 1]), np.array([50, 46, 2, 2])
        )
        assert pooled_obs.tolist() == [10, 8, 2]
        assert pooled_exp[-1] == pytest.approx(20 * 4 / 100)

    def test_all_pooled_gives_p_one(self):
        out = chi2_homogeneity([1, 1], [1, 1])
        assert out["df"] == 0
        assert out["p_value"] == 1.0

    def test_matches_monte_carlo_three_classes(self, rng):
        population = np.array([500, 300, 200])
        p = population / population.sum()
        n = 90
        observed = np.array([52, 22, 16])
        analytic = chi2_homogeneity(observed, population)

        draws = rng.multinomial(n, p, size=100_000)
        expected = n * p
        stats = ((draws - expected) ** 2 / expected).sum(axis=1)
        mc_p = float((stats >= analytic["statistic"] - 1e-12).mean())
        assert analytic["p_value"] == pytest.approx(mc_p, abs=0.02)

    def test_empty_inputs_rejected(self):
        with pytest.raises(InvalidInputError):
            chi2_homogeneity([], [])
        with pytest.raises(InvalidInputError):
            chi2_homogeneity([0, 0], [1, 1])


class TestSummaryTable:
    def test_columns_render(self, rng):
        labels = rng.random(40) < 0.4
        predicted = labels ^ (rng.random(40) < 0.2)
        reports = evaluate.bootstrap_binary_report(predicted, labels, resamples=20, seed=0)
        text = evaluate.summary_table(reports)
        assert "accuracy" in text and "f1" in text and "+/-" in text
