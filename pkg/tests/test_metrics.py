"""Accuracy, calibration error, and the batched evaluation driver."""

import numpy as np
import pytest

from neotta import (
    AdaptMode,
    AdapterState,
    EmbeddingBatch,
    Protocol,
    UpdateMode,
    accuracy,
    center,
    ece,
    evaluate,
    predict,
    predict_mse,
    update,
    update_continual,
)
from neotta.errors import (
    EmptyInput,
    LengthMismatch,
    OutOfRangeConfidence,
    WrongMode,
)


def brute_force_ece(confidences, correct, n_bins):
    """Direct definition: right-closed equal-width bins over (0, 1]."""
    confidences = np.asarray(confidences, dtype=np.float64)
    correct = np.asarray(correct, dtype=np.float64)
    total = 0.0
    for b in range(n_bins):
        lo = b / n_bins
        hi = (b + 1) / n_bins
        mask = (confidences > lo) & (confidences <= hi)
        if not mask.any():
            continue
        gap = abs(correct[mask].mean() - confidences[mask].mean())
        total += mask.sum() / confidences.size * gap
    return total


class TestAccuracy:
    def test_counts_matches(self):
        assert accuracy(np.array([1, 2, 3, 1]), np.array([1, 0, 3, 2])) == 0.5
        assert accuracy(np.array([0]), np.array([0])) == 1.0

    def test_rejects_bad_shapes(self):
        with pytest.raises(LengthMismatch):
            accuracy(np.array([1, 2]), np.array([1]))
        with pytest.raises(EmptyInput):
            accuracy(np.array([], dtype=int), np.array([], dtype=int))


class TestEce:
    def test_two_sample_hand_value(self):
        # Both samples share one bin: gap |1.0 - 0.8| = 0.2 at weight 1.
        report = ece(
            np.array([0.8, 0.8]), np.array([True, True]), n_bins=15
        )
        assert abs(report.ece - 0.2) < 1e-15

    def test_matches_brute_force_on_random_draws(self):
        rng = np.random.default_rng(123)
        for trial in range(20):
            n = int(rng.integers(1, 400))
            n_bins = int(rng.integers(1, 30))
            conf = rng.uniform(1e-6, 1.0, size=n)
            correct = rng.random(n) < conf
            report = ece(conf, correct, n_bins=n_bins)
            expected = brute_force_ece(conf, correct, n_bins)
            assert abs(report.ece - expected) <= 1e-12

    def test_bins_partition_all_samples(self):
        rng = np.random.default_rng(5)
        conf = rng.uniform(0.01, 1.0, size=257)
        correct = rng.random(257) < 0.5
        report = ece(conf, correct, n_bins=15)
        assert len(report.per_bin) == 15
        assert sum(b.count for b in report.per_bin) == 257
        np.testing.assert_array_equal(
            report.bin_edges, [b / 15 for b in range(16)]
        )

    def test_boundary_confidence_goes_to_lower_bin(self):
        # With 4 bins, 0.25 sits on the edge: right-closed means bin 0.
        report = ece(np.array([0.25]), np.array([True]), n_bins=4)
        assert report.per_bin[0].count == 1
        assert report.per_bin[1].count == 0
        # And 1.0 lands in the final bin.
        report = ece(np.array([1.0]), np.array([True]), n_bins=4)
        assert report.per_bin[3].count == 1

    def test_empty_bins_contribute_zero(self):
        report = ece(np.array([0.95, 0.93]), np.array([True, True]), n_bins=2)
        populated = [b for b in report.per_bin if b.count]
        assert len(populated) == 1
        stats = populated[0]
        assert report.ece == abs(stats.mean_accuracy - stats.mean_confidence)
        empty = report.per_bin[0]
        assert empty.count == 0
        assert empty.mean_confidence == 0.0 and empty.mean_accuracy == 0.0

    def test_rejects_out_of_range(self):
        with pytest.raises(OutOfRangeConfidence):
            ece(np.array([0.0, 0.5]), np.array([True, False]))
        with pytest.raises(OutOfRangeConfidence):
            ece(np.array([1.0 + 1e-9]), np.array([True]))
        with pytest.raises(LengthMismatch):
            ece(np.array([0.5]), np.array([True, False]))
        with pytest.raises(EmptyInput):
            ece(np.array([]), np.array([], dtype=bool))


def manual_online_eval(head, data, labels, batch_size, mode, alpha):
    """Streaming loop written straight from the update and predict calls."""
    dim = data.shape[1]
    if mode is AdaptMode.NEO_CONTINUAL:
        state = AdapterState.initial(dim, mode=UpdateMode.EMA, alpha=alpha)
    else:
        state = AdapterState.initial(dim)
    hits = []
    confs = []
    for start in range(0, data.shape[0], batch_size):
        chunk = EmbeddingBatch(data[start:start + batch_size])
        if mode is AdaptMode.NEO_CONTINUAL:
            state = update_continual(state, chunk)
        else:
            state = update(state, chunk)
        if mode is AdaptMode.NEO_MSE:
            pred = predict_mse(head, chunk, state)
        else:
            pred = predict(head, chunk, state)
        hits.append(pred.predicted == labels[start:start + batch_size])
        confs.append(pred.confidence)
    return np.concatenate(hits), np.concatenate(confs)


class TestEvaluate:
    @pytest.fixture()
    def shifted(self, shifted_noisy):
        _, head, dataset = shifted_noisy
        return dataset, head

    def test_online_matches_manual_loop(self, shifted):
        dataset, head = shifted
        for mode in (AdaptMode.NEO, AdaptMode.NEO_CONTINUAL, AdaptMode.NEO_MSE):
            report = evaluate(
                head, dataset.corrupt, dataset.labels, mode,
                Protocol.ONLINE, batch_size=50, alpha=0.25,
            )
            hits, confs = manual_online_eval(
                head, dataset.corrupt.data, dataset.labels, 50, mode, 0.25
            )
            assert report.n == dataset.rows
            assert report.accuracy == hits.mean()
            expected_ece = brute_force_ece(confs, hits, 15)
            assert abs(report.ece.ece - expected_ece) <= 1e-12
            assert report.mode is mode

    def test_none_ignores_state_and_protocol(self, shifted):
        dataset, head = shifted
        base = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NONE,
                        Protocol.ONLINE)
        stale = AdapterState.initial(64)
        for _ in range(3):
            stale = update(stale, dataset.corrupt)
        again = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NONE,
                         Protocol.FROZEN, state=stale, batch_size=7)
        assert base.accuracy == again.accuracy
        assert base.ece.ece == again.ece.ece

    def test_frozen_uses_supplied_state(self, shifted):
        dataset, head = shifted
        state = update(AdapterState.initial(64), dataset.corrupt)
        report = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NEO,
                          Protocol.FROZEN, state=state)
        pred = predict(head, dataset.corrupt, state)
        assert report.accuracy == np.mean(pred.predicted == dataset.labels)

    def test_frozen_without_state_is_unadapted(self, shifted):
        dataset, head = shifted
        frozen = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NEO,
                          Protocol.FROZEN)
        plain = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NONE,
                         Protocol.FROZEN)
        assert frozen.accuracy == plain.accuracy

    def test_continual_rejects_cumulative_state(self, shifted):
        dataset, head = shifted
        wrong = AdapterState.initial(64)
        with pytest.raises(WrongMode):
            evaluate(head, dataset.corrupt, dataset.labels,
                     AdaptMode.NEO_CONTINUAL, Protocol.FROZEN, state=wrong)

    def test_adaptation_beats_no_adaptation_under_shift(self, shifted):
        dataset, head = shifted
        adapted = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NEO,
                           Protocol.ONLINE, batch_size=64)
        plain = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NONE,
                         Protocol.ONLINE)
        assert adapted.accuracy > plain.accuracy + 0.1

    def test_mse_path_uses_uniform_bias(self, shifted):
        dataset, head = shifted
        state = update(AdapterState.initial(64), dataset.corrupt)
        report = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NEO_MSE,
                          Protocol.FROZEN, state=state)
        centered = center(dataset.corrupt, state)
        logits = centered.data @ head.weights.T + 1.0 / 10
        assert report.accuracy == np.mean(
            np.argmax(logits, axis=1) == dataset.labels
        )

    def test_report_dict_round_trip(self, shifted):
        dataset, head = shifted
        report = evaluate(head, dataset.corrupt, dataset.labels, AdaptMode.NEO,
                          Protocol.ONLINE)
        payload = report.to_dict()
        assert payload["n"] == dataset.rows
        assert payload["mode"] == "neo"
        assert payload["accuracy"] == report.accuracy
        assert payload["ece"]["ece"] == report.ece.ece
        assert len(payload["ece"]["per_bin"]) == 15
