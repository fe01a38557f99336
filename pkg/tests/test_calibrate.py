import numpy as np
import pytest

from ordinalcp import (
    FULL,
    CalibratedPredictor,
    GradingRecord,
    LabelInterval,
    Method,
    calibrate,
    conformal_quantile,
    is_full,
    label_scores,
    load_predictor,
    predictor_from_text,
    predictor_to_text,
    quantile_rank,
    save_predictor,
)

from helpers import random_probs


def _records(rng, n, k=4, patients=None):
    out = []
    for i in range(n):
        f = random_probs(rng, k)
        y = int(rng.choice(k, p=f))
        pid = patients[i % len(patients)] if patients else f"P{i:03d}"
        out.append(GradingRecord(probs=f, label=y, patient_id=pid))
    return out


# ---------------------------------------------------------------------------
# Quantile rank and conformal quantile


@pytest.mark.parametrize(
    "n,alpha,expected",
    [
        (9, 0.1, 9),
        (4, 0.2, 4),
        (3, 0.1, 4),
        (19, 0.15, 17),  # (n+1)(1-alpha) integer: binary float rounding must not bump it
        (19, 0.05, 19),
        (99, 0.1, 90),
    ],
)
def test_quantile_rank(n, alpha, expected):
    assert quantile_rank(n, alpha) == expected


def test_conformal_quantile_examples():
    scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert conformal_quantile(scores, 0.1) == 0.9
    assert conformal_quantile([0.3, 0.1, 0.5, 0.2], 0.2) == 0.5
    assert is_full(conformal_quantile([0.5, 0.2, 0.9], 0.1))


def test_conformal_quantile_full_boundary_and_order_statistic():
    rng = np.random.default_rng(20)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        alpha = float(rng.uniform(0.005, 0.5))
        scores = rng.random(n)
        lam = conformal_quantile(scores, alpha)
        k = quantile_rank(n, alpha)
        if k > n:
            assert is_full(lam)
        else:
            assert lam in scores
            assert lam == np.sort(scores)[k - 1]


def test_conformal_quantile_duplicate_scores():
    # order statistic over the multiset, duplicates included
    assert conformal_quantile([0.5, 0.5, 0.5, 0.1], 0.2) == 0.5


def test_conformal_quantile_errors():
    with pytest.raises(ValueError, match="empty calibration set"):
        conformal_quantile([], 0.1)
    with pytest.raises(ValueError, match="lie in"):
        conformal_quantile([0.5, 1.5], 0.1)
    with pytest.raises(ValueError, match="finite"):
        conformal_quantile([0.5, float("nan")], 0.1)
    with pytest.raises(ValueError, match="alpha"):
        conformal_quantile([0.5], 0.0)
    with pytest.raises(ValueError, match="alpha"):
        conformal_quantile([0.5], 1.0)


# ---------------------------------------------------------------------------
# Calibration


def test_calibrate_matches_quantile_of_scores():
    rng = np.random.default_rng(21)
    recs = _records(rng, 40)
    for method in (Method.APS, Method.LAC, Method.CDF):
        pred = calibrate(method, recs, 0.1)
        scores = [label_scores(method, r.probs)[r.label] for r in recs]
        assert pred.lambda_hat == conformal_quantile(scores, 0.1)
        assert pred.n_cal == 40 and pred.n_classes == 4 and pred.alpha == 0.1


def test_calibrate_perfect_classifier_gives_zero_threshold():
    recs = [
        GradingRecord(probs=[1.0, 0.0], label=0, patient_id=f"P{i}") for i in range(20)
    ]
    pred = calibrate(Method.LAC, recs, 0.2)
    assert pred.lambda_hat == 0.0


def test_calibrate_small_set_forces_full():
    rng = np.random.default_rng(22)
    recs = _records(rng, 3)
    pred = calibrate(Method.CDF, recs, 0.05)  # rank 4 > n=3
    assert is_full(pred.lambda_hat)


def test_calibrate_is_permutation_invariant():
    rng = np.random.default_rng(23)
    recs = _records(rng, 30)
    lam = calibrate(Method.APS, recs, 0.1).lambda_hat
    shuffled = list(recs)
    rng.shuffle(shuffled)
    assert calibrate(Method.APS, shuffled, 0.1).lambda_hat == lam


def test_threshold_monotone_in_alpha():
    rng = np.random.default_rng(24)
    recs = _records(rng, 25)
    for method in (Method.APS, Method.LAC, Method.CDF):
        lams = [calibrate(method, recs, a).lambda_hat for a in (0.02, 0.1, 0.3, 0.6)]
        assert all(a >= b for a, b in zip(lams, lams[1:]))


def test_calibrate_rejects_bad_inputs():
    rng = np.random.default_rng(25)
    recs = _records(rng, 5)
    with pytest.raises(ValueError, match="diagnostic-only"):
        calibrate(Method.APS_EXACT, recs, 0.1)
    with pytest.raises(ValueError, match="empty calibration set"):
        calibrate(Method.APS, [], 0.1)
    mixed = recs + [GradingRecord(probs=[0.5, 0.5], label=0, patient_id="PX")]
    with pytest.raises(ValueError, match="classes"):
        calibrate(Method.APS, mixed, 0.1)
    with pytest.raises(ValueError, match="alpha"):
        calibrate(Method.APS, recs, 1.5)


# ---------------------------------------------------------------------------
# Prediction


def test_predict_examples():
    p = CalibratedPredictor(Method.APS, 0.8, 0.1, 9, 4)
    assert p.predict([0.1, 0.5, 0.3, 0.1]) == LabelInterval(0, 2)

    full = CalibratedPredictor(Method.CDF, FULL, 0.05, 3, 4)
    assert full.predict([0.1, 0.5, 0.3, 0.1]) == LabelInterval(0, 3)
    full_lac = CalibratedPredictor(Method.LAC, FULL, 0.05, 3, 4)
    assert set(full_lac.predict([0.1, 0.5, 0.3, 0.1])) == {0, 1, 2, 3}

    lac = CalibratedPredictor(Method.LAC, 0.55, 0.1, 9, 4)
    assert set(lac.predict([0.45, 0.05, 0.45, 0.05])) == {0, 2}


def test_predict_empty_lac_falls_back_to_argmax():
    lac = CalibratedPredictor(Method.LAC, 0.1, 0.1, 9, 3)
    out = lac.predict([0.4, 0.35, 0.25])  # every score above 0.1
    assert set(out) == {0}
    assert out.size == 1


def test_predict_never_empty():
    rng = np.random.default_rng(26)
    recs = _records(rng, 30)
    for method in (Method.APS, Method.LAC, Method.CDF):
        for alpha in (0.01, 0.1, 0.5):
            pred = calibrate(method, recs, alpha)
            for _ in range(50):
                assert pred.predict(random_probs(rng, 4)).size >= 1


def test_predict_rejects_class_mismatch():
    p = CalibratedPredictor(Method.APS, 0.5, 0.1, 9, 4)
    with pytest.raises(ValueError, match="classes"):
        p.predict([0.5, 0.5])


# ---------------------------------------------------------------------------
# Serialization


def test_predictor_text_round_trip(tmp_path):
    rng = np.random.default_rng(27)
    preds = [
        CalibratedPredictor(Method.APS, float(rng.random()), 0.1, 321, 4),
        CalibratedPredictor(Method.LAC, 0.0, 0.05, 10, 3),
        CalibratedPredictor(Method.CDF, FULL, 0.01, 3, 5),
    ]
    for p in preds:
        q = predictor_from_text(predictor_to_text(p))
        assert q == p  # bit-faithful, including the threshold float
        path = tmp_path / "pred.txt"
        save_predictor(p, path)
        assert load_predictor(path) == p


def test_predictor_text_format_is_fixed():
    p = CalibratedPredictor(Method.APS, 0.625, 0.1, 9, 4)
    text = predictor_to_text(p)
    assert text.splitlines() == [
        "method=aps",
        "lambda_hat=0.625",
        "alpha=0.1",
        "n_cal=9",
        "n_classes=4",
    ]
    assert "FULL" in predictor_to_text(
        CalibratedPredictor(Method.APS, FULL, 0.1, 2, 4)
    )


def test_predictor_from_text_errors():
    with pytest.raises(ValueError, match="missing predictor fields"):
        predictor_from_text("method=aps\n")
    with pytest.raises(ValueError, match="key=value"):
        predictor_from_text("what is this")
