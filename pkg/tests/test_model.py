import io

import numpy as np
import pytest

from termext.features import FeatureError
from termext.model import (
    LinearModel,
    ModelFormatError,
    Standardizer,
    TrainingError,
    fit_standardizer,
    hinge_objective,
    load_model,
    logistic_objective,
    predict,
    save_model,
    train,
)

from svm_oracle import solve_hinge_reference
from synth import matrix_from_array


def labels_from_signs(y):
    return tuple("term" if v > 0 else "non-term" for v in y)


def separable_problem(rng, n=50, d=10, margin=0.3):
    w_true = rng.standard_normal(d)
    w_true /= np.linalg.norm(w_true)
    rows = []
    signs = []
    while len(rows) < n:
        x = rng.standard_normal(d)
        s = float(x @ w_true)
        if abs(s) > margin:
            rows.append(x)
            signs.append(1.0 if s > 0 else -1.0)
    return np.array(rows), np.array(signs)


class TestStandardizer:
    def test_constant_column_maps_to_zero(self):
        X = np.array([[5.0, 1.0], [5.0, 3.0], [5.0, 5.0]])
        std = fit_standardizer(X)
        out = std.transform(X)
        assert np.allclose(out[:, 0], 0.0)
        assert std.stdevs[0] == 1.0

    def test_zero_mean_unit_std_unchanged(self):
        X = np.array([[-1.0], [1.0]])
        out = fit_standardizer(X).transform(X)
        assert np.allclose(out, X)

    def test_two_value_column(self):
        X = np.array([[0.0], [2.0]])
        out = fit_standardizer(X).transform(X)
        assert np.allclose(out, [[-1.0], [1.0]])


class TestHingeTraining:
    def test_symmetric_two_points(self):
        matrix = matrix_from_array(np.array([[-1.0], [1.0]]), ("non-term", "term"))
        model = train(matrix, c=1.0)
        labels, margins = predict(model, matrix)
        assert labels == ("non-term", "term")
        # boundary at the origin: standardization keeps these points at -1/+1
        assert abs(model.bias) < 1e-9
        assert margins[1] == pytest.approx(1.0, abs=1e-6)

    def test_separable_training_accuracy(self):
        rng = np.random.default_rng(42)
        X, y = separable_problem(rng, n=50, d=10)
        matrix = matrix_from_array(X, labels_from_signs(y))
        model = train(matrix, c=1.0)
        labels, _ = predict(model, matrix)
        accuracy = np.mean([l == t for l, t in zip(labels, labels_from_signs(y))])
        assert accuracy >= 0.98

    def test_single_class_rejected(self):
        matrix = matrix_from_array(np.ones((3, 2)), ("term", "term", "term"))
        with pytest.raises(TrainingError, match="single class"):
            train(matrix)

    def test_objective_matches_reference(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((60, 8))
        y = np.where(rng.random(60) > 0.4, 1.0, -1.0)
        matrix = matrix_from_array(X, labels_from_signs(y))
        model = train(matrix, c=1.0)
        Xs = model.standardizer.transform(matrix.rows)
        costs = np.ones(len(y))
        _, _, ref_obj = solve_hinge_reference(Xs, y, costs)
        ours = hinge_objective(model.weights, model.bias, Xs, y, costs)
        assert ours == pytest.approx(ref_obj, rel=1e-4)

    def test_deterministic_weights(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((40, 6))
        y = np.where(rng.random(40) > 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        matrix = matrix_from_array(X, labels_from_signs(y))
        a = train(matrix, c=1.0, seed=3)
        b = train(matrix, c=1.0, seed=3)
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.bias == b.bias

    def test_duplicating_a_row_never_flips_it(self):
        rng = np.random.default_rng(5)
        X, y = separable_problem(rng, n=30, d=5)
        matrix = matrix_from_array(X, labels_from_signs(y))
        base_labels, _ = predict(train(matrix, c=1.0), matrix)
        dup = matrix_from_array(
            np.vstack([X, X[3]]), labels_from_signs(np.append(y, y[3]))
        )
        model = train(dup, c=1.0)
        labels, _ = predict(model, dup)
        assert labels[3] == base_labels[3] == labels[-1]

    def test_rescaling_absorbed_by_standardizer(self):
        rng = np.random.default_rng(12)
        X, y = separable_problem(rng, n=40, d=6)
        labels = labels_from_signs(y)
        base, _ = predict(train(matrix_from_array(X, labels)), matrix_from_array(X, labels))
        # power-of-two scales and exact shifts keep standardization bit-exact
        scale = np.array([2.0, 0.5, 4.0, 1.0, 8.0, 0.25])
        shift = np.array([1.0, -2.0, 0.0, 3.0, 0.0, -1.0])
        rescaled = matrix_from_array(X * scale + shift, labels)
        out, _ = predict(train(rescaled), rescaled)
        assert out == base

    def test_balanced_costs_run(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((30, 4))
        labels = ("term",) * 3 + ("non-term",) * 27
        model = train(matrix_from_array(X, labels), balanced=True)
        assert model.weights.shape == (4,)


class TestLogisticTraining:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(77)
        X = rng.standard_normal((12, 4))
        y = np.where(rng.random(12) > 0.5, 1.0, -1.0)
        costs = np.ones(12)
        params = rng.standard_normal(5) * 0.5
        _, grad = logistic_objective(params, X, y, costs)
        eps = 1e-6
        for k in range(5):
            offset = np.zeros(5)
            offset[k] = eps
            hi, _ = logistic_objective(params + offset, X, y, costs)
            lo, _ = logistic_objective(params - offset, X, y, costs)
            numeric = (hi - lo) / (2 * eps)
            assert grad[k] == pytest.approx(numeric, rel=1e-6, abs=1e-8)

    def test_logistic_separates(self):
        rng = np.random.default_rng(21)
        X, y = separable_problem(rng, n=40, d=5)
        matrix = matrix_from_array(X, labels_from_signs(y))
        model = train(matrix, loss="logistic")
        labels, _ = predict(model, matrix)
        assert labels == labels_from_signs(y)


class TestPredict:
    def unit_model(self):
        return LinearModel(
            weights=np.array([1.0]),
            bias=0.0,
            c=1.0,
            loss="hinge",
            standardizer=Standardizer(means=np.zeros(1), stdevs=np.ones(1)),
            schema_fingerprint=matrix_from_array(np.zeros((1, 1)), ("term",)).schema.fingerprint,
        )

    def test_margins_and_tie_rule(self):
        matrix = matrix_from_array(np.array([[2.0], [-2.0], [0.0]]), ("unlabeled",) * 3)
        labels, margins = predict(self.unit_model(), matrix)
        assert labels == ("term", "non-term", "non-term")
        assert margins[0] == pytest.approx(2.0)

    def test_fingerprint_mismatch(self):
        matrix = matrix_from_array(np.zeros((1, 2)), ("unlabeled",))
        with pytest.raises(TrainingError, match="schema mismatch"):
            predict(self.unit_model(), matrix)


class TestModelFile:
    def trained(self):
        rng = np.random.default_rng(33)
        X = rng.standard_normal((20, 5))
        y = np.where(rng.random(20) > 0.5, 1.0, -1.0)
        y[:2] = [1.0, -1.0]
        return train(matrix_from_array(X, labels_from_signs(y)), c=2.0, seed=7)

    def test_round_trip_bit_exact(self):
        model = self.trained()
        buf = io.BytesIO()
        save_model(model, buf, manifest={"run": "test"})
        buf.seek(0)
        back = load_model(buf)
        assert back.weights.tobytes() == model.weights.tobytes()
        assert back.standardizer.means.tobytes() == model.standardizer.means.tobytes()
        assert back.standardizer.stdevs.tobytes() == model.standardizer.stdevs.tobytes()
        assert back.bias == model.bias
        assert back.c == model.c
        assert back.loss == model.loss
        assert back.seed == model.seed
        assert back.objective == model.objective
        assert back.schema_fingerprint == model.schema_fingerprint

    def test_wrong_magic(self):
        with pytest.raises(ModelFormatError, match="magic"):
            load_model(io.BytesIO(b"XXXXX" + b"\x00" * 64))

    def test_version_skew(self):
        model = self.trained()
        buf = io.BytesIO()
        save_model(model, buf)
        payload = bytearray(buf.getvalue())
        payload[5] = 9  # version byte
        with pytest.raises(ModelFormatError, match="unsupported model version 9"):
            load_model(io.BytesIO(bytes(payload)))
