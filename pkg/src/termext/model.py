"""Linear classifier over standardized candidate features.

The default loss is the L2-regularized L1-hinge primal

    J(w, b) = 0.5 * ||w||^2 + sum_i C_i * max(0, 1 - y_i (w . x_i + b))

solved to optimality in its dual by pairwise coordinate updates with
maximal-violating-pair selection; the bias is unregularized and recovered
from the optimality conditions. A logistic alternative minimizes the
analogous smooth objective with L-BFGS. Both paths are deterministic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .candidates import LABEL_NON_TERM, LABEL_TERM
from .features import FeatureMatrix

LOSS_HINGE = "hinge"
LOSS_LOGISTIC = "logistic"

MODEL_MAGIC = b"TEXM1"
MODEL_VERSION = 1

_STD_FLOOR = 1e-12


class TrainingError(ValueError):
    """Raised on unusable training data or prediction-time mismatches."""


class ModelFormatError(ValueError):
    """Raised on malformed or unsupported model files."""


@dataclass
class Standardizer:
    means: np.ndarray
    stdevs: np.ndarray

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.means) / self.stdevs


def fit_standardizer(rows: np.ndarray) -> Standardizer:
    """Per-column z-score parameters; constant columns keep scale 1."""
    rows = np.asarray(rows, dtype=np.float64)
    means = rows.mean(axis=0)
    stdevs = rows.std(axis=0)
    constant = rows.max(axis=0) == rows.min(axis=0)
    stdevs = np.where(constant, 1.0, np.maximum(stdevs, _STD_FLOOR))
    return Standardizer(means=means, stdevs=stdevs)


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    c: float
    loss: str
    standardizer: Standardizer
    schema_fingerprint: str
    seed: int = 0
    objective: float = 0.0
    history: tuple[float, ...] = field(default=(), repr=False)


def _labels_to_signs(labels: tuple[str, ...]) -> np.ndarray:
    y = np.zeros(len(labels))
    for i, label in enumerate(labels):
        if label == LABEL_TERM:
            y[i] = 1.0
        elif label == LABEL_NON_TERM:
            y[i] = -1.0
        else:
            raise TrainingError(f"row {i} is unlabeled and cannot be used for training")
    return y


def _row_costs(y: np.ndarray, c: float, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.full(len(y), c)
    n = len(y)
    n_pos = int((y > 0).sum())
    n_neg = n - n_pos
    costs = np.where(y > 0, n / (2.0 * n_pos), n / (2.0 * n_neg))
    return c * costs


def hinge_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, costs: np.ndarray) -> float:
    margins = 1.0 - y * (X @ w + b)
    return 0.5 * float(w @ w) + float(costs @ np.maximum(margins, 0.0))


def _extract_bias(y: np.ndarray, alpha: np.ndarray, costs: np.ndarray, wx: np.ndarray) -> float:
    """Bias from the optimality conditions of the dual solution.

    Free support vectors pin y_i (w.x_i + b) = 1 exactly; when none exist the
    bound constraints only bracket b, so the midpoint of the feasible
    interval is used.
    """
    slack = 1e-8 * costs
    free = (alpha > slack) & (alpha < costs - slack)
    if free.any():
        return float(np.mean(y[free] - wx[free]))
    lower = -np.inf
    upper = np.inf
    at_zero = alpha <= slack
    at_cost = ~at_zero
    pos, neg = y > 0, y < 0
    # y=+1, alpha=0:  b >= 1 - w.x   |  y=-1, alpha=C:  b >= -1 - w.x
    lo_candidates = np.concatenate([(1.0 - wx)[at_zero & pos], (-1.0 - wx)[at_cost & neg]])
    hi_candidates = np.concatenate([(1.0 - wx)[at_cost & pos], (-1.0 - wx)[at_zero & neg]])
    if lo_candidates.size:
        lower = float(lo_candidates.max())
    if hi_candidates.size:
        upper = float(hi_candidates.min())
    if not np.isfinite(lower):
        return upper if np.isfinite(upper) else 0.0
    if not np.isfinite(upper):
        return lower
    return 0.5 * (lower + upper)


def _solve_hinge(
    X: np.ndarray,
    y: np.ndarray,
    costs: np.ndarray,
    kkt_tol: float = 1e-8,
    rel_tol: float = 1e-6,
    max_epochs: int = 10_000,
) -> tuple[np.ndarray, float, list[float]]:
    """Pairwise dual coordinate ascent with second-order working-set selection.

    One epoch is n pair updates. Stops on a vanishing optimality gap, or on a
    relative dual-objective change below rel_tol once the gap is already
    small, or after max_epochs. The Gram matrix is precomputed when it fits
    in memory; otherwise working-set kernel columns are cached, so only first
    touches of a row pay the O(n d) product.
    """
    n, _ = X.shape
    alpha = np.zeros(n)
    bound_eps = 1e-12 * costs.max()
    diag = np.einsum("ij,ij->i", X, X)
    history: list[float] = []
    prev_dual = 0.0

    if 8 * n * n <= 2e8:
        gram = X @ X.T

        def kernel_column(idx: int) -> np.ndarray:
            return gram[idx]

    else:
        cache: dict[int, np.ndarray] = {}
        cache_cap = max(64, int(2e8 / (8 * n)))

        def kernel_column(idx: int) -> np.ndarray:
            col = cache.get(idx)
            if col is None:
                col = X @ X[idx]
                if len(cache) >= cache_cap:
                    cache.pop(next(iter(cache)))
                cache[idx] = col
            return col

    pos = y > 0
    up = (pos & (alpha < costs - bound_eps)) | (~pos & (alpha > bound_eps))
    low = (~pos & (alpha < costs - bound_eps)) | (pos & (alpha > bound_eps))
    # yg_i = -y_i * dual_gradient_i, maintained incrementally per pair update
    yg = y.copy()

    def refresh_membership(idx: int) -> None:
        interior_up = alpha[idx] < costs[idx] - bound_eps
        interior_low = alpha[idx] > bound_eps
        up[idx] = interior_up if pos[idx] else interior_low
        low[idx] = interior_low if pos[idx] else interior_up

    def dual_objective() -> float:
        return 0.5 * float(alpha @ (-y * yg - 1.0))

    have_gram = 8 * n * n <= 2e8

    def newton_polish() -> bool:
        """Exact solve of the equality-constrained QP on the free set.

        Pair updates crawl when many nearly-parallel rows sit strictly inside
        the box, so once per epoch the free-subspace optimum is computed
        directly and reached by a feasibility-clipped line step. The step is
        kept on the equality hyperplane and reverted if it fails to lower the
        dual objective (possible only in the rank-deficient fallback).
        """
        if not have_gram:
            return False
        free = np.flatnonzero((alpha > bound_eps) & (alpha < costs - bound_eps))
        m = len(free)
        if m < 2 or m > 2000:
            return False
        y_f = y[free]
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = (y_f[:, None] * y_f[None, :]) * gram[np.ix_(free, free)]
        kkt[:m, m] = y_f
        kkt[m, :m] = y_f
        rhs = np.concatenate([y_f * yg[free], [0.0]])  # -grad on the free set
        delta = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:m]
        delta -= y_f * (float(y_f @ delta) / m)  # stay on the hyperplane
        norm = float(np.abs(delta).max(initial=0.0))
        if norm < 1e-12:
            return False
        # largest feasible fraction of the step inside the box
        t = 1.0
        grow = delta > 0
        if grow.any():
            t = min(t, float(((costs[free] - alpha[free])[grow] / delta[grow]).min()))
        shrink = delta < 0
        if shrink.any():
            t = min(t, float((alpha[free][shrink] / -delta[shrink]).min()))
        if t <= 0.0 or t * norm < 1e-12:
            return False
        before = dual_objective()
        saved_alpha = alpha[free].copy()
        saved_yg = yg.copy()
        alpha[free] = np.clip(alpha[free] + t * delta, 0.0, costs[free])
        yg[:] -= gram[free].T @ (y_f * (alpha[free] - saved_alpha))
        if dual_objective() >= before:
            alpha[free] = saved_alpha
            yg[:] = saved_yg
            return False
        for idx in free:
            refresh_membership(int(idx))
        return True

    done = False
    for _epoch in range(max_epochs):
        for _step in range(n):
            i = int(np.argmax(np.where(up, yg, -np.inf)))
            gap = yg[i] - float(np.where(low, yg, np.inf).min())
            if not np.isfinite(gap) or gap < kkt_tol:
                done = True
                break
            col_i = kernel_column(i)
            # second-order selection: largest guaranteed objective decrease
            diff = yg[i] - yg
            eta_all = np.maximum(diag[i] + diag - 2.0 * col_i, 1e-12)
            gain = np.where(low & (diff > 0), diff * diff / eta_all, -np.inf)
            j = int(np.argmax(gain))
            col_j = kernel_column(j)
            step = (yg[i] - yg[j]) / eta_all[j]
            # direction: alpha_i += y_i s, alpha_j -= y_j s; keep both in [0, C]
            if pos[i]:
                hi_i = costs[i] - alpha[i]
            else:
                hi_i = alpha[i]
            if pos[j]:
                hi_j = alpha[j]
            else:
                hi_j = costs[j] - alpha[j]
            step = min(step, hi_i, hi_j)
            if step <= 0.0:
                done = True
                break
            alpha[i] += y[i] * step
            alpha[j] -= y[j] * step
            yg -= step * (col_i - col_j)
            refresh_membership(i)
            refresh_membership(j)
        if not done:
            for _ in range(3):
                if not newton_polish():
                    break
        dual = dual_objective()
        history.append(dual)
        if done:
            break
        # near-stationary objective with a small residual gap: effectively
        # converged, remaining mass is shuffling among equivalent rows
        if prev_dual != 0.0 and abs(dual - prev_dual) < rel_tol * abs(prev_dual):
            gap = float(np.where(up, yg, -np.inf).max() - np.where(low, yg, np.inf).min())
            if gap < 1e-3:
                break
        prev_dual = dual

    w = X.T @ (alpha * y)
    wx = y - yg  # w . x_i recovered from the maintained values
    b = _extract_bias(y, alpha, costs, wx)
    return w, b, history


def logistic_objective(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, costs: np.ndarray
) -> tuple[float, np.ndarray]:
    """Objective and analytic gradient of the regularized logistic loss."""
    w, b = params[:-1], params[-1]
    z = y * (X @ w + b)
    obj = 0.5 * float(w @ w) + float(costs @ np.logaddexp(0.0, -z))
    # d/dz log(1+exp(-z)) = -expit(-z)
    coef = -costs * expit(-z) * y
    grad = np.concatenate([w + X.T @ coef, [coef.sum()]])
    return obj, grad


def _solve_logistic(
    X: np.ndarray, y: np.ndarray, costs: np.ndarray
) -> tuple[np.ndarray, float, list[float]]:
    history: list[float] = []

    def fun(params: np.ndarray) -> tuple[float, np.ndarray]:
        obj, grad = logistic_objective(params, X, y, costs)
        history.append(obj)
        return obj, grad

    x0 = np.zeros(X.shape[1] + 1)
    result = minimize(
        fun, x0, jac=True, method="L-BFGS-B",
        options={"maxiter": 10_000, "ftol": 1e-14, "gtol": 1e-10},
    )
    return result.x[:-1], float(result.x[-1]), history


def train(
    matrix: FeatureMatrix,
    c: float = 1.0,
    loss: str = LOSS_HINGE,
    seed: int = 0,
    balanced: bool = False,
) -> LinearModel:
    """Fit the standardizer and the linear classifier on labeled rows."""
    if c <= 0:
        raise TrainingError("regularization constant must be positive")
    if loss not in (LOSS_HINGE, LOSS_LOGISTIC):
        raise TrainingError(f"unknown loss {loss!r}")
    y = _labels_to_signs(matrix.labels)
    if len(y) == 0:
        raise TrainingError("no training rows")
    if (y > 0).all() or (y < 0).all():
        raise TrainingError("training data contains a single class; need both labels")

    standardizer = fit_standardizer(matrix.rows)
    X = standardizer.transform(matrix.rows)
    costs = _row_costs(y, c, balanced)
    if loss == LOSS_HINGE:
        w, b, history = _solve_hinge(X, y, costs)
    else:
        w, b, history = _solve_logistic(X, y, costs)
    objective = (
        hinge_objective(w, b, X, y, costs)
        if loss == LOSS_HINGE
        else logistic_objective(np.concatenate([w, [b]]), X, y, costs)[0]
    )
    return LinearModel(
        weights=w,
        bias=b,
        c=c,
        loss=loss,
        standardizer=standardizer,
        schema_fingerprint=matrix.schema.fingerprint,
        seed=seed,
        objective=objective,
        history=tuple(history),
    )


def predict(model: LinearModel, matrix: FeatureMatrix) -> tuple[tuple[str, ...], np.ndarray]:
    """Label rows by the sign of the margin; ties at 0 are non-terms."""
    if matrix.schema.fingerprint != model.schema_fingerprint:
        raise TrainingError(
            "feature schema mismatch: matrix "
            f"{matrix.schema.fingerprint} vs model {model.schema_fingerprint}"
        )
    margins = model.standardizer.transform(matrix.rows) @ model.weights + model.bias
    labels = tuple(LABEL_TERM if m > 0 else LABEL_NON_TERM for m in margins)
    return labels, margins


def save_model(model: LinearModel, stream: BinaryIO, manifest: dict | None = None) -> None:
    """Versioned binary model file; the float payload round-trips bit-exactly."""
    stream.write(MODEL_MAGIC)
    stream.write(struct.pack("<B", MODEL_VERSION))
    blob = json.dumps(manifest or {}, sort_keys=True).encode("utf-8")
    stream.write(struct.pack("<I", len(blob)))
    stream.write(blob)
    loss_byte = 0 if model.loss == LOSS_HINGE else 1
    fp = model.schema_fingerprint.encode("ascii")
    stream.write(struct.pack("<BddqI", loss_byte, model.c, model.bias, model.seed, len(fp)))
    stream.write(fp)
    n = len(model.weights)
    stream.write(struct.pack("<I", n))
    for arr in (model.weights, model.standardizer.means, model.standardizer.stdevs):
        stream.write(np.asarray(arr, dtype="<f8").tobytes())
    stream.write(struct.pack("<d", model.objective))


def load_model(stream: BinaryIO) -> LinearModel:
    magic = stream.read(len(MODEL_MAGIC))
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad model magic {magic!r} (expected {MODEL_MAGIC!r})")
    (version,) = struct.unpack("<B", stream.read(1))
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version} (supported: {MODEL_VERSION})")
    (blob_len,) = struct.unpack("<I", stream.read(4))
    stream.read(blob_len)  # manifest echo, not part of the model state
    loss_byte, c, bias, seed, fp_len = struct.unpack("<BddqI", stream.read(29))
    fingerprint = stream.read(fp_len).decode("ascii")
    (n,) = struct.unpack("<I", stream.read(4))
    payload = stream.read(3 * 8 * n + 8)
    if len(payload) != 3 * 8 * n + 8:
        raise ModelFormatError("truncated model payload")
    w = np.frombuffer(payload[: 8 * n], dtype="<f8").copy()
    means = np.frombuffer(payload[8 * n: 16 * n], dtype="<f8").copy()
    stdevs = np.frombuffer(payload[16 * n: 24 * n], dtype="<f8").copy()
    (objective,) = struct.unpack("<d", payload[24 * n:])
    return LinearModel(
        weights=w,
        bias=float(bias),
        c=float(c),
        loss=LOSS_HINGE if loss_byte == 0 else LOSS_LOGISTIC,
        standardizer=Standardizer(means=means, stdevs=stdevs),
        schema_fingerprint=fingerprint,
        seed=int(seed),
        objective=float(objective),
    )
