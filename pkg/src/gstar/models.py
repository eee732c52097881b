"""GSTAR and VAR models: fitting, one-step prediction, VAR expansion.

A GSTAR(p) model with ``eta`` neighborhood levels predicts

    Y_i(t) = sum_j sum_l phi_i[(j-1)*eta + l] * (W^(l) Y(t-j))_i

so it is a VAR(p) whose lag matrices are constrained to
``A_j[i] = sum_l phi_i[(j-1)*eta + l] * W^(l)[i]``. Data are assumed
standardized, so no model carries an intercept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .penalty import PenaltySpec
from .series import (
    ModelOrder,
    SpatioTemporalSeries,
    StandardizationStats,
    _check_range,
    design_tensor,
    mix,
)
from .errors import WindowTooShortError
from .solver import FitDiagnostics, SolverConfig, fista_batch
from .weights import NeighborhoodWeights

__all__ = [
    "GstarModel",
    "VarModel",
    "fit_star_ols",
    "fit_gstar_penalized",
    "fit_var_ols",
    "predict_one_step",
    "predict_range",
    "gstar_to_var",
    "model_to_dict",
    "model_from_dict",
]

NONZERO_TOL = 1e-10


@dataclass(frozen=True)
class GstarModel:
    """Per-location coefficient vectors of a fitted GSTAR model.

    ``coefficients`` has shape ``(k, eta * p)``; row ``i`` is location ``i``'s
    coefficient vector in lag-major order.
    """

    coefficients: np.ndarray
    order: ModelOrder
    weights: NeighborhoodWeights
    stats: StandardizationStats | None = None
    penalty: PenaltySpec | None = None
    diagnostics: tuple[FitDiagnostics, ...] = field(default=(), compare=False, repr=False)
    fingerprint: str | None = None

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float)
        if coef.shape != (self.weights.k, self.order.n_coef):
            raise ValueError(
                f"coefficients shape {coef.shape} != (k={self.weights.k}, eta*p={self.order.n_coef})"
            )
        if not np.all(np.isfinite(coef)):
            raise ValueError("coefficients must be finite")
        if self.weights.eta < self.order.eta:
            raise ValueError("weights provide fewer levels than the model order needs")
        if self.weights.eta > self.order.eta:
            object.__setattr__(self, "weights", self.weights.truncate(self.order.eta))
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    @property
    def k(self) -> int:
        return self.weights.k

    @property
    def p(self) -> int:
        return self.order.p

    @property
    def locations(self) -> tuple[str, ...]:
        return self.weights.locations

    @property
    def n_params(self) -> int:
        return self.coefficients.size

    def nonzero_count(self, tol: float = NONZERO_TOL) -> int:
        return int(np.count_nonzero(np.abs(self.coefficients) > tol))

    def level_view(self) -> np.ndarray:
        """Coefficients reshaped to ``(k, p, eta)``."""
        return self.coefficients.reshape(self.k, self.order.p, self.order.eta)


@dataclass(frozen=True)
class VarModel:
    """``Y(t) = sum_j lags[j-1] @ Y(t-j)``; ``lags`` has shape ``(p, k, k)``."""

    lags: np.ndarray
    locations: tuple[str, ...]
    stats: StandardizationStats | None = None

    def __post_init__(self):
        lags = np.array(self.lags, dtype=float)
        if lags.ndim != 3 or lags.shape[1] != lags.shape[2] or lags.shape[1] != len(self.locations):
            raise ValueError("lags must have shape (p, k, k) with k = len(locations)")
        if not np.all(np.isfinite(lags)):
            raise ValueError("VAR coefficients must be finite")
        lags.setflags(write=False)
        object.__setattr__(self, "lags", lags)

    @property
    def k(self) -> int:
        return self.lags.shape[1]

    @property
    def p(self) -> int:
        return self.lags.shape[0]

    @property
    def n_params(self) -> int:
        return self.lags.size

    def nonzero_count(self, tol: float = NONZERO_TOL) -> int:
        return int(np.count_nonzero(np.abs(self.lags) > tol))


Model = Union[GstarModel, VarModel]


def _weights_for(W: NeighborhoodWeights, series: SpatioTemporalSeries, order: ModelOrder):
    if W.locations != series.locations:
        raise ValueError("weights and series disagree on location order")
    return W.truncate(order.eta) if W.eta > order.eta else W


def fit_star_ols(series, W, order, fit_range=None, stats=None, fingerprint=None) -> GstarModel:
    """Unpenalized least squares per location (minimum-norm when singular)."""
    W = _weights_for(W, series, order)
    Z, Y = design_tensor(series.values, W, order, fit_range)
    coef = np.stack([np.linalg.lstsq(Z[i], Y[i], rcond=None)[0] for i in range(series.k)])
    return GstarModel(coef, order, W, stats, PenaltySpec("none", 0.0, order), fingerprint=fingerprint)


def fit_gstar_penalized(
    series,
    W,
    order,
    spec: PenaltySpec,
    config: SolverConfig | None = None,
    fit_range=None,
    stats=None,
    fingerprint=None,
) -> GstarModel:
    """Penalized fit of every location by FISTA."""
    if spec.order != order:
        spec = PenaltySpec(spec.kind, spec.lam, order)
    W = _weights_for(W, series, order)
    Z, Y = design_tensor(series.values, W, order, fit_range)
    coef, diags = fista_batch(Z, Y, spec.kind, order, spec.lam, config)
    return GstarModel(coef, order, W, stats, spec, tuple(diags), fingerprint)


def fit_var_ols(series, p: int, fit_range=None, stats=None) -> VarModel:
    """Equation-by-equation least squares on all ``k * p`` lagged values.

    When ``k * p`` exceeds the number of usable rows the system is
    underdetermined and the minimum-norm solution is returned, which
    interpolates the training data exactly.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    start, stop = _check_range(fit_range, series.T)
    n = stop - start
    if n <= p:
        raise WindowTooShortError(f"window of length {n} cannot support lag order {p}")
    window = series.values[:, start:stop]
    k = series.k
    X = np.concatenate([window[:, p - j : n - j] for j in range(1, p + 1)], axis=0).T
    target = window[:, p:].T
    B = np.linalg.lstsq(X, target, rcond=None)[0]  # (k*p, k)
    lags = np.stack([B[(j - 1) * k : j * k].T for j in range(1, p + 1)])
    return VarModel(lags, series.locations, stats)


def predict_range(model: Model, values, start: int, stop: int) -> np.ndarray:
    """One-step predictions for times ``start .. stop-1`` from actual lags.

    Column ``c`` of the result predicts ``values[:, start + c]`` from
    ``values[:, start + c - j]``, ``j = 1..p``; the target columns themselves
    are never read.
    """
    values = np.asarray(values, dtype=float)
    p = model.p
    if start < p:
        raise ValueError(f"need {p} observations before the first predicted time, got {start}")
    if stop <= start:
        raise ValueError("empty prediction range")
    past = values[:, start - p : stop - 1]
    n = stop - start
    out = np.zeros((model.k, n))
    if isinstance(model, VarModel):
        for j in range(1, p + 1):
            out += mix(model.lags[j - 1], past[:, p - j : p - j + n])
        return out
    eta = model.order.eta
    spatial = mix(model.weights.mats, past)
    for j in range(1, p + 1):
        for level in range(eta):
            phi = model.coefficients[:, (j - 1) * eta + level]
            out += phi[:, None] * spatial[level][:, p - j : p - j + n]
    return out


def predict_one_step(model: Model, history) -> np.ndarray:
    """Predict the time step following ``history``.

    ``history`` is a ``k x n`` array (``n >= p``) in chronological order; its
    last column is ``Y(t-1)``.
    """
    history = np.asarray(history, dtype=float)
    if history.ndim != 2 or history.shape[0] != model.k:
        raise ValueError(f"history must be k x n with k = {model.k}")
    n = history.shape[1]
    if n < model.p:
        raise ValueError(f"insufficient history: need {model.p} observations, got {n}")
    padded = np.concatenate([history[:, n - model.p :], np.zeros((model.k, 1))], axis=1)
    return predict_range(model, padded, model.p, model.p + 1)[:, 0]


def gstar_to_var(model: GstarModel) -> VarModel:
    """Unconstrained VAR with the same one-step predictions."""
    p, eta = model.order.p, model.order.eta
    lags = np.zeros((p, model.k, model.k))
    for j in range(1, p + 1):
        for level in range(eta):
            phi = model.coefficients[:, (j - 1) * eta + level]
            lags[j - 1] += phi[:, None] * model.weights.mats[level]
    return VarModel(lags, model.locations, model.stats)


def _stats_dict(stats):
    if stats is None:
        return None
    return {"mean": stats.mean, "std": stats.std}


def _neighbor_lists(W: NeighborhoodWeights):
    return [[np.flatnonzero(row).tolist() for row in W.mats[level]] for level in range(1, W.eta)]


def _weights_from_lists(levels, locations):
    k = len(locations)
    mats = np.zeros((len(levels) + 1, k, k))
    mats[0] = np.eye(k)
    for level, rows in enumerate(levels, start=1):
        ind = np.zeros((k, k))
        for i, cols in enumerate(rows):
            ind[i, cols] = 1.0
        counts = ind.sum(axis=1, keepdims=True)
        mats[level] = np.divide(ind, counts, out=np.zeros_like(ind), where=counts > 0)
    return NeighborhoodWeights(mats, tuple(locations))


def model_to_dict(model: Model) -> dict:
    """Plain-data form of a model, sufficient to reload and predict exactly."""
    if isinstance(model, VarModel):
        return {
            "type": "var",
            "p": model.p,
            "locations": list(model.locations),
            "lags": model.lags,
            "stats": _stats_dict(model.stats),
        }
    pen = model.penalty
    neighbors = _neighbor_lists(model.weights)
    exact = np.array_equal(_weights_from_lists(neighbors, model.locations).mats, model.weights.mats)
    return {
        "type": "gstar",
        "order": {"p": model.order.p, "eta": model.order.eta},
        "locations": list(model.locations),
        "penalty": None if pen is None else {"kind": pen.kind, "lambda": pen.lam},
        "adjacency_fingerprint": model.fingerprint,
        "stats": _stats_dict(model.stats),
        "neighbors": neighbors if exact else None,
        "weights": None if exact else model.weights.mats,
        "coefficients": model.coefficients,
    }


def model_from_dict(data: dict) -> Model:
    stats = None
    if data.get("stats") is not None:
        stats = StandardizationStats(data["stats"]["mean"], data["stats"]["std"])
    locations = tuple(data["locations"])
    if data["type"] == "var":
        return VarModel(np.array(data["lags"], dtype=float).reshape(data["p"], len(locations), -1), locations, stats)
    if data["type"] != "gstar":
        raise ValueError(f"unknown model type {data['type']!r}")
    order = ModelOrder(data["order"]["p"], data["order"]["eta"])
    pen = data.get("penalty")
    spec = None if pen is None else PenaltySpec(pen["kind"], float(pen["lambda"]), order)
    if data.get("neighbors") is not None:
        W = _weights_from_lists(data["neighbors"], locations)
    else:
        W = NeighborhoodWeights(np.array(data["weights"], dtype=float), locations)
    coef = np.array(data["coefficients"], dtype=float).reshape(len(locations), order.n_coef)
    return GstarModel(coef, order, W, stats, spec, fingerprint=data.get("adjacency_fingerprint"))
