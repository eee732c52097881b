"""Synthetic GSTAR data, stationarity checks, random sparse test models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import FailedToStabilizeError, UnstableModelError
from .models import GstarModel, VarModel, gstar_to_var
from .series import ModelOrder, SpatioTemporalSeries, rowdot
from .weights import AdjacencyGraph, build_weights

__all__ = [
    "SimulationSpec",
    "SparsityPlan",
    "companion_matrix",
    "check_stationarity",
    "stationary_covariance",
    "autocovariance",
    "signal_to_noise",
    "scale_coefficients",
    "scale_to_snr",
    "simulate",
    "random_sparse_model",
]

GELFAND_STEPS = 256
GELFAND_STARTS = 8
STABILITY_MARGIN = 1e-3
_GELFAND_SEED = 0xC0FFEE


@dataclass(frozen=True)
class SimulationSpec:
    """Forward simulation settings.

    ``init`` optionally gives the ``p`` pre-sample values as a ``k x p`` array
    in chronological order; zeros otherwise.
    """

    model: GstarModel
    sigma: float = 1.0
    T: int = 96
    burn_in: int = 200
    seed: int = 0
    init: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma < 0 or self.T < 1 or self.burn_in < 0:
            raise ValueError("need sigma >= 0, T >= 1, burn_in >= 0")


@dataclass(frozen=True)
class SparsityPlan:
    """How :func:`random_sparse_model` places nonzero coefficients.

    ``support`` (boolean ``k x eta*p``) is used verbatim when given; otherwise
    each slot is active with probability ``density``. With ``prefix=True``
    each location's active slots are moved to the front of the chain, which
    is the sparsity shape the hierarchical penalties favour.
    """

    density: float = 0.5
    magnitude: tuple[float, float] = (0.1, 0.5)
    prefix: bool = False
    support: np.ndarray | None = None


def companion_matrix(model) -> np.ndarray:
    """``kp x kp`` companion matrix of a VAR (GSTAR models are expanded first)."""
    var = gstar_to_var(model) if isinstance(model, GstarModel) else model
    p, k = var.p, var.k
    M = np.zeros((k * p, k * p))
    M[:k] = np.concatenate(list(var.lags), axis=1)
    if p > 1:
        M[k:, : k * (p - 1)] = np.eye(k * (p - 1))
    return M


def _gelfand_radius(M: np.ndarray) -> float:
    # all start vectors advance together; norms stay per-row exact sums
    n = M.shape[0]
    V = np.stack([rng.normals(_GELFAND_SEED + s, n) for s in range(GELFAND_STARTS)])
    V /= np.array([math.sqrt(math.fsum(row * row)) for row in V])[:, None]
    log_growth = np.zeros(GELFAND_STARTS)
    for _ in range(GELFAND_STEPS):
        V = rowdot(M, V)
        norms = np.array([math.sqrt(math.fsum(row * row)) for row in V])
        dead = norms == 0.0
        log_growth[dead] = -np.inf
        V[dead] = 0.0
        log_growth[~dead] += np.log(norms[~dead])
        V[~dead] /= norms[~dead, None]
    return float(max(0.0, np.max(np.exp(log_growth / GELFAND_STEPS))))


def check_stationarity(model) -> tuple[bool, float]:
    """Spectral-radius test on the companion matrix.

    The radius is estimated as ``||M^m v||^(1/m)`` with ``m = 256``, maximized
    over 8 fixed start vectors. Returns ``(stable, radius_estimate)`` where
    stable means ``radius < 1 - 1e-3``.
    """
    radius = _gelfand_radius(companion_matrix(model))
    return radius < 1.0 - STABILITY_MARGIN, radius


def stationary_covariance(model, sigma: float = 1.0) -> np.ndarray:
    """Covariance of the stacked state ``(Y(t), ..., Y(t-p+1))``.

    Solves ``S = M S M' + Q`` by the doubling recursion; the model must be
    stable.
    """
    M = companion_matrix(model)
    k = model.k
    n = M.shape[0]
    S = np.zeros((n, n))
    S[:k, :k] = sigma**2 * np.eye(k)
    A = M.copy()
    for _ in range(100):
        S = S + A @ S @ A.T
        A = A @ A
        if not np.any(np.abs(A) > 1e-18):
            break
        if not np.all(np.isfinite(A)):
            raise UnstableModelError("covariance recursion diverged; model is not stable")
    return S


def autocovariance(model, sigma: float = 1.0, lag: int = 0) -> np.ndarray:
    """``E[Y(t + lag) Y(t)']`` of the stationary process."""
    S = stationary_covariance(model, sigma)
    M = companion_matrix(model)
    k = model.k
    return (np.linalg.matrix_power(M, lag) @ S)[:k, :k]


def signal_to_noise(model, sigma: float = 1.0) -> float:
    """Average over locations of Var(predictable part) / Var(noise)."""
    gamma0 = autocovariance(model, sigma, 0)
    return float(np.mean((np.diag(gamma0) - sigma**2) / sigma**2))


def scale_coefficients(model: GstarModel, c: float) -> GstarModel:
    return GstarModel(c * model.coefficients, model.order, model.weights, model.stats, model.penalty,
                      fingerprint=model.fingerprint)


def scale_to_snr(model: GstarModel, target: float = 1.0, sigma: float = 1.0, steps: int = 60) -> GstarModel:
    """Rescale all coefficients by one factor so the signal-to-noise ratio hits ``target``.

    For a linear model the ratio does not depend on ``sigma``; only the
    coefficient scale moves it.
    """
    if not np.any(model.coefficients):
        raise FailedToStabilizeError("a zero model has no signal to scale")
    # the radius scales linearly with the coefficients, so one estimate
    # decides stability for every candidate factor
    base = _gelfand_radius(companion_matrix(model))

    def admissible(c):
        return c * base < 1.0 - STABILITY_MARGIN and signal_to_noise(scale_coefficients(model, c), sigma) < target

    hi = 1.0
    for _ in range(steps):
        if not admissible(hi):
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return scale_coefficients(model, lo)


def simulate(spec: SimulationSpec) -> SpatioTemporalSeries:
    """Run the GSTAR recursion forward with Gaussian noise.

    Noise for time step ``t`` (burn-in included) and location ``i`` is normal
    number ``t * k + i`` of the portable stream seeded with ``spec.seed``.
    The first ``burn_in`` steps are discarded.
    """
    model = spec.model
    if spec.sigma > 0:
        stable, radius = check_stationarity(model)
        if not stable:
            raise UnstableModelError(f"spectral radius estimate {radius:.6g} >= 1")
    var = gstar_to_var(model)
    k, p = model.k, model.p
    total = spec.burn_in + spec.T
    eps = spec.sigma * rng.normals(spec.seed, total * k).reshape(total, k)
    Y = np.zeros((p + total, k))
    if spec.init is not None:
        Y[:p] = np.asarray(spec.init, dtype=float).reshape(k, p).T
    for t in range(total):
        acc = eps[t].copy()
        for j in range(1, p + 1):
            acc += rowdot(var.lags[j - 1], Y[p + t - j])
        Y[p + t] = acc
    values = Y[p + spec.burn_in :].T
    return SpatioTemporalSeries(model.locations, np.arange(spec.T), values)


def _bisect_scale(coef, order, W, steps):
    # the radius is homogeneous of degree one in the coefficients
    base = check_stationarity(GstarModel(coef, order, W))[1]

    def radius(c):
        return c * base

    lo, hi = 0.0, 1.0
    r = radius(hi)
    if 0.5 <= r <= 0.9:
        return 1.0
    n = 0
    while r < 0.5:
        lo, hi = hi, 2.0 * hi
        r = radius(hi)
        n += 1
        if n > steps:
            raise FailedToStabilizeError("coefficients cannot reach spectral radius 0.5")
    if 0.5 <= r <= 0.9:
        return hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        r = radius(mid)
        if 0.5 <= r <= 0.9:
            return mid
        if r < 0.5:
            lo = mid
        else:
            hi = mid
    raise FailedToStabilizeError(f"no scale put the spectral radius in [0.5, 0.9] after {steps} steps")


def random_sparse_model(
    graph: AdjacencyGraph,
    order: ModelOrder,
    plan: SparsityPlan = SparsityPlan(),
    seed: int = 0,
    steps: int = 60,
) -> GstarModel:
    """Random stable GSTAR model on ``graph``.

    Active coefficients get magnitudes uniform in ``plan.magnitude`` and
    random signs; the whole vector is then rescaled by bisection until the
    spectral radius estimate lies in ``[0.5, 0.9]``. Deterministic per seed.
    """
    W = build_weights(graph, order.eta)
    k, m = graph.k, order.n_coef
    u = rng.uniforms(seed, 3 * k * m).reshape(3, k, m)
    if plan.support is not None:
        support = np.asarray(plan.support, dtype=bool).reshape(k, m)
    else:
        support = u[0] < plan.density
        if plan.prefix:
            lengths = support.sum(axis=1)
            support = np.arange(m)[None, :] < lengths[:, None]
    lo, hi = plan.magnitude
    coef = np.where(support, (lo + (hi - lo) * u[1]) * np.where(u[2] < 0.5, -1.0, 1.0), 0.0)
    fingerprint = graph.fingerprint()
    if not np.any(coef):
        return GstarModel(coef, order, W, fingerprint=fingerprint)
    c = _bisect_scale(coef, order, W, steps)
    return GstarModel(c * coef, order, W, fingerprint=fingerprint)
