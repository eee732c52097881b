"""FISTA for ``0.5 * ||y - Z phi||^2 + lam * Omega(phi)``.

The iteration is

    phi_hat = phi[r-1] + (r-2)/(r+1) * (phi[r-1] - phi[r-2])
    phi[r]  = prox_{s lam Omega}(phi_hat - s * grad f(phi_hat))

with ``phi[0] = phi[-1] = init`` and step ``s = 1 / sigma_1(Z)**2`` unless an
explicit step is configured. :func:`fista_batch` runs many independent
problems in lock step; each problem's arithmetic is row-local, so a problem
gives bit-identical iterates whether it is solved alone or inside a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import NonConvergenceError
from .penalty import PenaltySpec, group_chain, prox_batch
from .series import ModelOrder, rowdot

__all__ = [
    "SolverConfig",
    "FitDiagnostics",
    "largest_singular_value",
    "fista",
    "fista_batch",
    "step_sizes",
    "objective",
]

_POWER_SEED = 0x5EED


@dataclass(frozen=True)
class SolverConfig:
    """FISTA controls.

    ``step=None`` derives the step from the spectral norm of ``Z`` as
    ``step_safety / sigma_1**2``; a float fixes it explicitly.
    """

    max_iter: int = 10000
    tol: float = 1e-8
    step: float | None = None
    step_safety: float = 1.0
    track_objective: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.step is not None and not self.step > 0:
            raise ValueError("explicit step must be positive")
        if not 0 < self.step_safety <= 1:
            raise ValueError("step_safety must lie in (0, 1]")


@dataclass
class FitDiagnostics:
    iterations: int
    objective: float
    converged: bool
    residual: float
    step: float
    step_fallback: bool = False
    trajectory: list[float] | None = field(default=None, repr=False)


def largest_singular_value(Z, max_iter: int = 20000, rtol: float = 1e-14) -> float:
    """Largest singular value of ``Z`` by power iteration on ``Z'Z``.

    The start vector comes from the package's portable generator with a fixed
    seed, so the result is deterministic. Raises
    :class:`~gstar.errors.NonConvergenceError` (carrying the last estimate)
    when the Rayleigh quotient has not settled after ``max_iter`` steps.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError("Z must be a matrix")
    G = _gram(Z[None])[0]
    if not np.any(G):
        raise ValueError("largest_singular_value needs a nonzero matrix")
    v = rng.normals(_POWER_SEED, G.shape[0])
    v /= math.sqrt(math.fsum(v * v))
    lam = 0.0
    for _ in range(max_iter):
        w = rowdot(G, v)
        lam_new = math.fsum(v * w)
        norm = math.sqrt(math.fsum(w * w))
        if norm == 0.0:
            # start vector in the null space; restart from a basis vector
            v = np.zeros_like(v)
            v[int(np.argmax(np.diag(G)))] = 1.0
            continue
        v = w / norm
        if abs(lam_new - lam) <= rtol * lam_new:
            return float(np.sqrt(lam_new))
        lam = lam_new
    raise NonConvergenceError("power iteration did not settle", estimate=float(np.sqrt(lam)))


def _penalty_rows(x, kind, order):
    if kind == "none":
        return np.zeros(x.shape[:-1])
    if kind == "lasso":
        return np.abs(x).sum(axis=-1)
    total = np.zeros(x.shape[:-1])
    for start in group_chain(kind, order).starts:
        total = total + np.sqrt(np.sum(x[..., start:] ** 2, axis=-1))
    return total


def _matvec(G, x):
    # row-local reduction keeps results independent of batch size
    return rowdot(G, x)


def _gram(Z, y=None):
    """``Z_q' Z_q`` (and ``Z_q' y_q``) for every problem, summed row by row."""
    N, n, m = Z.shape
    G = np.zeros((N, m, m))
    for t in range(n):
        G += Z[:, t, :, None] * Z[:, t, None, :]
    if y is None:
        return G
    b = np.sum(Z * y[:, :, None], axis=1)
    return G, b


def objective(Z, y, phi, spec: PenaltySpec) -> float:
    """``0.5 * ||y - Z phi||^2 + lam * Omega(phi)``."""
    resid = np.asarray(y) - np.asarray(Z) @ np.asarray(phi)
    pen = _penalty_rows(np.asarray(phi, dtype=float)[None, :], spec.kind, spec.order)[0]
    return float(0.5 * resid @ resid + spec.lam * pen)


def step_sizes(Z, config: SolverConfig):
    """Per-problem step sizes with fallback and zero-design flags."""
    n = Z.shape[0]
    steps = np.empty(n)
    fallback = np.zeros(n, dtype=bool)
    zero = np.zeros(n, dtype=bool)
    for q in range(n):
        if not np.any(Z[q]):
            zero[q] = True
            steps[q] = 1.0 if config.step is None else config.step
            continue
        if config.step is not None:
            steps[q] = config.step
            continue
        try:
            sigma = largest_singular_value(Z[q])
        except NonConvergenceError:
            # the Frobenius norm bounds sigma_1 from above, so the step stays safe
            sigma = float(np.linalg.norm(Z[q]))
            fallback[q] = True
        steps[q] = config.step_safety / sigma**2
    return steps, fallback, zero


def fista_batch(
    Z,
    y,
    kind: str,
    order: ModelOrder,
    lam,
    config: SolverConfig | None = None,
    init=None,
    steps=None,
):
    """Solve a stack of independent penalized least-squares problems.

    Parameters
    ----------
    Z : array, shape (N, n, m)
    y : array, shape (N, n)
    kind : str
        Penalty kind shared by every problem.
    order : ModelOrder
        Fixes the group chain; ``m`` must equal ``order.n_coef``.
    lam : float or array, shape (N,)
    config : SolverConfig, optional
    init : array, shape (N, m), optional
        Starting points; zeros by default.
    steps : array, shape (N,), optional
        Precomputed step sizes (skips the power iterations).

    Returns
    -------
    phi : array, shape (N, m)
    diagnostics : list of FitDiagnostics
    """
    config = config or SolverConfig()
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    N, _, m = Z.shape
    if m != order.n_coef:
        raise ValueError(f"design has {m} columns but eta*p = {order.n_coef}")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (N,)).copy()
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    x = np.zeros((N, m)) if init is None else np.array(init, dtype=float).reshape(N, m)
    x0 = x.copy()
    x_prev = x.copy()

    if steps is None:
        steps, fallback, zero = step_sizes(Z, config)
    else:
        steps = np.asarray(steps, dtype=float)
        fallback = np.zeros(N, dtype=bool)
        zero = ~np.any(Z.reshape(N, -1), axis=1)
    G, b = _gram(Z, y)
    tau = steps * lam

    iterations = np.zeros(N, dtype=np.int64)
    converged = np.zeros(N, dtype=bool)
    residual = np.full(N, np.inf)
    trajectories = [[] for _ in range(N)] if config.track_objective else None

    # a zero design leaves only the penalty: minimized at 0 (or anywhere when lam == 0)
    x[zero & (lam > 0)] = 0.0
    converged[zero] = True
    residual[zero] = 0.0

    active = np.flatnonzero(~zero)
    r = 1
    while active.size and r <= config.max_iter:
        xa, xpa = x[active], x_prev[active]
        Ga, ba, sa, ta = G[active], b[active], steps[active], tau[active]
        momentum = (r - 2) / (r + 1)
        point = xa + momentum * (xa - xpa)
        grad = _matvec(Ga, point) - ba
        xn = prox_batch(point - sa[:, None] * grad, kind, order, ta)

        change = np.max(np.abs(xn - xa), axis=1)
        scale = 1.0 + np.max(np.abs(xn), axis=1)
        x_prev[active] = xa
        x[active] = xn
        iterations[active] = r
        if trajectories is not None:
            vals = _objective_rows(Z[active], y[active], xn, kind, order, lam[active])
            for q, val in zip(active, vals):
                trajectories[q].append(float(val))

        cand = np.flatnonzero(change <= config.tol * scale)
        done = np.zeros(active.size, dtype=bool)
        if cand.size:
            xc = xn[cand]
            gc = _matvec(Ga[cand], xc) - ba[cand]
            fixed = prox_batch(xc - sa[cand, None] * gc, kind, order, ta[cand])
            res = np.max(np.abs(xc - fixed), axis=1)
            residual[active[cand]] = res
            ok = res <= config.tol * scale[cand]
            done[cand[ok]] = True
        converged[active[done]] = True
        active = active[~done]
        r += 1

    if active.size:
        xa = x[active]
        grad = _matvec(G[active], xa) - b[active]
        fixed = prox_batch(xa - steps[active, None] * grad, kind, order, tau[active])
        residual[active] = np.max(np.abs(xa - fixed), axis=1)

    obj = _objective_rows(Z, y, x, kind, order, lam)
    obj0 = _objective_rows(Z, y, x0, kind, order, lam)
    diags = []
    for q in range(N):
        diags.append(
            FitDiagnostics(
                iterations=int(iterations[q]),
                objective=float(obj[q]),
                converged=bool(converged[q]),
                residual=float(residual[q]),
                step=float(steps[q]),
                step_fallback=bool(fallback[q]),
                trajectory=None if trajectories is None else [float(obj0[q])] + trajectories[q],
            )
        )
    return x, diags


def _objective_rows(Z, y, x, kind, order, lam):
    resid = y - np.sum(Z * x[:, None, :], axis=-1)
    return 0.5 * np.sum(resid * resid, axis=-1) + lam * _penalty_rows(x, kind, order)


def fista(Z, y, spec: PenaltySpec, config: SolverConfig | None = None, init=None):
    """Solve one location's penalized problem.

    Returns ``(phi, FitDiagnostics)``. Failing to converge within
    ``config.max_iter`` is reported through ``diagnostics.converged`` rather
    than raised.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if Z.ndim != 2 or y.shape != (Z.shape[0],):
        raise ValueError("need Z of shape (n, m) and y of shape (n,)")
    init = None if init is None else np.asarray(init, dtype=float)[None, :]
    phi, diags = fista_batch(Z[None], y[None], spec.kind, spec.order, spec.lam, config, init)
    return phi[0], diags[0]
