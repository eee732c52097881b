"""LASSO, hierarchical and double-hierarchical group penalties.

Coefficients are laid out lag-major: slot ``(j-1)*eta + l`` holds the
coefficient of lag ``j`` and neighborhood level ``l``. Both hierarchical
penalties are sums of Euclidean norms over *suffixes* of that layout:

* ``hglasso``: one group per lag ``j``, covering every slot of lag ``>= j``.
* ``dhglasso``: one group per slot ``(j, l)``, covering that slot and every
  later one.

Suffix groups are nested, so the proximal operator is exact when group
soft-thresholding is applied from the innermost (shortest) suffix outwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import ModelOrder

__all__ = [
    "KINDS",
    "PenaltySpec",
    "GroupChain",
    "group_chain",
    "penalty_value",
    "soft_threshold",
    "group_soft_threshold",
    "prox",
    "prox_batch",
    "support_is_prefix",
]

KINDS = ("none", "lasso", "hglasso", "dhglasso")


@dataclass(frozen=True)
class GroupChain:
    """Nested suffix groups over ``size`` slots, outermost first.

    Group ``g`` is ``range(starts[g], size)``.
    """

    starts: tuple[int, ...]
    size: int

    @property
    def groups(self) -> list[np.ndarray]:
        return [np.arange(s, self.size) for s in self.starts]


def group_chain(kind: str, order: ModelOrder) -> GroupChain | None:
    """Group chain of a hierarchical penalty (``None`` for lasso/none)."""
    m = order.n_coef
    if kind == "hglasso":
        return GroupChain(tuple(range(0, m, order.eta)), m)
    if kind == "dhglasso":
        return GroupChain(tuple(range(m)), m)
    if kind in ("lasso", "none"):
        return None
    raise ValueError(f"unknown penalty kind {kind!r}")


@dataclass(frozen=True)
class PenaltySpec:
    kind: str
    lam: float = 0.0
    order: ModelOrder = field(default_factory=ModelOrder)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"penalty kind must be one of {KINDS}, got {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    @property
    def chain(self) -> GroupChain | None:
        return group_chain(self.kind, self.order)

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.kind, float(lam), self.order)


def _check_length(phi, order):
    if phi.shape[-1] != order.n_coef:
        raise ValueError(f"coefficient length {phi.shape[-1]} != eta*p = {order.n_coef}")


def penalty_value(phi, spec: PenaltySpec) -> float:
    """Unscaled penalty (lambda is not applied)."""
    phi = np.asarray(phi, dtype=float)
    _check_length(phi, spec.order)
    if spec.kind == "none":
        return 0.0
    if spec.kind == "lasso":
        return float(np.abs(phi).sum())
    return float(sum(np.sqrt(np.sum(phi[s:] ** 2)) for s in spec.chain.starts))


def soft_threshold(v, tau):
    """Elementwise ``sign(v) * max(|v| - tau, 0)``; ``tau`` broadcasts."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def group_soft_threshold(v, group, tau):
    """Shrink the sub-vector ``v[..., group]`` towards zero by ``tau`` in norm.

    ``tau`` may be an array broadcasting against ``v.shape[:-1]``. Entries off
    the group are returned unchanged; a zero-norm group stays zero.
    """
    out = np.array(v, dtype=float)
    sub = out[..., group]
    if sub.shape[-1] == 1:
        # a one-element group is plain soft thresholding; use its exact form
        out[..., group] = soft_threshold(sub, np.asarray(tau, dtype=float)[..., None])
        return out
    norm = np.sqrt(np.sum(sub * sub, axis=-1))
    tau = np.asarray(tau, dtype=float)
    safe = np.where(norm > 0, norm, 1.0)
    factor = np.where(norm > tau, 1.0 - tau / safe, 0.0)
    out[..., group] = sub * factor[..., None]
    return out


def prox_batch(v, kind: str, order: ModelOrder, tau):
    """Proximal map of ``tau * Omega`` applied along the last axis of ``v``.

    ``tau`` broadcasts against ``v.shape[:-1]``, so a single call can serve a
    whole batch of locations and tuning parameters.
    """
    v = np.asarray(v, dtype=float)
    _check_length(v, order)
    tau = np.asarray(tau, dtype=float)
    if kind == "none":
        return v.copy()
    if kind == "lasso":
        return soft_threshold(v, tau[..., None])
    chain = group_chain(kind, order)
    out = v.copy()
    for start in reversed(chain.starts):
        out = group_soft_threshold(out, slice(start, None), tau)
    return out


def prox(v, spec: PenaltySpec, scale: float = 1.0):
    """``argmin_u 0.5 * ||v - u||^2 + scale * lam * Omega(u)``."""
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    return prox_batch(v, spec.kind, spec.order, scale * spec.lam)


def support_is_prefix(phi, kind: str, order: ModelOrder, threshold: float = 1e-8) -> bool:
    """Whether the nonzero pattern of ``phi`` is a prefix of the group chain.

    For ``dhglasso`` the chain runs over slots, so the nonzero slots must be
    ``0 .. s-1``. For ``hglasso`` it runs over lags: the lags carrying a
    nonzero coefficient must be ``1 .. s``.
    """
    phi = np.asarray(phi, dtype=float)
    nz = np.abs(phi) > threshold
    if kind == "hglasso":
        nz = nz.reshape(order.p, order.eta).any(axis=1)
    elif kind != "dhglasso":
        raise ValueError("prefix structure is only defined for hierarchical penalties")
    s = int(nz.sum())
    return bool(nz[:s].all())
