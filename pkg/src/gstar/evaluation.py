"""Rolling-origin tuning, out-of-sample scoring and model comparison.

The series is split at ``0 < T1 < T2 < T`` (0-based, half-open): fit on
``[0, T1)``, choose lambda by one-step MSPE on ``[T1, T2)``, refit on
``[0, T2)`` with the chosen lambda and report one-step errors on ``[T2, T)``.
Predictions always use the actual lagged observations.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import AllZeroActualsError, WindowTooShortError
from .models import (
    GstarModel,
    VarModel,
    fit_gstar_penalized,
    fit_star_ols,
    fit_var_ols,
    predict_range,
)
from .penalty import PenaltySpec
from .series import ModelOrder, SpatioTemporalSeries, design_tensor, fmt_float, standardize as _standardize
from .solver import SolverConfig, fista_batch, step_sizes
from .weights import NeighborhoodWeights

__all__ = [
    "SplitSpec",
    "LambdaGrid",
    "CVResult",
    "ReportRow",
    "EvaluationReport",
    "InformationCriteria",
    "MODEL_NAMES",
    "mspe",
    "mrpe",
    "information_criteria",
    "lambda_max",
    "rolling_cv",
    "evaluate_final",
    "compare_models",
    "coefficient_rows",
    "write_coefficients_csv",
]

MODEL_NAMES = {
    "var": "VAR",
    "star": "STAR",
    "lasso": "LASSO",
    "hglasso": "HGLASSO",
    "dhglasso": "DHGLASSO",
}
PENALIZED = ("lasso", "hglasso", "dhglasso")


@dataclass(frozen=True)
class SplitSpec:
    T1: int
    T2: int
    T: int

    def __post_init__(self):
        if not 0 < self.T1 < self.T2 < self.T:
            raise ValueError(f"need 0 < T1 < T2 < T, got T1={self.T1}, T2={self.T2}, T={self.T}")

    @classmethod
    def default(cls, T: int, T1: int | None = None, T2: int | None = None) -> "SplitSpec":
        """Thirds: ``T1 = T // 3``, ``T2 = 2T // 3`` unless overridden."""
        return cls(T // 3 if T1 is None else T1, (2 * T) // 3 if T2 is None else T2, T)


@dataclass(frozen=True)
class LambdaGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("lambda grid is empty")
        if any(not v >= 0 for v in vals):
            raise ValueError("lambda values must be nonnegative")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("lambda grid must be strictly decreasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def log_spaced(cls, lam_max: float, n: int = 20, ratio: float = 1e-3) -> "LambdaGrid":
        if lam_max <= 0:
            return cls((0.0,))
        if n == 1:
            return cls((float(lam_max),))
        return cls(tuple(np.geomspace(lam_max, lam_max * ratio, n)))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


class InformationCriteria(NamedTuple):
    aic: float
    bic: float
    interpolating: bool


@dataclass
class CVResult:
    """Validation curve of one penalty kind."""

    selected_lambda: float
    lambdas: np.ndarray
    mspe: np.ndarray
    nonzero: np.ndarray

    def __iter__(self):
        # allows ``lam, curve = rolling_cv(...)``
        return iter((self.selected_lambda, self.mspe))


def mspe(actual, predicted) -> float:
    """Mean squared prediction error over every location and time."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise ValueError(f"shape mismatch {actual.shape} vs {predicted.shape}")
    if actual.size == 0:
        raise ValueError("no predictions to score")
    return float(np.mean((actual - predicted) ** 2))


def mrpe(actual, predicted, return_excluded: bool = False):
    """Mean absolute relative prediction error.

    Terms whose actual value is exactly zero are left out of both the sum
    and the count. With ``return_excluded=True`` the number of dropped terms
    is returned as well.
    """
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise ValueError(f"shape mismatch {actual.shape} vs {predicted.shape}")
    keep = actual != 0
    excluded = int(actual.size - np.count_nonzero(keep))
    if not np.any(keep):
        raise AllZeroActualsError("every actual value is zero; relative error undefined")
    value = float(np.mean(np.abs((actual[keep] - predicted[keep]) / actual[keep])))
    return (value, excluded) if return_excluded else value


def _residual_sum(model, values, fit_range):
    start, stop = fit_range
    p = model.p
    actual = values[:, start + p : stop]
    fitted = predict_range(model, values[:, start:stop], p, stop - start)
    return float(np.sum((actual - fitted) ** 2)), float(np.sum(actual**2)), actual.size


def information_criteria(model, series: SpatioTemporalSeries, fit_range) -> InformationCriteria:
    """Pooled Gaussian AIC/BIC of an in-sample fit.

    ``N = k * (n - p)`` residuals, ``df`` = number of coefficients with
    magnitude above 1e-10:

        AIC = N ln(RSS/N) + 2 df,   BIC = N ln(RSS/N) + ln(N) df

    A fit that interpolates the data (RSS numerically zero) yields ``-inf``
    for both and ``interpolating=True``.
    """
    rss, total, N = _residual_sum(model, series.values, fit_range)
    df = model.nonzero_count()
    if rss <= 1e-20 * max(total, 1e-300):
        return InformationCriteria(-np.inf, -np.inf, True)
    base = N * np.log(rss / N)
    return InformationCriteria(float(base + 2 * df), float(base + np.log(N) * df), False)


def lambda_max(series: SpatioTemporalSeries, W: NeighborhoodWeights, order: ModelOrder, fit_range) -> float:
    """``max_i ||Z_i' y_i||_inf``: the smallest lambda zeroing every lasso fit."""
    Z, Y = design_tensor(series.values, W, order, fit_range)
    return float(np.max(np.abs(np.sum(Z * Y[:, :, None], axis=1))))


def _prepare(series, window, mode):
    if mode is None:
        return series, None
    if mode == "train":
        return _standardize(series, window)
    raise ValueError(f"unknown standardization mode {mode!r}")


def rolling_cv(
    series: SpatioTemporalSeries,
    W: NeighborhoodWeights,
    order: ModelOrder,
    kind: str,
    grid: LambdaGrid | None = None,
    split: SplitSpec | None = None,
    config: SolverConfig | None = None,
    standardize: str | None = None,
) -> CVResult:
    """Choose lambda by one-step MSPE on the validation window.

    Every grid value is fitted on ``[0, T1)`` (all locations and lambdas in
    one batched FISTA run) and scored on ``[T1, T2)``. Ties go to the larger
    lambda. ``standardize="train"`` rescales the series with statistics of
    the training window first; ``None`` uses the series as given.
    """
    split = split or SplitSpec.default(series.T)
    if series.T <= 3 * order.p:
        raise WindowTooShortError(f"series of length {series.T} too short for lag order {order.p}")
    series, _ = _prepare(series, (0, split.T1), standardize)
    W = W.truncate(order.eta) if W.eta > order.eta else W
    if grid is None:
        grid = LambdaGrid.log_spaced(lambda_max(series, W, order, (0, split.T1)))
    lams = np.array(grid.values)
    Z, Y = design_tensor(series.values, W, order, (0, split.T1))
    k, L = series.k, lams.size
    Zb = np.broadcast_to(Z, (L,) + Z.shape).reshape(L * k, *Z.shape[1:])
    Yb = np.broadcast_to(Y, (L,) + Y.shape).reshape(L * k, Y.shape[1])
    # one spectral norm per location, shared by every lambda
    steps = np.tile(step_sizes(Z, config or SolverConfig())[0], L)
    coef, _ = fista_batch(Zb, Yb, kind, order, np.repeat(lams, k), config, steps=steps)
    coef = coef.reshape(L, k, -1)
    actual = series.values[:, split.T1 : split.T2]
    curve = np.empty(L)
    nonzero = np.empty(L, dtype=np.int64)
    for a in range(L):
        model = GstarModel(coef[a], order, W)
        curve[a] = mspe(actual, predict_range(model, series.values, split.T1, split.T2))
        nonzero[a] = model.nonzero_count()
    best = int(np.flatnonzero(curve == curve.min())[0])
    return CVResult(float(lams[best]), lams, curve, nonzero)


@dataclass
class ReportRow:
    model: str
    eta: int | None
    mspe: float
    mrpe: float
    mrpe_excluded: int
    aic: float
    bic: float
    ic_interpolating: bool
    selected_lambda: float | None
    nonzero: int
    n_params: int
    fit_seconds: float = field(default=0.0, compare=False)
    validation: dict | None = field(default=None, compare=False)


def evaluate_final(
    series: SpatioTemporalSeries,
    W: NeighborhoodWeights | None,
    order: ModelOrder,
    kind: str,
    lam: float | None = None,
    split: SplitSpec | None = None,
    config: SolverConfig | None = None,
    standardize: str | None = None,
    fingerprint: str | None = None,
):
    """Refit on ``[0, T2)`` and score one-step forecasts on ``[T2, T)``.

    ``kind`` is one of ``var``, ``star``, ``lasso``, ``hglasso``,
    ``dhglasso``. Returns ``(ReportRow, fitted_model)``.
    """
    split = split or SplitSpec.default(series.T)
    series, stats = _prepare(series, (0, split.T2), standardize)
    fit_range = (0, split.T2)
    t0 = time.perf_counter()
    if kind == "var":
        model = fit_var_ols(series, order.p, fit_range, stats=stats)
        eta = None
    elif kind == "star":
        model = fit_star_ols(series, W, order, fit_range, stats=stats, fingerprint=fingerprint)
        eta = order.eta
    elif kind in PENALIZED:
        spec = PenaltySpec(kind, float(lam or 0.0), order)
        model = fit_gstar_penalized(series, W, order, spec, config, fit_range, stats=stats, fingerprint=fingerprint)
        eta = order.eta
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    elapsed = time.perf_counter() - t0
    actual = series.values[:, split.T2 :]
    pred = predict_range(model, series.values, split.T2, split.T)
    rel, excluded = mrpe(actual, pred, return_excluded=True)
    ic = information_criteria(model, series, fit_range)
    row = ReportRow(
        model=MODEL_NAMES[kind],
        eta=eta,
        mspe=mspe(actual, pred),
        mrpe=rel,
        mrpe_excluded=excluded,
        aic=ic.aic,
        bic=ic.bic,
        ic_interpolating=ic.interpolating,
        selected_lambda=float(lam) if kind in PENALIZED else None,
        nonzero=model.nonzero_count(),
        n_params=model.n_params,
        fit_seconds=elapsed,
    )
    return row, model


@dataclass
class EvaluationReport:
    """Rows of the model comparison, in a fixed order."""

    rows: list[ReportRow]

    def row(self, model: str, eta: int | None = None) -> ReportRow:
        for r in self.rows:
            if r.model == model and (eta is None or r.eta == eta):
                return r
        raise KeyError((model, eta))

    def to_dict(self, include_timing: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not include_timing:
                d.pop("fit_seconds")
            rows.append(d)
        return {"columns": ["Model", "MSPE", "MRPE", "AIC", "BIC"], "rows": rows}

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationReport":
        rows = []
        for d in data["rows"]:
            d = dict(d)
            for key in ("aic", "bic"):
                if d[key] is None:
                    d[key] = -np.inf
            rows.append(ReportRow(**d))
        return cls(rows)

    def to_text(self) -> str:
        def num(x):
            if x is None:
                return "-"
            if np.isinf(x):
                return "-inf"
            return f"{x:.4f}"

        header = ["Model", "eta", "MSPE", "MRPE", "AIC", "BIC", "lambda", "nonzero"]
        body = []
        for r in self.rows:
            lam = "-" if r.selected_lambda is None else f"{r.selected_lambda:.4g}"
            body.append([
                r.model,
                "-" if r.eta is None else str(r.eta),
                num(r.mspe),
                num(r.mrpe),
                num(r.aic),
                num(r.bic),
                lam,
                f"{r.nonzero}/{r.n_params}",
            ])
        widths = [max(len(x) for x in col) for col in zip(header, *body)]
        lines = ["  ".join(h.ljust(w) if c == 0 else h.rjust(w) for c, (h, w) in enumerate(zip(line, widths)))
                 for line in [header, *body]]
        return "\n".join(line.rstrip() for line in lines) + "\n"


def compare_models(
    series: SpatioTemporalSeries,
    W: NeighborhoodWeights,
    etas: Sequence[int],
    p: int = 1,
    kinds: Sequence[str] = ("star", "lasso", "hglasso", "dhglasso"),
    split: SplitSpec | None = None,
    grid: LambdaGrid | dict | None = None,
    config: SolverConfig | None = None,
    standardize: str | None = None,
    fingerprint: str | None = None,
    include_var: bool = True,
):
    """VAR plus every requested GSTAR family at every ``eta``.

    ``grid`` is either a fixed :class:`LambdaGrid` shared by all fits, or a
    dict ``{"n": 20, "ratio": 1e-3}`` describing the default log-spaced grid
    built per fit from its training-window ``lambda_max``.

    Returns ``(EvaluationReport, models)`` with ``models`` keyed by
    ``(kind, eta)`` (``("var", None)`` for the VAR row).
    """
    split = split or SplitSpec.default(series.T)
    rows, models = [], {}
    if include_var:
        row, model = evaluate_final(series, None, ModelOrder(p, 1), "var", None, split, config, standardize)
        rows.append(row)
        models[("var", None)] = model
    for eta in etas:
        order = ModelOrder(p, eta)
        for kind in kinds:
            if kind == "star":
                row, model = evaluate_final(series, W, order, "star", None, split, config, standardize, fingerprint)
            elif kind in PENALIZED:
                t0 = time.perf_counter()
                kind_grid = grid if isinstance(grid, LambdaGrid) else None
                if kind_grid is None:
                    train, _ = _prepare(series, (0, split.T1), standardize)
                    params = grid or {}
                    kind_grid = LambdaGrid.log_spaced(
                        lambda_max(train, W.truncate(eta), order, (0, split.T1)),
                        int(params.get("n", 20)),
                        float(params.get("ratio", 1e-3)),
                    )
                cv = rolling_cv(series, W, order, kind, kind_grid, split, config, standardize)
                cv_seconds = time.perf_counter() - t0
                row, model = evaluate_final(
                    series, W, order, kind, cv.selected_lambda, split, config, standardize, fingerprint
                )
                row.fit_seconds += cv_seconds
                row.validation = {"lambdas": cv.lambdas.tolist(), "mspe": cv.mspe.tolist()}
            else:
                raise ValueError(f"unknown model kind {kind!r}")
            rows.append(row)
            models[(kind, eta)] = model
    return EvaluationReport(rows), models


def coefficient_rows(model: GstarModel, name: str):
    """Long-format ``(model, eta, location, lag, level, coefficient, magnitude)`` rows."""
    out = []
    view = model.level_view()
    for i, loc in enumerate(model.locations):
        for j in range(model.order.p):
            for level in range(model.order.eta):
                c = float(view[i, j, level])
                out.append((name, model.order.eta, loc, j + 1, level, c, abs(c)))
    return out


def write_coefficients_csv(models: dict, path: str | Path) -> None:
    """Per-level coefficient magnitudes of every GSTAR-type model."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "eta", "location", "lag", "level", "coefficient", "magnitude"])
        for (kind, eta), model in models.items():
            if not isinstance(model, GstarModel):
                continue
            for row in coefficient_rows(model, MODEL_NAMES[kind]):
                writer.writerow([*row[:5], fmt_float(row[5]), fmt_float(row[6])])
