"""Command-line driver.

Subcommands::

    gstar aggregate --trips trips.csv --out series.csv [--interval 15]
    gstar simulate  --config cfg.yaml --seed 0 --out DIR
    gstar fit       --config cfg.yaml --seed 0 --out DIR
    gstar evaluate  --config cfg.yaml --seed 0 --out DIR
    gstar report    --out DIR

The config is a YAML (or JSON) mapping; ``--set section.key=value`` overrides
single entries. Failures exit nonzero after printing one line of the form
``error <ErrorClass>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from . import __version__, jsonio
from .errors import ConfigError, EmptyInputError, GstarError, UnparseableRecordError
from .evaluation import (
    MODEL_NAMES,
    EvaluationReport,
    LambdaGrid,
    SplitSpec,
    compare_models,
    lambda_max,
    rolling_cv,
    write_coefficients_csv,
)
from .models import fit_gstar_penalized, fit_star_ols, fit_var_ols, model_to_dict
from .penalty import PenaltySpec
from .series import (
    ModelOrder,
    SpatioTemporalSeries,
    filter_active_locations,
    read_series_csv,
    standardize,
    write_series_csv,
)
from .simulate import SimulationSpec, SparsityPlan, random_sparse_model, scale_to_snr, simulate
from .solver import SolverConfig
from .weights import build_weights, grid_graph, read_adjacency, write_adjacency

log = logging.getLogger("gstar")

__all__ = [
    "TripRecord",
    "AggregationResult",
    "PipelineConfig",
    "aggregate_trips",
    "read_trips",
    "run_pipeline",
    "main",
]

DEFAULTS = {
    "data": {
        "series": None,
        "trips": None,
        "adjacency": None,
        "interval_minutes": 15,
        "start": None,
        "end": None,
        "min_nonzero": None,
    },
    "model": {
        "p": 1,
        "etas": [1, 2, 3, 4, 5, 6],
        "kinds": ["star", "lasso", "hglasso", "dhglasso"],
        "standardize": "full",
        "lambda": None,
    },
    "grid": {"n": 20, "ratio": 1e-3, "values": None},
    "split": {"T1": None, "T2": None},
    "solver": {"max_iter": 10000, "tol": 1e-8, "step_safety": 1.0},
    "simulate": {
        "rows": 13,
        "cols": 3,
        "p": 1,
        "eta": 2,
        "T": 96,
        "sigma": 1.0,
        "burn_in": 200,
        "density": 0.7,
        "magnitude": [0.2, 0.6],
        "prefix": True,
        "snr": 1.0,
    },
}


# -- trip aggregation -------------------------------------------------------


@dataclass(frozen=True)
class TripRecord:
    pickup: datetime
    zone: str


@dataclass
class AggregationResult:
    series: SpatioTemporalSeries
    parsed: int
    out_of_range: int
    errors: list[UnparseableRecordError] = field(default_factory=list)


def read_trips(path: str | Path) -> Iterable[tuple[int, str, str]]:
    """Yield ``(line_number, timestamp_text, zone_text)`` from a trips CSV.

    The file has a header row; the first column is the pickup timestamp and
    the second the pickup zone id. Extra columns are ignored.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            yield lineno, row[0] if row else "", row[1] if len(row) > 1 else ""


def _parse_record(lineno, stamp, zone):
    zone = zone.strip()
    if not zone:
        raise UnparseableRecordError(lineno, "empty zone id")
    try:
        when = datetime.fromisoformat(stamp.strip())
    except ValueError:
        raise UnparseableRecordError(lineno, f"bad timestamp {stamp!r}") from None
    return TripRecord(when.replace(tzinfo=None), zone)


def aggregate_trips(
    rows: Iterable[tuple[int, str, str]],
    interval_minutes: int = 15,
    start: datetime | None = None,
    end: datetime | None = None,
    extra_zones: Sequence[str] = (),
) -> AggregationResult:
    """Count pickups per zone in half-open time bins ``[b, b + interval)``.

    Without an explicit range the bins run from midnight of the first pickup
    day to midnight after the last one. Zones (the union of trip zones and
    ``extra_zones``) are sorted lexicographically; empty cells are zero.
    Unparseable rows are logged and skipped.
    """
    if interval_minutes <= 0 or (24 * 60) % interval_minutes:
        raise ConfigError(f"interval of {interval_minutes} minutes does not divide a day")
    records, errors = [], []
    for lineno, stamp, zone in rows:
        try:
            records.append(_parse_record(lineno, stamp, zone))
        except UnparseableRecordError as exc:
            log.warning("skipping %s", exc)
            errors.append(exc)
    if errors:
        log.warning("%d unparseable trip records skipped", len(errors))
    if not records:
        raise EmptyInputError("no parseable trip records")
    step = timedelta(minutes=interval_minutes)
    if start is None:
        first = min(r.pickup for r in records)
        start = datetime(first.year, first.month, first.day)
    if end is None:
        last = max(r.pickup for r in records)
        end = datetime(last.year, last.month, last.day) + timedelta(days=1)
    n_bins = math.ceil((end - start) / step)
    if n_bins <= 0:
        raise ConfigError("empty aggregation range")
    zones = sorted(set(r.zone for r in records) | set(extra_zones))
    zidx = {z: i for i, z in enumerate(zones)}
    counts = np.zeros((len(zones), n_bins))
    outside = 0
    for r in records:
        b = (r.pickup - start) // step
        if 0 <= b < n_bins:
            counts[zidx[r.zone], b] += 1
        else:
            outside += 1
    times = np.array([start + b * step for b in range(n_bins)], dtype="datetime64[s]")
    series = SpatioTemporalSeries(tuple(zones), times, counts)
    return AggregationResult(series, len(records) - outside, outside, errors)


# -- configuration ----------------------------------------------------------


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in (update or {}).items():
        if key not in out:
            raise ConfigError(f"unknown config key {path}{key}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path}{key} must be a mapping")
            out[key] = _merge(out[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def _apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config section in {key!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = yaml.safe_load(raw)


@dataclass
class PipelineConfig:
    """Resolved run configuration (paths already made absolute)."""

    raw: dict
    seed: int
    out: Path
    base_dir: Path

    @classmethod
    def load(cls, path, seed: int, out, overrides: Sequence[str] = ()) -> "PipelineConfig":
        user = {}
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file {path} does not exist")
            user = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
            base_dir = path.resolve().parent
        cfg = _merge(DEFAULTS, user)
        for assignment in overrides:
            _apply_override(cfg, assignment)
        return cls(cfg, int(seed), Path(out), base_dir)

    def path(self, key: str) -> Path | None:
        value = self.raw["data"][key]
        if value is None:
            return None
        p = Path(value)
        p = p if p.is_absolute() else self.base_dir / p
        if not p.exists():
            raise ConfigError(f"data.{key} file {p} does not exist")
        return p

    @property
    def solver(self) -> SolverConfig:
        s = self.raw["solver"]
        return SolverConfig(int(s["max_iter"]), float(s["tol"]), None, float(s["step_safety"]))

    @property
    def etas(self) -> list[int]:
        etas = [int(e) for e in self.raw["model"]["etas"]]
        if not etas:
            raise ConfigError("model.etas must be nonempty")
        return etas

    @property
    def kinds(self) -> list[str]:
        kinds = [str(k).lower() for k in self.raw["model"]["kinds"]]
        for k in kinds:
            if k not in ("star", "lasso", "hglasso", "dhglasso"):
                raise ConfigError(f"unknown model kind {k!r}")
        return kinds

    def grid(self):
        g = self.raw["grid"]
        if g["values"] is not None:
            return LambdaGrid(tuple(sorted((float(v) for v in g["values"]), reverse=True)))
        return {"n": int(g["n"]), "ratio": float(g["ratio"])}

    def split(self, T: int) -> SplitSpec:
        s = self.raw["split"]
        return SplitSpec.default(T, s["T1"], s["T2"])


def _load_data(cfg: PipelineConfig):
    """Series and graph restricted to modelled locations."""
    adj_path = cfg.path("adjacency")
    if adj_path is None:
        raise ConfigError("data.adjacency is required")
    graph = read_adjacency(adj_path)
    d = cfg.raw["data"]
    series_path, trips_path = cfg.path("series"), cfg.path("trips")
    if (series_path is None) == (trips_path is None):
        raise ConfigError("exactly one of data.series and data.trips must be given")
    if series_path is not None:
        series = read_series_csv(series_path)
    else:
        start = None if d["start"] is None else datetime.fromisoformat(str(d["start"]))
        end = None if d["end"] is None else datetime.fromisoformat(str(d["end"]))
        result = aggregate_trips(read_trips(trips_path), int(d["interval_minutes"]), start, end, graph.locations)
        series = result.series
    known = set(graph.locations)
    unknown = [loc for loc in series.locations if loc not in known]
    if unknown:
        log.warning("dropping %d locations missing from the adjacency file: %s", len(unknown), unknown)
        series = series.select([loc for loc in series.locations if loc in known])
    min_nonzero = d["min_nonzero"]
    if min_nonzero is None:
        min_nonzero = math.ceil(0.1 * series.T)
    series = filter_active_locations(series, int(min_nonzero))
    return series, graph


def _scaled(cfg, series):
    mode = cfg.raw["model"]["standardize"]
    if mode == "full":
        scaled, stats = standardize(series)
        return scaled, None, stats
    if mode == "train":
        return series, "train", None
    raise ConfigError(f"model.standardize must be 'full' or 'train', got {mode!r}")


def _model_filename(kind: str, eta) -> str:
    return "var.json" if kind == "var" else f"{kind}_eta{eta}.json"


def _attach_stats(model, stats):
    if stats is None or model.stats is not None:
        return model
    import dataclasses

    return dataclasses.replace(model, stats=stats)


def run_pipeline(cfg: PipelineConfig) -> int:
    """Fit and evaluate every model family and write the run artifacts.

    Writes ``report.txt``, ``report.json``, ``models/*.json``,
    ``coefficients.csv`` and ``manifest.json`` into ``cfg.out``. Everything
    except the manifest (which records wall-clock times) is byte-identical
    across runs with the same inputs.
    """
    t_start = time.perf_counter()
    series, graph = _load_data(cfg)
    scaled, mode, stats = _scaled(cfg, series)
    etas = cfg.etas
    W = build_weights(graph, max(etas), keep=series.locations)
    split = cfg.split(series.T)
    report, models = compare_models(
        scaled,
        W,
        etas,
        p=int(cfg.raw["model"]["p"]),
        kinds=cfg.kinds,
        split=split,
        grid=cfg.grid(),
        config=cfg.solver,
        standardize=mode,
        fingerprint=graph.fingerprint(),
    )
    out = cfg.out
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    jsonio.dump(report.to_dict(), out / "report.json")
    for (kind, eta), model in models.items():
        jsonio.dump(model_to_dict(_attach_stats(model, stats)), out / "models" / _model_filename(kind, eta))
    write_coefficients_csv(models, out / "coefficients.csv")
    manifest = {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": cfg.seed,
        "config": cfg.raw,
        "locations": list(series.locations),
        "T": series.T,
        "split": {"T1": split.T1, "T2": split.T2, "T": split.T},
        "adjacency_fingerprint": graph.fingerprint(),
        "wall_seconds": {
            "total": time.perf_counter() - t_start,
            "rows": [
                {"model": r.model, "eta": r.eta, "seconds": r.fit_seconds} for r in report.rows
            ],
        },
    }
    jsonio.dump(manifest, out / "manifest.json")
    return 0


def run_fit(cfg: PipelineConfig) -> int:
    """Fit each configured (kind, eta) on the whole series and save the models.

    Penalized fits use ``model.lambda`` when set, otherwise the lambda chosen
    by the rolling validation scheme.
    """
    series, graph = _load_data(cfg)
    scaled, mode, stats = _scaled(cfg, series)
    if mode == "train":
        scaled, stats = standardize(series)
    p = int(cfg.raw["model"]["p"])
    W = build_weights(graph, max(cfg.etas), keep=series.locations)
    split = cfg.split(series.T)
    fixed = cfg.raw["model"]["lambda"]
    out = cfg.out
    (out / "models").mkdir(parents=True, exist_ok=True)
    models = {("var", None): fit_var_ols(scaled, p, stats=stats)}
    for eta in cfg.etas:
        order = ModelOrder(p, eta)
        for kind in cfg.kinds:
            if kind == "star":
                models[(kind, eta)] = fit_star_ols(scaled, W, order, stats=stats, fingerprint=graph.fingerprint())
                continue
            if fixed is not None:
                lam = float(fixed)
            else:
                grid = cfg.grid()
                if not isinstance(grid, LambdaGrid):
                    lmax = lambda_max(scaled, W.truncate(eta), order, (0, split.T1))
                    grid = LambdaGrid.log_spaced(lmax, grid["n"], grid["ratio"])
                lam = rolling_cv(scaled, W, order, kind, grid, split, cfg.solver).selected_lambda
            models[(kind, eta)] = fit_gstar_penalized(
                scaled, W, order, PenaltySpec(kind, lam, order), cfg.solver,
                stats=stats, fingerprint=graph.fingerprint(),
            )
    for (kind, eta), model in models.items():
        jsonio.dump(model_to_dict(model), out / "models" / _model_filename(kind, eta))
    write_coefficients_csv(models, out / "coefficients.csv")
    return 0


def run_simulate(cfg: PipelineConfig) -> int:
    """Write a synthetic series, its adjacency file and the generating model."""
    s = cfg.raw["simulate"]
    graph = grid_graph(int(s["rows"]), int(s["cols"]))
    order = ModelOrder(int(s["p"]), int(s["eta"]))
    plan = SparsityPlan(float(s["density"]), tuple(float(x) for x in s["magnitude"]), bool(s["prefix"]))
    model = random_sparse_model(graph, order, plan, seed=cfg.seed)
    if s["snr"] is not None:
        model = scale_to_snr(model, float(s["snr"]))
    series = simulate(SimulationSpec(model, float(s["sigma"]), int(s["T"]), int(s["burn_in"]), cfg.seed))
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(series, out / "series.csv")
    write_adjacency(graph, out / "adjacency.txt")
    truth = model_to_dict(model)
    truth["sigma"] = float(s["sigma"])
    truth["seed"] = cfg.seed
    jsonio.dump(truth, out / "true_model.json")
    return 0


def run_aggregate(args) -> int:
    start = None if args.start is None else datetime.fromisoformat(args.start)
    end = None if args.end is None else datetime.fromisoformat(args.end)
    extra = read_adjacency(args.adjacency).locations if args.adjacency else ()
    result = aggregate_trips(read_trips(args.trips), args.interval, start, end, extra)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_series_csv(result.series, out)
    print(
        f"parsed={result.parsed} unparseable={len(result.errors)} out_of_range={result.out_of_range} "
        f"zones={result.series.k} bins={result.series.T}"
    )
    return 0


def run_report(args) -> int:
    path = Path(args.out) / "report.json"
    if not path.exists():
        raise ConfigError(f"{path} does not exist")
    report = EvaluationReport.from_dict(jsonio.load(path))
    text = report.to_text()
    sys.stdout.write(text)
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gstar", description="Penalized GSTAR modelling of spatio-temporal counts")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    agg = sub.add_parser("aggregate", help="bin raw trip records into a series CSV")
    agg.add_argument("--trips", required=True)
    agg.add_argument("--out", required=True, help="output series CSV")
    agg.add_argument("--interval", type=int, default=15, help="bin width in minutes")
    agg.add_argument("--start")
    agg.add_argument("--end")
    agg.add_argument("--adjacency", help="include every adjacency location as a zone")

    for name, help_text in (
        ("simulate", "generate synthetic GSTAR data"),
        ("fit", "fit models on the full series"),
        ("evaluate", "run the full comparison pipeline"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=name != "simulate")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")

    rep = sub.add_parser("report", help="print the table of a finished evaluation")
    rep.add_argument("--out", required=True, help="evaluation output directory")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "aggregate":
            return run_aggregate(args)
        if args.command == "report":
            return run_report(args)
        cfg = PipelineConfig.load(args.config, args.seed, args.out, args.set)
        runner = {"simulate": run_simulate, "fit": run_fit, "evaluate": run_pipeline}[args.command]
        return runner(cfg)
    except (GstarError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
