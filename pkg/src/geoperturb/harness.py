"""Experiment configuration, the Max-K x epsilon sweep, and CSV emitters.

Every output is written in canonical (input) record order with floats
rendered by ``repr``, so identical configurations produce byte-identical
files independent of ``workers``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import rng as _rng
from .attack import attack_success
from .distfit import (
    FAMILIES,
    TABLE_COLUMNS,
    FitResult,
    best_fit,
    fit_all,
    report_rows,
    REPORT_HEADER,
)
from .errors import InsufficientDataError, ValidationError
from .geo import GeoPoint, Projection
from .mechanisms import (
    EPSILON_MODES,
    FAIL_OUTSIDE,
    OK,
    RADIAL_MODES,
    DonutParams,
    GeoIParams,
    donut_perturb_batch,
    geoi_perturb_batch,
    outer_radius,
)
from .metrics import Records, bin_mean_distance_by_k, privacy_summary
from .population import (
    BlockTable,
    SynthSpec,
    load_blocks,
    load_synth_spec,
    read_locations,
    synth_generate,
)

log = logging.getLogger(__name__)

MECHANISMS = ("donut", "geoi")
DEFAULT_K_MAX = (100, 200, 300, 400, 500)
DEFAULT_EPSILON = (0.10, 0.20, 0.30, 0.40, 0.50)
HISTOGRAM_BINS = 50
METHOD_LABELS = {"donut": "Donut", "geoi": "Geo-I"}

SUMMARY_HEADER = ["mechanism", "k_max", "epsilon", "epsilon_mode", "n", "failures",
                  "mean_k", "fraction_ge_kmin", "ase_m"]
RECORDS_HEADER = ["id", "orig_x", "orig_y", "pert_x", "pert_y", "pert_lat", "pert_lon",
                  "distance_m", "density", "k_est"]
HISTOGRAM_HEADER = ["bin_lower_m", "bin_upper_m", "count"]
BINS_HEADER = ["k_bin_lower", "mean_distance_m", "count"]
ATTACK_HEADER = ["id", "posterior_rank", "top_cell_error_m"]
ATTACK_SUMMARY_HEADER = ["cell", "family", "n", "n_cells", "mean_rank", "median_rank",
                         "median_top_cell_error_m"]
FAILURES_HEADER = ["cell", "id", "reason"]


@dataclass(frozen=True)
class ExperimentConfig:
    mechanisms: tuple[str, ...] = MECHANISMS
    k_max_list: tuple[int, ...] = DEFAULT_K_MAX
    epsilon_list: tuple[float, ...] = DEFAULT_EPSILON
    seed: int = 0
    locations: str | None = None
    blocks: str | None = None
    origin_lat: float | None = None
    origin_lon: float | None = None
    synth_config: str | None = None
    synth: SynthSpec | None = None
    inner_fraction: float = 0.10
    radial_mode: str = "uniform_area"
    max_attempts: int = 1000
    epsilon_mode: str = "per_meter"
    truncate_to_coverage: bool = False
    k_min: int = 10
    output_dir: str = "results"
    attack: bool = False
    attack_grid_step: float = 10.0
    attack_grid_extent: float = 500.0
    workers: int = 1
    command: str = "sweep"
    inputs: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.mechanisms or set(self.mechanisms) - set(MECHANISMS):
            raise ValidationError(f"mechanisms must be a non-empty subset of {MECHANISMS}")
        if not self.k_max_list or any(int(k) != k or k < 1 for k in self.k_max_list):
            raise ValidationError("k_max values must be positive integers")
        if not self.epsilon_list or any(not (math.isfinite(e) and e > 0)
                                        for e in self.epsilon_list):
            raise ValidationError("epsilon values must be positive (epsilon > 0)")
        if self.locations and (self.synth_config or self.synth):
            raise ValidationError("give either --locations/--blocks or --synth-config, not both")
        if bool(self.locations) != bool(self.blocks):
            raise ValidationError("--locations and --blocks must be given together")
        if (self.origin_lat is None) != (self.origin_lon is None):
            raise ValidationError("--origin-lat and --origin-lon must be given together")
        if self.origin_lat is not None:
            GeoPoint(self.origin_lat, self.origin_lon)
        if self.radial_mode not in RADIAL_MODES:
            raise ValidationError(f"radial mode must be one of {RADIAL_MODES}")
        if self.epsilon_mode not in EPSILON_MODES:
            raise ValidationError(f"epsilon mode must be one of {EPSILON_MODES}")
        if not 0 < self.inner_fraction < 1:
            raise ValidationError("inner fraction must lie in (0, 1)")
        if self.k_min < 0:
            raise ValidationError("k_min must be non-negative")
        if not (self.attack_grid_step > 0 and self.attack_grid_extent > 0):
            raise ValidationError("attack grid step and extent must be positive")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")
        if self.max_attempts < 1:
            raise ValidationError("max attempts must be positive")

    def has_input(self) -> bool:
        return bool(self.locations or self.synth_config or self.synth)


@dataclass(frozen=True)
class Cell:
    mechanism: str
    k_max: int
    epsilon: float | None = None

    @property
    def label(self) -> str:
        if self.epsilon is None:
            return f"{self.mechanism}_k{self.k_max}"
        return f"{self.mechanism}_k{self.k_max}_e{self.epsilon:g}"


def sweep_cells(config: ExperimentConfig) -> list[Cell]:
    cells = []
    if "donut" in config.mechanisms:
        cells += [Cell("donut", int(k)) for k in config.k_max_list]
    if "geoi" in config.mechanisms:
        cells += [Cell("geoi", int(k), float(e))
                  for k in config.k_max_list for e in config.epsilon_list]
    return cells


@dataclass
class Dataset:
    ids: list[str]
    xy: np.ndarray
    blocks: BlockTable
    projection: Projection
    keys: np.ndarray = field(init=False)
    density: np.ndarray = field(init=False)

    def __post_init__(self):
        self.keys = _rng.id_keys(self.ids)
        self.density = self.blocks.densities(self.xy)

    def __len__(self):
        return len(self.ids)


def load_dataset(config: ExperimentConfig) -> Dataset:
    """Ingest or synthesise the locations and blocks named by ``config``."""
    if config.locations:
        ids, lats, lons = read_locations(config.locations)
        blocks = load_blocks(config.blocks)
        if config.origin_lat is not None:
            proj = Projection(GeoPoint(config.origin_lat, config.origin_lon))
        elif ids:
            proj = Projection.centered_on(lats, lons)
        else:
            raise ValidationError("empty locations file and no projection origin")
        xy = proj.forward(lats, lons) if ids else np.empty((0, 2))
        return Dataset(ids, xy, blocks, proj)
    spec = config.synth or (load_synth_spec(config.synth_config) if config.synth_config else None)
    if spec is None:
        raise ValidationError("no input: give --locations/--blocks or --synth-config")
    blocks, xy = synth_generate(spec)
    proj = spec.projection
    if config.origin_lat is not None:
        proj = Projection(GeoPoint(config.origin_lat, config.origin_lon))
    return Dataset([f"h{i}" for i in range(len(xy))], xy, blocks, proj)


@dataclass
class CellResult:
    cell: Cell
    records: Records
    failures: list[tuple[str, str]]
    summary: object
    bins: list
    fits: list
    histogram: list
    attack: tuple | None = None


def perturb_cell(ds: Dataset, config: ExperimentConfig, cell: Cell):
    """Perturb every location for one sweep cell.

    Returns ``(records, failures)`` with failures as ``(id, reason)`` pairs.
    """
    seed = _rng.derive_seed(config.seed, cell.label)
    dens = ds.density
    covered = ~np.isnan(dens)
    if cell.mechanism == "donut":
        params = DonutParams(cell.k_max, config.inner_fraction, config.radial_mode,
                             config.max_attempts)
        res = donut_perturb_batch(ds.xy, ds.keys, params, ds.blocks, seed, dens)
    else:
        params = GeoIParams(cell.epsilon, config.epsilon_mode, None,
                            config.truncate_to_coverage, config.max_attempts)
        radius = None
        if config.epsilon_mode == "budget_over_radius":
            with np.errstate(divide="ignore", invalid="ignore"):
                radius = outer_radius(cell.k_max, np.where(covered, dens, np.inf))
        res = geoi_perturb_batch(ds.xy, ds.keys, params, ds.blocks, seed, radius)
    reasons = res.reasons.copy()
    # achieved K needs the origin's density, whatever the mechanism
    reasons[~covered] = FAIL_OUTSIDE
    ok = reasons == OK
    failures = [(ds.ids[i], reasons[i]) for i in np.flatnonzero(~ok)]
    keep = np.flatnonzero(ok)
    records = Records([ds.ids[i] for i in keep], ds.xy[keep], res.perturbed[keep], dens[keep])
    return records, failures


def _histogram(distance: np.ndarray):
    if distance.size == 0:
        return []
    counts, edges = np.histogram(distance, bins=HISTOGRAM_BINS, range=(0.0, float(distance.max()) or 1.0))
    return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]


def run_cell(ds: Dataset, config: ExperimentConfig, cell: Cell) -> CellResult:
    records, failures = perturb_cell(ds, config, cell)
    if len(records) == 0:
        raise InsufficientDataError(f"cell {cell.label}: every point failed")
    summary = privacy_summary(records, config.k_min)
    bins = bin_mean_distance_by_k(records)
    fits = fit_all(records.distance)
    attack = None
    if config.attack:
        law = best_fit(fits)
        attack = (law, *attack_success(records, law, config.attack_grid_step,
                                       config.attack_grid_extent))
    log.info("cell %s: n=%d failures=%d mean_k=%.3f ase=%.3f", cell.label,
             summary.n, len(failures), summary.mean_k, summary.ase)
    return CellResult(cell, records, failures, summary, bins, fits,
                      _histogram(records.distance), attack)


def run_cells(ds: Dataset, config: ExperimentConfig, cells) -> list[CellResult]:
    worker = partial(run_cell, ds, config)
    if config.workers == 1 or len(cells) == 1:
        return [worker(c) for c in cells]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(worker, cells))


# ------------------------------------------------------------------ writers

def _f(v) -> str:
    return repr(float(v))


def _writer(path: Path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_records(path: Path, records: Records, proj: Projection) -> None:
    lats, lons = proj.inverse(records.perturbed) if len(records) else ((), ())
    k = records.k_est
    fh, w = _writer(path)
    with fh:
        w.writerow(RECORDS_HEADER)
        for i, rid in enumerate(records.ids):
            o, p = records.original[i], records.perturbed[i]
            w.writerow([rid, _f(o[0]), _f(o[1]), _f(p[0]), _f(p[1]), _f(lats[i]),
                        _f(lons[i]), _f(records.distance[i]), _f(records.density[i]),
                        _f(k[i])])


def write_failures(path: Path, results) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(FAILURES_HEADER)
        for r in results:
            for rid, reason in r.failures:
                w.writerow([r.cell.label, rid, reason])


def write_summary(path: Path, results, config: ExperimentConfig) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(SUMMARY_HEADER)
        for r in results:
            s, c = r.summary, r.cell
            geoi = c.mechanism == "geoi"
            w.writerow([c.mechanism, c.k_max, _f(c.epsilon) if geoi else "",
                        config.epsilon_mode if geoi else "", s.n, len(r.failures),
                        _f(s.mean_k), _f(s.fraction_at_least_k_min), _f(s.ase)])


def likelihood_table(results) -> list[tuple[str, dict[str, float]]]:
    """Family log-likelihoods averaged over the cells of each mechanism."""
    rows = []
    for mech in MECHANISMS:
        cells = [r for r in results if r.cell.mechanism == mech]
        if not cells:
            continue
        avg = {}
        for fam in FAMILIES:
            vals = [f.log_likelihood for r in cells for f in r.fits
                    if isinstance(f, FitResult) and f.family == fam]
            avg[fam] = math.fsum(vals) / len(vals) if vals else math.nan
        rows.append((METHOD_LABELS[mech], avg))
    return rows


def write_likelihood_table(path: Path, results) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(["Method"] + [c.capitalize() for c in TABLE_COLUMNS])
        for label, avg in likelihood_table(results):
            w.writerow([label] + [f"{avg[c]:.3f}" for c in TABLE_COLUMNS])


def write_rows(path: Path, header, rows) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(header)
        w.writerows(rows)


def _config_json(config: ExperimentConfig) -> str:
    d = asdict(config)
    d.pop("output_dir")
    d.pop("workers")
    return json.dumps(d, indent=2, sort_keys=True, default=str) + "\n"


def run_sweep(config: ExperimentConfig) -> list[Path]:
    """Run every sweep cell and write all result tables.

    Returns the written paths in emission order.
    """
    ds = load_dataset(config)
    if len(ds) == 0:
        raise InsufficientDataError("no locations to perturb")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(config)
    log.info("%d locations, %d blocks, %d cells", len(ds), len(ds.blocks), len(cells))
    results = run_cells(ds, config, cells)

    written: list[Path] = []

    def emit(name, fn, *args):
        path = out / name
        fn(path, *args)
        written.append(path)

    (out / "config.json").write_text(_config_json(config), encoding="utf-8")
    written.append(out / "config.json")
    for r in results:
        lab = r.cell.label
        emit(f"records_{lab}.csv", write_records, r.records, ds.projection)
        emit(f"k_bins_{lab}.csv", write_rows, BINS_HEADER,
             [(lo, _f(m), c) for lo, m, c in r.bins])
        emit(f"histogram_{lab}.csv", write_rows, HISTOGRAM_HEADER,
             [(_f(a), _f(b), c) for a, b, c in r.histogram])
        if r.attack is not None:
            _, per_record, _summary = r.attack
            emit(f"attack_{lab}.csv", write_rows, ATTACK_HEADER,
                 [(a.id, a.posterior_rank, _f(a.top_cell_error)) for a in per_record])
    emit("summary.csv", write_summary, results, config)
    emit("failures.csv", write_failures, results)
    emit("fits.csv", write_rows, REPORT_HEADER,
         [row for r in results for row in report_rows(r.cell.label, r.fits)])
    emit("likelihood_table.csv", write_likelihood_table, results)
    if config.attack:
        emit("attack_summary.csv", write_rows, ATTACK_SUMMARY_HEADER,
             [(r.cell.label, r.attack[0].family, s.n, s.n_cells, _f(s.mean_rank),
               _f(s.median_rank), _f(s.median_top_cell_error))
              for r in results for s in [r.attack[2]]])
    return written


def run_perturb(config: ExperimentConfig) -> list[Path]:
    """Perturbation only: records and failures per cell, no analysis."""
    ds = load_dataset(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    failures = []
    for cell in sweep_cells(config):
        records, fails = perturb_cell(ds, config, cell)
        path = out / f"records_{cell.label}.csv"
        write_records(path, records, ds.projection)
        written.append(path)
        failures.append(CellResult(cell, records, fails, None, [], [], []))
    write_failures(out / "failures.csv", failures)
    written.append(out / "failures.csv")
    return written


def read_record_distances(path) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    """Load ``(ids, original, perturbed, density)`` back from a records CSV."""
    ids, orig, pert, dens = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RECORDS_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            ids.append(row["id"])
            orig.append((float(row["orig_x"]), float(row["orig_y"])))
            pert.append((float(row["pert_x"]), float(row["pert_y"])))
            dens.append(float(row["density"]))
    return (ids, np.array(orig, float).reshape(-1, 2), np.array(pert, float).reshape(-1, 2),
            np.array(dens, float))


def load_records(path) -> Records:
    ids, o, p, d = read_record_distances(path)
    return Records(ids, o, p, d)
