"""Donut geomask and geo-indistinguishability (planar Laplace) perturbation.

Both mechanisms have a scalar entry point operating on one
:class:`~geoperturb.geo.PlanarPoint` and a batch entry point operating on
``(n, 2)`` coordinate arrays. The batch form is what the harness uses; the
scalar form is a thin wrapper and produces identical coordinates for the
same ``(seed, point_id)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .errors import (
    BoundaryRejectionError,
    OutsideCoverageError,
    ValidationError,
    ZeroDensityError,
)
from .geo import PlanarPoint
from .population import BlockTable
from .special import BRANCH_POINT, lambert_w_m1

RADIAL_MODES = ("uniform_area", "uniform_distance")
EPSILON_MODES = ("per_meter", "budget_over_radius")

# failure reasons reported by the batch samplers
OK = ""
FAIL_OUTSIDE = "outside_coverage"
FAIL_ZERO_DENSITY = "zero_density"
FAIL_BOUNDARY = "boundary_rejection"


@dataclass(frozen=True)
class DonutParams:
    k_max: int
    inner_fraction: float = 0.10
    radial_mode: str = "uniform_area"
    max_attempts: int = 1000

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValidationError("k_max must be a positive integer")
        if not 0.0 < self.inner_fraction < 1.0:
            raise ValidationError("inner_fraction must lie in (0, 1)")
        if self.radial_mode not in RADIAL_MODES:
            raise ValidationError(f"unknown radial_mode {self.radial_mode!r}")
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be positive")


@dataclass(frozen=True)
class GeoIParams:
    epsilon: float
    epsilon_mode: str = "per_meter"
    protection_radius: float | None = None
    truncate_to_coverage: bool = False
    max_attempts: int = 1000

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValidationError("epsilon must be positive")
        if self.epsilon_mode not in EPSILON_MODES:
            raise ValidationError(f"unknown epsilon_mode {self.epsilon_mode!r}")
        if self.protection_radius is not None and not self.protection_radius > 0:
            raise ValidationError("protection_radius must be positive")
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be positive")

    def rate(self, protection_radius=None):
        """Laplace rate in 1/m; ``protection_radius`` overrides the stored one."""
        if self.epsilon_mode == "per_meter":
            return self.epsilon
        r = self.protection_radius if protection_radius is None else protection_radius
        if r is None:
            raise ValidationError("budget_over_radius mode needs a protection_radius")
        return self.epsilon / np.asarray(r, dtype=float)


@dataclass(frozen=True)
class AnnulusRadii:
    r1: float
    r2: float

    def __post_init__(self):
        if not 0 < self.r1 < self.r2:
            raise ValidationError("annulus radii must satisfy 0 < r1 < r2")


def outer_radius(k_max, density):
    """Radius of the disc holding ``k_max`` households at ``density``. Vectorised."""
    return np.sqrt(np.asarray(k_max, dtype=float) / (math.pi * np.asarray(density, dtype=float)))


def donut_radii(k_max: int, density: float, inner_fraction: float = 0.10) -> AnnulusRadii:
    if not density > 0:
        raise ZeroDensityError()
    r2 = float(outer_radius(k_max, density))
    return AnnulusRadii(inner_fraction * r2, r2)


def annulus_distance(u, r1, r2, radial_mode: str = "uniform_area"):
    """Map uniforms onto ``[r1, r2]`` under the chosen radial law."""
    u = np.asarray(u, dtype=float)
    if radial_mode == "uniform_area":
        return np.sqrt(r1 * r1 + u * (r2 * r2 - r1 * r1))
    if radial_mode == "uniform_distance":
        return r1 + u * (r2 - r1)
    raise ValidationError(f"unknown radial_mode {radial_mode!r}")


def planar_laplace_radius(epsilon_rate, u):
    """Inverse radial CDF of the planar Laplace law.

    The radius CDF ``1 - (1 + e*d) exp(-e*d)`` is inverted through the lower
    Lambert W branch: ``d = -(W_{-1}((u - 1)/e) + 1) / rate``.
    """
    u = np.asarray(u, dtype=float)
    rate = np.asarray(epsilon_rate, dtype=float)
    if np.any(~(rate > 0)):
        raise ValidationError("epsilon rate must be positive")
    if np.any(~((u > 0) & (u < 1))):
        raise ValidationError("u must lie in the open interval (0, 1)")
    # (u - 1)/e can round a hair below -1/e for u near 0
    z = np.maximum((u - 1.0) / math.e, BRANCH_POINT)
    d = -(lambert_w_m1(z) + 1.0) / rate
    return float(d) if np.ndim(d) == 0 else d


def _offsets(theta, d):
    return np.column_stack([d * np.cos(theta), d * np.sin(theta)])


@dataclass
class BatchResult:
    """Outcome of perturbing a batch of points.

    ``reasons`` holds an empty string for successes and a failure tag
    (``outside_coverage``, ``zero_density``, ``boundary_rejection``)
    otherwise; ``perturbed`` rows of failed points are NaN.
    """

    perturbed: np.ndarray
    reasons: np.ndarray
    attempts: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.reasons == OK


def _resample(xy, draw, blocks, max_attempts, todo):
    """Rejection loop shared by both mechanisms.

    ``draw(idx, attempt_array)`` returns candidate offsets for the rows in
    ``idx``. Rows not in ``todo`` are left untouched.
    """
    n = len(xy)
    out = np.full((n, 2), np.nan)
    attempts = np.zeros(n, dtype=np.int64)
    pending = np.flatnonzero(todo)
    for attempt in range(max_attempts):
        if pending.size == 0:
            break
        cand = xy[pending] + draw(pending, np.full(pending.size, attempt, dtype=np.uint64))
        inside = blocks.covers(cand) if blocks is not None else np.ones(pending.size, bool)
        acc = pending[inside]
        out[acc] = cand[inside]
        attempts[acc] = attempt + 1
        pending = pending[~inside]
    attempts[pending] = max_attempts
    return out, attempts, pending


def _ensure_inputs(xy, keys):
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    keys = np.asarray(keys, dtype=np.uint64).reshape(-1)
    if len(keys) != len(xy):
        raise ValidationError("one rng key per point is required")
    return xy, keys


def donut_perturb_batch(xy, keys, params: DonutParams, blocks: BlockTable,
                        seed: int, densities=None) -> BatchResult:
    """Donut-perturb every row of ``xy``.

    Args:
        xy: ``(n, 2)`` original coordinates in meters.
        keys: per-point rng keys (see :func:`geoperturb.rng.id_keys`).
        params: donut parameters.
        blocks: coverage and density source.
        seed: experiment seed.
        densities: optional precomputed density at each original point.
    """
    xy, keys = _ensure_inputs(xy, keys)
    dens = blocks.densities(xy) if densities is None else np.asarray(densities, float)
    reasons = np.full(len(xy), OK, dtype=object)
    reasons[np.isnan(dens)] = FAIL_OUTSIDE
    reasons[dens == 0] = FAIL_ZERO_DENSITY
    todo = reasons == OK
    r2 = np.where(todo, outer_radius(params.k_max, np.where(todo, dens, 1.0)), np.nan)
    r1 = params.inner_fraction * r2

    def draw(idx, attempt):
        theta = 2 * math.pi * _rng.uniforms(seed, keys[idx], attempt, _rng.LANE_ANGLE)
        u = _rng.uniforms(seed, keys[idx], attempt, _rng.LANE_RADIUS)
        return _offsets(theta, annulus_distance(u, r1[idx], r2[idx], params.radial_mode))

    out, attempts, failed = _resample(xy, draw, blocks, params.max_attempts, todo)
    reasons[failed] = FAIL_BOUNDARY
    return BatchResult(out, reasons, attempts)


def geoi_perturb_batch(xy, keys, params: GeoIParams, blocks: BlockTable | None,
                       seed: int, protection_radius=None) -> BatchResult:
    """Planar-Laplace-perturb every row of ``xy``.

    ``protection_radius`` may be a per-point array; it only matters in
    ``budget_over_radius`` mode. Coverage is consulted only when
    ``params.truncate_to_coverage`` is set.
    """
    xy, keys = _ensure_inputs(xy, keys)
    reasons = np.full(len(xy), OK, dtype=object)
    rate = np.broadcast_to(np.asarray(params.rate(protection_radius), float), (len(xy),))
    bad_rate = ~(rate > 0) | ~np.isfinite(rate)
    reasons[bad_rate] = FAIL_ZERO_DENSITY
    if params.truncate_to_coverage:
        if blocks is None:
            raise ValidationError("truncate_to_coverage needs a block table")
        reasons[(reasons == OK) & ~blocks.covers(xy)] = FAIL_OUTSIDE
    todo = reasons == OK

    def draw(idx, attempt):
        theta = 2 * math.pi * _rng.uniforms(seed, keys[idx], attempt, _rng.LANE_ANGLE)
        u = _rng.uniforms(seed, keys[idx], attempt, _rng.LANE_RADIUS)
        return _offsets(theta, planar_laplace_radius(rate[idx], u))

    if params.truncate_to_coverage:
        out, attempts, failed = _resample(xy, draw, blocks, params.max_attempts, todo)
        reasons[failed] = FAIL_BOUNDARY
    else:
        out, attempts, _ = _resample(xy, draw, None, 1, todo)
    return BatchResult(out, reasons, attempts)


def _raise_for(reason, p: PlanarPoint, point_id, attempts):
    if reason == FAIL_OUTSIDE:
        raise OutsideCoverageError(p.x, p.y)
    if reason == FAIL_ZERO_DENSITY:
        raise ZeroDensityError(point_id)
    if reason == FAIL_BOUNDARY:
        raise BoundaryRejectionError(point_id, attempts)


def donut_perturb(p: PlanarPoint, params: DonutParams, blocks: BlockTable,
                  rng: _rng.RngStream) -> PlanarPoint:
    res = donut_perturb_batch([[p.x, p.y]], [rng.key], params, blocks, rng.seed)
    _raise_for(res.reasons[0], p, rng.point_id, params.max_attempts)
    return PlanarPoint(*map(float, res.perturbed[0]))


def geoi_perturb(p: PlanarPoint, params: GeoIParams, blocks: BlockTable | None,
                 rng: _rng.RngStream) -> PlanarPoint:
    res = geoi_perturb_batch([[p.x, p.y]], [rng.key], params, blocks, rng.seed)
    _raise_for(res.reasons[0], p, rng.point_id, params.max_attempts)
    return PlanarPoint(*map(float, res.perturbed[0]))
