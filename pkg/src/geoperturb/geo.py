"""Coordinate types and a local equirectangular projection.

All mechanisms work in planar meters. Geographic input is projected onto a
tangent plane at ``Projection.origin``; at metropolitan scale the error of
this approximation is well under half a percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise ValidationError(f"latitude {self.lat!r} outside [-90, 90]")
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise ValidationError(f"longitude {self.lon!r} outside [-180, 180]")


@dataclass(frozen=True)
class PlanarPoint:
    """Meters east (``x``) and north (``y``) of a projection origin."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite planar point ({self.x!r}, {self.y!r})")


@dataclass(frozen=True)
class Projection:
    origin: GeoPoint
    earth_radius: float = field(default=EARTH_RADIUS_M)

    @property
    def _cos_lat0(self) -> float:
        return math.cos(math.radians(self.origin.lat))

    @classmethod
    def centered_on(cls, lats, lons) -> "Projection":
        """Projection whose origin is the centroid of the given coordinates."""
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if lats.size == 0:
            raise ValidationError("cannot centre a projection on zero points")
        return cls(GeoPoint(float(np.mean(lats)), float(np.mean(lons))))

    def forward(self, lats, lons) -> np.ndarray:
        """Vectorised geo -> planar. Returns an ``(n, 2)`` array of meters."""
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if np.any(~np.isfinite(lats)) or np.any(np.abs(lats) > 90.0):
            raise ValidationError("latitude outside [-90, 90]")
        if np.any(~np.isfinite(lons)) or np.any(np.abs(lons) > 180.0):
            raise ValidationError("longitude outside [-180, 180]")
        x = self.earth_radius * self._cos_lat0 * np.radians(lons - self.origin.lon)
        y = self.earth_radius * np.radians(lats - self.origin.lat)
        return np.column_stack([x, y])

    def inverse(self, xy) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised planar -> geo. Returns ``(lats, lons)``."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        lats = self.origin.lat + np.degrees(xy[:, 1] / self.earth_radius)
        lons = self.origin.lon + np.degrees(
            xy[:, 0] / (self.earth_radius * self._cos_lat0)
        )
        return lats, lons


def to_planar(p: GeoPoint, proj: Projection) -> PlanarPoint:
    xy = proj.forward([p.lat], [p.lon])[0]
    return PlanarPoint(float(xy[0]), float(xy[1]))


def to_geo(p: PlanarPoint, proj: Projection) -> GeoPoint:
    lats, lons = proj.inverse([[p.x, p.y]])
    return GeoPoint(float(lats[0]), float(lons[0]))


def euclidean_distance(a: PlanarPoint, b: PlanarPoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def haversine_m(a: GeoPoint, b: GeoPoint, radius: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance, used to check the planar approximation."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * radius * math.asin(math.sqrt(h))
