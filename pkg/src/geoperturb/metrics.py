"""Privacy and utility metrics over perturbation records.

Records are held column-wise in :class:`Records` so metrics run as numpy
folds; individual :class:`PerturbationRecord` values are available by
iteration and are accepted anywhere a ``Records`` is.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ValidationError
from .geo import PlanarPoint

DEFAULT_K_MIN = 10
DEFAULT_BIN_WIDTH = 10


@dataclass(frozen=True)
class PerturbationRecord:
    id: str
    original: PlanarPoint
    perturbed: PlanarPoint
    distance: float
    density_at_original: float

    @classmethod
    def build(cls, id, original: PlanarPoint, perturbed: PlanarPoint, density: float):
        d = math.hypot(perturbed.x - original.x, perturbed.y - original.y)
        return cls(id, original, perturbed, d, density)


class Records:
    """Column store of perturbation records.

    Attributes:
        ids: list of identifiers.
        original, perturbed: ``(n, 2)`` planar coordinates.
        distance: displacement per record (meters).
        density: ``N_i / A_i`` of the block holding the original point.
    """

    def __init__(self, ids, original, perturbed, density, distance=None):
        self.ids = list(ids)
        self.original = np.asarray(original, dtype=float).reshape(-1, 2)
        self.perturbed = np.asarray(perturbed, dtype=float).reshape(-1, 2)
        self.density = np.asarray(density, dtype=float).reshape(-1)
        n = len(self.ids)
        if not (len(self.original) == len(self.perturbed) == len(self.density) == n):
            raise ValidationError("record columns have mismatched lengths")
        if np.any(self.density < 0):
            raise ValidationError("density must be non-negative")
        if distance is None:
            d = self.perturbed - self.original
            distance = np.hypot(d[:, 0], d[:, 1])
        self.distance = np.asarray(distance, dtype=float).reshape(-1)

    @classmethod
    def from_records(cls, records: Iterable[PerturbationRecord]) -> "Records":
        recs = list(records)
        return cls(
            [r.id for r in recs],
            [(r.original.x, r.original.y) for r in recs],
            [(r.perturbed.x, r.perturbed.y) for r in recs],
            [r.density_at_original for r in recs],
            [r.distance for r in recs],
        )

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        for i, rid in enumerate(self.ids):
            yield PerturbationRecord(
                rid,
                PlanarPoint(*map(float, self.original[i])),
                PlanarPoint(*map(float, self.perturbed[i])),
                float(self.distance[i]),
                float(self.density[i]),
            )

    @property
    def k_est(self) -> np.ndarray:
        return k_estimates(self.distance, self.density)


def as_records(records) -> Records:
    return records if isinstance(records, Records) else Records.from_records(records)


def k_estimates(distance, density):
    """Vectorised ``pi * D^2 * N/A``."""
    distance = np.asarray(distance, dtype=float)
    return math.pi * distance * distance * np.asarray(density, dtype=float)


def k_estimate(r: PerturbationRecord) -> float:
    return math.pi * r.distance**2 * r.density_at_original


def average_spatial_error(records) -> float:
    rs = as_records(records)
    if len(rs) == 0:
        raise EmptyInputError("average spatial error of zero records")
    return math.fsum(rs.distance) / len(rs)


@dataclass(frozen=True)
class PrivacySummary:
    mean_k: float
    fraction_at_least_k_min: float
    k_min: int
    ase: float
    n: int


def privacy_summary(records, k_min: int = DEFAULT_K_MIN) -> PrivacySummary:
    rs = as_records(records)
    n = len(rs)
    if n == 0:
        raise EmptyInputError("privacy summary of zero records")
    k = rs.k_est
    return PrivacySummary(
        mean_k=math.fsum(k) / n,
        fraction_at_least_k_min=int(np.count_nonzero(k >= k_min)) / n,
        k_min=k_min,
        ase=math.fsum(rs.distance) / n,
        n=n,
    )


def bin_mean_distance_by_k(records, bin_width: int = DEFAULT_BIN_WIDTH):
    """Group records by achieved-K bin.

    Returns ``(k_bin_lower, mean_distance, count)`` tuples for non-empty
    bins, in ascending bin order.
    """
    if bin_width < 1:
        raise ValidationError("bin_width must be at least 1")
    rs = as_records(records)
    if len(rs) == 0:
        return []
    lower = np.floor(rs.k_est / bin_width).astype(np.int64) * bin_width
    bins, inverse, counts = np.unique(lower, return_inverse=True, return_counts=True)
    out = []
    for b, (lo, c) in enumerate(zip(bins, counts)):
        out.append((int(lo), math.fsum(rs.distance[inverse == b]) / int(c), int(c)))
    return out
