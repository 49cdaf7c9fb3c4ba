"""Census-block analogue: rectangular blocks with household counts.

A :class:`BlockTable` answers "which block contains this point" through a
uniform grid index, and from that the local density ``N_i / A_i`` that both
the donut radii and the achieved-K estimate depend on.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutsideCoverageError, ParseError, ValidationError
from .geo import PlanarPoint, Projection

log = logging.getLogger(__name__)

BLOCKS_HEADER = ["block_id", "min_x", "min_y", "max_x", "max_y", "population"]
LOCATIONS_HEADER = ["id", "lat", "lon"]


@dataclass(frozen=True)
class Block:
    block_id: str
    min_x: float
    min_y: float
    max_x: float
    max_y: float
    population: float

    def __post_init__(self):
        coords = (self.min_x, self.min_y, self.max_x, self.max_y)
        if not all(math.isfinite(c) for c in coords):
            raise ValidationError(f"block {self.block_id!r} has non-finite bounds")
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise ValidationError(f"block {self.block_id!r} has non-positive area")
        if not (math.isfinite(self.population) and self.population >= 0):
            raise ValidationError(f"block {self.block_id!r} has invalid population")

    @property
    def area(self) -> float:
        return (self.max_x - self.min_x) * (self.max_y - self.min_y)

    @property
    def density(self) -> float:
        return self.population / self.area

    def contains(self, p: PlanarPoint) -> bool:
        return self.min_x <= p.x < self.max_x and self.min_y <= p.y < self.max_y


def _overlap(a: Block, b: Block) -> bool:
    return (
        a.min_x < b.max_x and b.min_x < a.max_x
        and a.min_y < b.max_y and b.min_y < a.max_y
    )


class BlockTable:
    """Immutable set of non-overlapping blocks with an O(1) point lookup.

    The index is a uniform grid over the bounding box. Each grid cell stores
    the (padded) list of blocks that intersect it, so a lookup inspects a
    handful of candidates regardless of the number of blocks.
    """

    def __init__(self, blocks: Iterable[Block], cell_size: float | None = None):
        self.blocks: tuple[Block, ...] = tuple(blocks)
        if not self.blocks:
            raise ValidationError("a block table needs at least one block")
        ids = [b.block_id for b in self.blocks]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate block ids")

        bounds = np.array(
            [(b.min_x, b.min_y, b.max_x, b.max_y) for b in self.blocks], dtype=float
        )
        self._bounds = bounds
        self._bounds.setflags(write=False)
        self._density = np.array([b.density for b in self.blocks], dtype=float)
        self._density.setflags(write=False)

        self.min_x, self.min_y = bounds[:, 0].min(), bounds[:, 1].min()
        self.max_x, self.max_y = bounds[:, 2].max(), bounds[:, 3].max()
        if cell_size is None:
            cell_size = float(np.median(np.minimum(bounds[:, 2] - bounds[:, 0],
                                                   bounds[:, 3] - bounds[:, 1])))
        if not cell_size > 0:
            raise ValidationError("index cell size must be positive")
        self.cell_size = cell_size
        self._nx = max(1, math.ceil((self.max_x - self.min_x) / cell_size))
        self._ny = max(1, math.ceil((self.max_y - self.min_y) / cell_size))
        self._build_index()

    def _cell_range(self, lo: float, hi: float, origin: float, n: int) -> range:
        a = int(math.floor((lo - origin) / self.cell_size))
        b = int(math.ceil((hi - origin) / self.cell_size))
        return range(max(a, 0), min(max(b, a + 1), n))

    def _build_index(self) -> None:
        buckets: list[list[int]] = [[] for _ in range(self._nx * self._ny)]
        for i, b in enumerate(self.blocks):
            for cy in self._cell_range(b.min_y, b.max_y, self.min_y, self._ny):
                for cx in self._cell_range(b.min_x, b.max_x, self.min_x, self._nx):
                    bucket = buckets[cy * self._nx + cx]
                    for j in bucket:
                        if _overlap(b, self.blocks[j]):
                            raise ValidationError(
                                f"blocks {self.blocks[j].block_id!r} and "
                                f"{b.block_id!r} overlap"
                            )
                    bucket.append(i)
        width = max(len(bk) for bk in buckets)
        index = np.full((len(buckets), width), -1, dtype=np.int64)
        for c, bk in enumerate(buckets):
            index[c, : len(bk)] = bk
        self._index = index
        self._index.setflags(write=False)

    def __len__(self) -> int:
        return len(self.blocks)

    def lookup(self, xy) -> np.ndarray:
        """Vectorised block lookup.

        Returns the index into :attr:`blocks` of the block containing each
        row of ``xy``, or ``-1`` for points outside coverage.
        """
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        x, y = xy[:, 0], xy[:, 1]
        cx = np.floor((x - self.min_x) / self.cell_size)
        cy = np.floor((y - self.min_y) / self.cell_size)
        inside = (cx >= 0) & (cx < self._nx) & (cy >= 0) & (cy < self._ny)
        cell = np.where(inside, cy * self._nx + cx, 0).astype(np.int64)
        found = np.full(len(xy), -1, dtype=np.int64)
        for col in range(self._index.shape[1]):
            cand = self._index[cell, col]
            ok = inside & (found < 0) & (cand >= 0)
            bb = self._bounds[np.where(cand >= 0, cand, 0)]
            hit = ok & (bb[:, 0] <= x) & (x < bb[:, 2]) & (bb[:, 1] <= y) & (y < bb[:, 3])
            found[hit] = cand[hit]
        return found

    def covers(self, xy) -> np.ndarray:
        return self.lookup(xy) >= 0

    def densities(self, xy) -> np.ndarray:
        """Density per point; NaN where the point is outside coverage."""
        idx = self.lookup(xy)
        out = np.full(len(idx), np.nan)
        out[idx >= 0] = self._density[idx[idx >= 0]]
        return out


def block_of(p: PlanarPoint, t: BlockTable) -> Block:
    i = int(t.lookup([[p.x, p.y]])[0])
    if i < 0:
        raise OutsideCoverageError(p.x, p.y)
    return t.blocks[i]


def density_at(p: PlanarPoint, t: BlockTable) -> float:
    return block_of(p, t).density


# ---------------------------------------------------------------- synthesis

PROFILES = ("uniform", "radial", "checkerboard")


@dataclass(frozen=True)
class SynthSpec:
    """Rectangular grid of square blocks with a parametric density profile.

    ``d1``/``d2`` are in households per square meter. For ``uniform`` only
    ``d1`` is used; ``radial`` interpolates linearly from ``d1`` at the grid
    centre to ``d2`` at the farthest block centre; ``checkerboard`` alternates
    ``d1`` (even ``row + col``) and ``d2``.
    """

    grid_cols: int
    grid_rows: int
    block_size: float
    profile: str = "uniform"
    d1: float = 0.001
    d2: float = 0.0
    seed: int = 0
    counts: str = "round"
    origin_lat: float = 45.5
    origin_lon: float = -73.6

    def __post_init__(self):
        if self.grid_cols < 1 or self.grid_rows < 1:
            raise ValidationError("grid dimensions must be positive")
        if not self.block_size > 0:
            raise ValidationError("block_size must be positive")
        if self.profile not in PROFILES:
            raise ValidationError(f"unknown density profile {self.profile!r}")
        if self.d1 < 0 or self.d2 < 0:
            raise ValidationError("densities must be non-negative")
        if self.counts not in ("round", "poisson"):
            raise ValidationError("counts must be 'round' or 'poisson'")

    @property
    def projection(self) -> Projection:
        from .geo import GeoPoint

        return Projection(GeoPoint(self.origin_lat, self.origin_lon))

    def block_densities(self) -> np.ndarray:
        """Density per block, shape ``(grid_rows, grid_cols)``."""
        rows, cols = np.mgrid[0 : self.grid_rows, 0 : self.grid_cols]
        if self.profile == "uniform":
            return np.full(rows.shape, float(self.d1))
        if self.profile == "checkerboard":
            return np.where((rows + cols) % 2 == 0, float(self.d1), float(self.d2))
        r = np.hypot(cols - (self.grid_cols - 1) / 2, rows - (self.grid_rows - 1) / 2)
        t = r / r.max() if r.max() > 0 else np.zeros_like(r)
        return self.d1 + (self.d2 - self.d1) * t


def synth_generate(spec: SynthSpec) -> tuple[BlockTable, np.ndarray]:
    """Build the block grid and scatter households uniformly inside blocks.

    Returns the table and an ``(n, 2)`` array of household coordinates, in
    block order. Household ``i`` is conventionally named ``h{i}``.
    """
    rng = np.random.default_rng(spec.seed)
    dens = spec.block_densities()
    area = spec.block_size**2
    blocks = []
    pts = []
    for r in range(spec.grid_rows):
        for c in range(spec.grid_cols):
            # neighbours share exact edge values, so no float slivers
            x0, x1 = c * spec.block_size, (c + 1) * spec.block_size
            y0, y1 = r * spec.block_size, (r + 1) * spec.block_size
            expected = dens[r, c] * area
            n = int(rng.poisson(expected)) if spec.counts == "poisson" else round(expected)
            blocks.append(
                Block(f"b{r}_{c}", x0, y0, x1, y1, n)
            )
            if n:
                # open interval keeps points strictly inside the rectangle
                u = rng.random((n, 2))
                u = np.where(u == 0.0, 0.5, u)
                px = np.clip(x0 + u[:, 0] * spec.block_size, x0, np.nextafter(x1, x0))
                py = np.clip(y0 + u[:, 1] * spec.block_size, y0, np.nextafter(y1, y0))
                pts.append(np.column_stack([px, py]))
    xy = np.concatenate(pts) if pts else np.empty((0, 2))
    return BlockTable(blocks, cell_size=spec.block_size), xy


def load_synth_spec(path) -> SynthSpec:
    """Read ``key = value`` lines (optionally under a ``[synth]`` section)."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.lstrip().startswith("["):
        text = "[synth]\n" + text
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    sec = cp[cp.sections()[0]]
    known = {"grid_cols", "grid_rows", "block_size_m", "profile", "d1", "d2",
             "seed", "counts", "origin_lat", "origin_lon"}
    unknown = set(sec) - known
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return SynthSpec(
            grid_cols=sec.getint("grid_cols"),
            grid_rows=sec.getint("grid_rows"),
            block_size=sec.getfloat("block_size_m"),
            profile=sec.get("profile", "uniform"),
            d1=sec.getfloat("d1", 0.001),
            d2=sec.getfloat("d2", 0.0),
            seed=sec.getint("seed", 0),
            counts=sec.get("counts", "round"),
            origin_lat=sec.getfloat("origin_lat", 45.5),
            origin_lon=sec.getfloat("origin_lon", -73.6),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: {exc}") from exc


# ------------------------------------------------------------------ file I/O

def _rows(path, header: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != list(header):
            raise ParseError(path, 1, f"expected header {','.join(header)}")
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num,
                                 f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [f.strip() for f in row]


def load_blocks(path) -> BlockTable:
    blocks = []
    for line, row in _rows(path, BLOCKS_HEADER):
        try:
            vals = [float(v) for v in row[1:]]
            blocks.append(Block(row[0], *vals))
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from exc
    return BlockTable(blocks)


def read_locations(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Parse a locations CSV into ``(ids, lats, lons)`` without projecting."""
    ids, lats, lons = [], [], []
    seen = set()
    for line, row in _rows(path, LOCATIONS_HEADER):
        try:
            lat, lon = float(row[1]), float(row[2])
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from exc
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise ParseError(path, line, f"coordinate ({lat}, {lon}) out of range")
        if row[0] in seen:
            raise ParseError(path, line, f"duplicate id {row[0]!r}")
        seen.add(row[0])
        ids.append(row[0])
        lats.append(lat)
        lons.append(lon)
    return ids, np.array(lats, dtype=float), np.array(lons, dtype=float)


def load_locations(path, proj: Projection) -> list[tuple[str, PlanarPoint]]:
    ids, lats, lons = read_locations(path)
    if not ids:
        return []
    xy = proj.forward(lats, lons)
    return [(i, PlanarPoint(float(p[0]), float(p[1]))) for i, p in zip(ids, xy)]


def write_blocks(path, table: BlockTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BLOCKS_HEADER)
        for b in table.blocks:
            w.writerow([b.block_id, repr(b.min_x), repr(b.min_y), repr(b.max_x),
                        repr(b.max_y), repr(b.population)])


def write_locations(path, ids, lats, lons) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOCATIONS_HEADER)
        for i, la, lo in zip(ids, lats, lons):
            w.writerow([i, repr(float(la)), repr(float(lo))])
