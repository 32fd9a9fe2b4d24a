"""Discretized geography: grids, priors, user locations, ingestion and synthesis."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

PRIOR_ATOL = 1e-9
POLICIES = ("first-by-timestamp", "most-frequent-region")


class IngestError(ValueError):
    """Raised when check-in input is malformed or yields no usable user."""

    def __init__(self, message, bad_lines=(), skipped=0):
        super().__init__(message)
        self.bad_lines = list(bad_lines)
        self.skipped = skipped


@dataclass(frozen=True)
class Grid:
    """Rectangular grid of regions over a lat/lon box.

    Regions are numbered ``0 .. rows*cols - 1`` in row-major order; row ``i``
    grows with latitude and column ``j`` with longitude. Distances are
    measured on the integer lattice, so adjacent regions are exactly 1 apart
    whatever the geographic aspect ratio of a cell.
    """

    origin: tuple[float, float]
    rows: int
    cols: int
    cell_height: float
    cell_width: float

    def __post_init__(self):
        if int(self.rows) != self.rows or int(self.cols) != self.cols:
            raise ValueError("rows and cols must be integers")
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {self.rows}x{self.cols}")
        if not (self.cell_height > 0 and self.cell_width > 0):
            raise ValueError("cell sizes must be positive")
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def n_regions(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def _check(self, region):
        region = np.asarray(region)
        if np.any((region < 0) | (region >= self.n_regions)):
            raise IndexError(f"region index out of range for {self.rows}x{self.cols} grid")
        return region

    def coords(self, region):
        """Lattice coordinates ``(row, col)`` of one or many regions."""
        region = self._check(region)
        return np.divmod(region, self.cols)

    def center(self, region) -> tuple[float, float]:
        i, j = self.coords(region)
        return (self.origin[0] + (i + 0.5) * self.cell_height,
                self.origin[1] + (j + 0.5) * self.cell_width)

    @cached_property
    def lattice(self) -> np.ndarray:
        """``(n_regions, 2)`` array of lattice coordinates."""
        i, j = np.divmod(np.arange(self.n_regions), self.cols)
        out = np.column_stack([i, j]).astype(float)
        out.setflags(write=False)
        return out

    @cached_property
    def distances(self) -> np.ndarray:
        """Read-only matrix of normalized Euclidean distances between centers."""
        diff = self.lattice[:, None, :] - self.lattice[None, :, :]
        d = np.sqrt((diff ** 2).sum(axis=-1))
        d.setflags(write=False)
        return d

    def distance(self, a: int, b: int) -> float:
        self._check([a, b])
        (ia, ja), (ib, jb) = divmod(int(a), self.cols), divmod(int(b), self.cols)
        return math.hypot(ia - ib, ja - jb)

    def locate(self, lat: float, lon: float) -> int | None:
        """Region containing ``(lat, lon)``, or None outside the grid box."""
        i = math.floor((lat - self.origin[0]) / self.cell_height)
        j = math.floor((lon - self.origin[1]) / self.cell_width)
        if 0 <= i < self.rows and 0 <= j < self.cols:
            return i * self.cols + j
        return None

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "rows": self.rows, "cols": self.cols,
                "cell_height": self.cell_height, "cell_width": self.cell_width}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        if "cell_size" in d:
            h, w = d["cell_size"]
        else:
            h, w = d.get("cell_height", 1.0), d.get("cell_width", 1.0)
        return cls(tuple(d.get("origin", (0.0, 0.0))), d["rows"], d["cols"], h, w)


def build_grid(origin=(0.0, 0.0), rows=20, cols=20, cell_size=(1.0, 1.0)) -> Grid:
    """Build a ``rows x cols`` grid anchored at ``origin`` (lat, lon)."""
    return Grid(tuple(origin), rows, cols, cell_size[0], cell_size[1])


def region_distance(grid: Grid, a: int, b: int) -> float:
    return grid.distance(a, b)


def validate_prior(probs, n_regions: int | None = None) -> np.ndarray:
    """Return ``probs`` as a read-only float array after checking it is a distribution."""
    p = np.array(probs, dtype=float).ravel()
    if n_regions is not None and p.size != n_regions:
        raise ValueError(f"prior has {p.size} entries, expected {n_regions}")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError("prior entries must be finite and nonnegative")
    if abs(p.sum() - 1.0) > PRIOR_ATOL:
        raise ValueError(f"prior sums to {p.sum()!r}, not 1")
    p.setflags(write=False)
    return p


def empirical_prior(regions, n_regions: int) -> np.ndarray:
    counts = np.bincount(np.asarray(regions, dtype=int), minlength=n_regions)
    if counts.size > n_regions:
        raise IndexError("region index out of range")
    return validate_prior(counts / counts.sum(), n_regions)


@dataclass(frozen=True)
class UserLocations:
    """One true region per user."""

    user_ids: tuple
    regions: np.ndarray = field(repr=False)

    def __post_init__(self):
        ids = tuple(str(u) for u in self.user_ids)
        regions = np.array(self.regions, dtype=int).ravel()
        if len(ids) != regions.size:
            raise ValueError("user_ids and regions differ in length")
        if len(set(ids)) != len(ids):
            dup = next(u for u, c in Counter(ids).items() if c > 1)
            raise ValueError(f"user {dup!r} appears more than once")
        regions.setflags(write=False)
        object.__setattr__(self, "user_ids", ids)
        object.__setattr__(self, "regions", regions)

    def __len__(self):
        return len(self.user_ids)

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, int]]) -> "UserLocations":
        records = list(records)
        return cls(tuple(r[0] for r in records), [r[1] for r in records])

    def records(self):
        return list(zip(self.user_ids, self.regions.tolist()))

    def subset(self, index) -> "UserLocations":
        index = np.asarray(index, dtype=int)
        return UserLocations(tuple(self.user_ids[i] for i in index), self.regions[index])


def parse_timestamp(value: str) -> float:
    """Epoch seconds from an integer string or an ISO-8601 timestamp."""
    value = value.strip()
    try:
        return float(int(value))
    except ValueError:
        pass
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    ts = datetime.fromisoformat(value)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.timestamp()


def _reduce(visits: list[tuple[float, int]], policy: str) -> int:
    if policy == "first-by-timestamp":
        return min(visits)[1]
    counts = Counter(region for _, region in visits)
    top = max(counts.values())
    return min(r for r, c in counts.items() if c == top)


def ingest_checkins(stream, grid: Grid, policy: str = "first-by-timestamp"):
    """Reduce check-in rows to one region per user.

    Parameters
    ----------
    stream : iterable of str or iterable of mappings
        Either lines of a CSV with header ``user_id,lat,lon,timestamp`` or
        already-parsed row dicts with those keys.
    grid : Grid
        Check-ins outside the grid box are skipped, never clamped.
    policy : {"first-by-timestamp", "most-frequent-region"}
        How several in-bounds check-ins of one user become one region. Ties
        go to the smaller region index.

    Returns
    -------
    users : UserLocations
        Sorted by user id.
    prior : ndarray
        Empirical distribution of the per-user regions.
    skipped : int
        Number of out-of-bounds rows.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
    rows = _rows(stream)
    visits: dict[str, list[tuple[float, int]]] = {}
    bad, skipped, total = [], 0, 0
    for lineno, row in rows:
        total += 1
        try:
            uid = row["user_id"].strip()
            lat, lon = float(row["lat"]), float(row["lon"])
            ts = parse_timestamp(row["timestamp"])
            if not uid or not (math.isfinite(lat) and math.isfinite(lon)):
                raise ValueError
        except (KeyError, ValueError, TypeError, AttributeError):
            bad.append(lineno)
            continue
        region = grid.locate(lat, lon)
        if region is None:
            skipped += 1
            continue
        visits.setdefault(uid, []).append((ts, region))
    if bad:
        shown = ", ".join(map(str, bad[:20])) + (" ..." if len(bad) > 20 else "")
        raise IngestError(f"{len(bad)} malformed check-in row(s) at line(s) {shown}",
                          bad_lines=bad, skipped=skipped)
    if not visits:
        raise IngestError(f"no in-bounds check-ins ({skipped} of {total} rows skipped)",
                          skipped=skipped)
    users = UserLocations.from_records(
        (uid, _reduce(visits[uid], policy)) for uid in sorted(visits))
    return users, empirical_prior(users.regions, grid.n_regions), skipped


def _rows(stream):
    stream = iter(stream)
    first = next(stream, None)
    if first is None:
        return
    if isinstance(first, dict):
        yield 1, first
        for i, row in enumerate(stream, start=2):
            yield i, row
        return

    def lines():
        yield first
        yield from stream

    reader = csv.DictReader(lines())
    missing = {"user_id", "lat", "lon", "timestamp"} - set(reader.fieldnames or ())
    if missing:
        raise IngestError(f"check-in header lacks column(s) {sorted(missing)}", bad_lines=[1])
    for row in reader:
        if None in row or any(v is None for v in row.values()):
            yield reader.line_num, {}
        else:
            yield reader.line_num, row


def mixture_prior(grid: Grid, components: Sequence[tuple[int, float, float]]) -> np.ndarray:
    """Analytic prior of a mixture of discretized isotropic Gaussian bumps.

    Each component ``(center_region, spread, weight)`` puts mass proportional
    to ``exp(-r**2 / (2 spread**2))`` on each cell, ``r`` being the lattice
    distance to the center, renormalized over the grid. ``spread == 0`` is a
    point mass.
    """
    if len(components) == 0:
        raise ValueError("mixture needs at least one component")
    weights = np.array([c[2] for c in components], dtype=float)
    if np.any(weights <= 0):
        raise ValueError("component weights must be positive")
    weights /= weights.sum()
    prior = np.zeros(grid.n_regions)
    for (center, spread, _), w in zip(components, weights):
        if spread < 0:
            raise ValueError("component spread must be nonnegative")
        r = grid.distances[int(grid._check(center))]
        if spread == 0:
            bump = (r == 0).astype(float)
        else:
            bump = np.exp(-0.5 * (r / spread) ** 2)
        prior += w * bump / bump.sum()
    return validate_prior(prior / prior.sum(), grid.n_regions)


def uniforms(seed: int, n: int, stream: int = 0) -> np.ndarray:
    """``n`` uniforms where entry ``i`` is a function of ``(seed, stream, i)`` only.

    Philox is counter based, so the i-th draw does not depend on how many
    other draws are taken or in which order.
    """
    key = np.random.SeedSequence([int(seed), int(stream)]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).random(n)


def sample_categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, u * cdf[-1], side="right")
    last = np.flatnonzero(probs > 0)[-1]
    return np.minimum(idx, last)


def synth_population(grid: Grid, components, n: int, seed: int = 0):
    """Draw ``n`` users from a Gaussian-bump mixture.

    Returns ``(users, prior)`` where ``prior`` is the exact mixture, not the
    sample histogram.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    prior = mixture_prior(grid, components)
    regions = sample_categorical(prior, uniforms(seed, n, stream=1))
    width = len(str(n - 1))
    users = UserLocations(tuple(f"u{i:0{width}d}" for i in range(n)), regions)
    return users, prior
