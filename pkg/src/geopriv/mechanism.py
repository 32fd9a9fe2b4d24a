"""Obfuscation mechanisms over a grid, their privacy audit and their use on data."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import Grid, UserLocations, sample_categorical, uniforms

#: Label of the "outside the area of interest" output. In matrices it is the
#: last column; in datasets it is stored as this integer.
BOTTOM = -1
ROW_ATOL = 1e-9


class GeoIndViolation(RuntimeError):
    """A mechanism that must be geo-indistinguishable failed the audit."""

    def __init__(self, report):
        super().__init__(f"geo-indistinguishability violated: ratio "
                         f"{report.max_violation_ratio:.6g} at {report.witness}")
        self.report = report


@dataclass(frozen=True)
class Mechanism:
    """Row-stochastic matrix from regions to regions plus BOTTOM.

    ``matrix[x, y]`` is the probability of reporting region ``y`` from true
    region ``x``; ``matrix[x, -1]`` is the BOTTOM probability.
    """

    matrix: np.ndarray = field(repr=False)
    epsilon: float
    label: str = "custom"

    @property
    def n_regions(self) -> int:
        return self.matrix.shape[0]

    @property
    def regions(self) -> np.ndarray:
        return self.matrix[:, :-1]

    @property
    def bottom(self) -> np.ndarray:
        return self.matrix[:, -1]

    def row(self, x: int) -> np.ndarray:
        return self.matrix[x]


def new_mechanism(matrix, grid: Grid | int, epsilon: float, label: str = "custom") -> Mechanism:
    """Validate ``matrix`` and wrap it as a Mechanism.

    ``matrix`` must be ``(n, n + 1)`` (BOTTOM last) for ``n`` grid regions;
    an ``(n, n)`` matrix is accepted and given an all-zero BOTTOM column.
    Rows within 1e-9 of summing to one are renormalized, others rejected.
    """
    n = grid if isinstance(grid, int) else grid.n_regions
    q = np.array(matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != n:
        raise ValueError(f"mechanism must have {n} rows, got shape {q.shape}")
    if q.shape[1] == n:
        q = np.hstack([q, np.zeros((n, 1))])
    elif q.shape[1] != n + 1:
        raise ValueError(f"mechanism must have {n + 1} columns, got {q.shape[1]}")
    if not np.all(np.isfinite(q)):
        raise ValueError("mechanism entries must be finite")
    if np.any(q < 0):
        x, y = np.argwhere(q < 0)[0]
        raise ValueError(f"negative entry {q[x, y]!r} at ({x}, {y})")
    sums = q.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > ROW_ATOL):
        x = int(np.argmax(off))
        raise ValueError(f"row {x} sums to {sums[x]!r}")
    q /= sums[:, None]
    q.setflags(write=False)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return Mechanism(q, float(epsilon), label)


def identity_mechanism(grid: Grid | int) -> Mechanism:
    n = grid if isinstance(grid, int) else grid.n_regions
    return new_mechanism(np.eye(n), n, math.inf, "identity")


def build_planar_laplacian(grid: Grid, epsilon: float) -> Mechanism:
    """Discrete planar Laplacian with a BOTTOM output.

    Region ``y`` gets ``exp(-epsilon * d(x, y)) / c`` and the remainder of the
    row goes to BOTTOM, where ``c`` is the largest row weight. The row(s)
    attaining ``c`` therefore never report BOTTOM.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    weights = np.exp(-epsilon * grid.distances)
    totals = weights.sum(axis=1)
    c = totals.max()
    q = np.empty((grid.n_regions, grid.n_regions + 1))
    q[:, :-1] = weights / c
    q[:, -1] = np.maximum((c - totals) / c, 0.0)
    q[np.argmax(totals), -1] = 0.0
    q.setflags(write=False)
    return Mechanism(q, float(epsilon), "PL")


def planar_laplacian_normalizer(grid: Grid, epsilon: float) -> float:
    return float(np.exp(-epsilon * grid.distances).sum(axis=1).max())


@dataclass(frozen=True)
class GeoIndReport:
    satisfied: bool
    max_violation_ratio: float
    witness: tuple | None
    include_bottom: bool
    epsilon: float
    tolerance: float


def verify_geo_ind(mech: Mechanism, grid: Grid, epsilon: float | None = None,
                   include_bottom: bool = False, tolerance: float = 1e-9) -> GeoIndReport:
    """Audit ``Q[x, y] <= exp(epsilon d(x, x')) Q[x', y]`` for every x, x', y.

    The reported ratio is the worst ``Q[x, y] / (exp(epsilon d) Q[x', y])``;
    ``0/0`` counts as 0 and a positive numerator over zero as infinity. The
    witness is ``(x, x', y)`` with ``y == BOTTOM`` for the BOTTOM column.
    """
    n = grid.n_regions
    if mech.matrix.shape != (n, n + 1):
        raise ValueError(f"mechanism shape {mech.matrix.shape} does not match {n}-region grid")
    eps = mech.epsilon if epsilon is None else float(epsilon)
    with np.errstate(invalid="ignore", over="ignore"):
        scale = np.where(grid.distances > 0, np.exp(eps * grid.distances), 1.0)
    q = mech.matrix if include_bottom else mech.regions
    worst, witness = 0.0, None
    chunk = max(1, 4_000_000 // (n * n))
    for start in range(0, q.shape[1], chunk):
        cols = q[:, start:start + chunk]
        num = cols[:, None, :]
        den = scale[:, :, None] * cols[None, :, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(num > 0, num / den, 0.0)
        k = int(np.argmax(ratio))
        if ratio.flat[k] > worst:
            worst = float(ratio.flat[k])
            x, xp, y = np.unravel_index(k, ratio.shape)
            y = start + int(y)
            witness = (int(x), int(xp), BOTTOM if y == n else y)
    return GeoIndReport(worst <= 1.0 + tolerance, worst, witness, include_bottom, eps, tolerance)


def quality_loss(prior, mech: Mechanism, grid: Grid) -> tuple[float, float]:
    """Expected grid distance between true and reported region.

    BOTTOM contributes no distance; its total mass is returned alongside as
    ``(ql, bottom_mass)``.
    """
    prior = np.asarray(prior, dtype=float)
    ql = float(np.einsum("x,xy,xy->", prior, mech.regions, grid.distances))
    return ql, float(prior @ mech.bottom)


def output_distribution(prior, mech: Mechanism) -> np.ndarray:
    """Marginal of the reported value: ``p[y] = sum_x prior[x] Q[x, y]``, BOTTOM last."""
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (mech.n_regions,):
        raise ValueError("prior and mechanism dimensions differ")
    return prior @ mech.matrix


@dataclass(frozen=True)
class ObfuscatedDataset:
    """Per-user true and reported regions; ``reported == BOTTOM`` for BOTTOM."""

    user_ids: tuple
    true_regions: np.ndarray = field(repr=False)
    reported: np.ndarray = field(repr=False)
    label: str = ""
    seed: int | None = None

    def __post_init__(self):
        true = np.array(self.true_regions, dtype=int).ravel()
        rep = np.array(self.reported, dtype=int).ravel()
        if not (len(self.user_ids) == true.size == rep.size):
            raise ValueError("dataset columns differ in length")
        true.setflags(write=False)
        rep.setflags(write=False)
        object.__setattr__(self, "user_ids", tuple(str(u) for u in self.user_ids))
        object.__setattr__(self, "true_regions", true)
        object.__setattr__(self, "reported", rep)

    def __len__(self):
        return len(self.user_ids)

    @property
    def bottom_mask(self) -> np.ndarray:
        return self.reported == BOTTOM

    def subset(self, mask) -> "ObfuscatedDataset":
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return ObfuscatedDataset(tuple(self.user_ids[i] for i in idx), self.true_regions[idx],
                                 self.reported[idx], self.label, self.seed)


def obfuscate_dataset(users: UserLocations, mech: Mechanism, seed: int = 0) -> ObfuscatedDataset:
    """Report one output per user, drawn from that user's row of ``mech``.

    User ``i``'s draw is a function of ``(seed, i)`` and the row alone.
    """
    regions = users.regions
    if regions.size and (regions.min() < 0 or regions.max() >= mech.n_regions):
        raise IndexError("user region out of range for mechanism")
    u = uniforms(seed, len(users))
    reported = np.empty(len(users), dtype=int)
    for x in np.unique(regions):
        sel = regions == x
        reported[sel] = sample_categorical(mech.matrix[x], u[sel])
    reported[reported == mech.n_regions] = BOTTOM
    return ObfuscatedDataset(users.user_ids, regions, reported, mech.label, seed)


def apply_postprocess(mech: Mechanism, f: Callable[[int], int] | Sequence[int]) -> Mechanism:
    """Merge output columns through a deterministic map ``f`` on output labels.

    ``f`` is a callable or a sequence indexed by region with the image of
    BOTTOM as its last entry; images are region indices or ``BOTTOM``.
    """
    n = mech.n_regions
    labels = list(range(n)) + [BOTTOM]
    if callable(f):
        images = [f(y) for y in labels]
    else:
        images = list(f)
        if len(images) != n + 1:
            raise ValueError(f"post-processing map needs {n + 1} entries")
    cols = []
    for z in images:
        if z != BOTTOM and not (0 <= z < n):
            raise ValueError(f"post-processing image {z!r} out of range")
        cols.append(n if z == BOTTOM else int(z))
    out = np.zeros_like(mech.matrix)
    np.add.at(out.T, cols, mech.matrix.T)
    out.setflags(write=False)
    return Mechanism(out, mech.epsilon, f"{mech.label}+post")
