"""Quality-loss optimal geo-indistinguishable mechanisms."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .linprog import LinearProgram, assemble_lp
from .mechanism import GeoIndViolation, Mechanism, quality_loss, verify_geo_ind
from .simplex import LPSolution, solve_lp
from .spanner import build_spanner

log = logging.getLogger(__name__)

NEG_CLAMP = 1e-9
ROW_DRIFT = 1e-8
# the envelope may move an entry this far; anything larger is not round-off
REPAIR_LIMIT = 1e-6
# output columns whose every entry is below this are solver noise
ZERO_COLUMN = 1e-12


class SolverError(RuntimeError):
    def __init__(self, message, solution: LPSolution | None = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class OptimalResult:
    mechanism: Mechanism
    quality_loss: float
    lp: LinearProgram
    solution: LPSolution


def lipschitz_envelope(q: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Largest matrix below ``q`` whose columns satisfy ``v[x] <= scale[x, x'] v[x']``.

    ``scale`` must be ``exp(eps * d)`` for a metric ``d``; then
    ``v'[x] = min_x' scale[x, x'] v[x']`` meets every constraint exactly. On an
    LP solution it only removes solver round-off.
    """
    out = np.empty_like(q)
    step = max(1, 2_000_000 // (q.shape[0] ** 2))
    for s in range(0, q.shape[1], step):
        out[:, s:s + step] = (scale[:, :, None] * q[None, :, s:s + step]).min(axis=1)
    return out


def mechanism_from_solution(x, grid: Grid, epsilon: float, label: str = "OptQL",
                            audit_epsilon: float | None = None) -> Mechanism:
    """Turn raw LP values into an audited mechanism with an empty BOTTOM column.

    Negatives down to -1e-9 are clamped, output columns with no entry above
    1e-12 are zeroed, rows renormalized (drift at most 1e-8), and columns pulled onto their geo-indistinguishable envelope so
    round-off cannot fail the audit. Raises GeoIndViolation if the result
    still violates ``audit_epsilon`` (default ``epsilon``) or if the repair
    would move any entry by more than ``REPAIR_LIMIT``.
    """
    n = grid.n_regions
    q = np.asarray(x, dtype=float).reshape(n, n).copy()
    if np.any(q < -NEG_CLAMP):
        raise SolverError(f"solver returned entry {q.min()!r} below -{NEG_CLAMP}")
    q[q < 0] = 0.0
    q[:, q.max(axis=0) < ZERO_COLUMN] = 0.0
    drift = np.abs(q.sum(axis=1) - 1.0).max()
    if drift > ROW_DRIFT:
        raise SolverError(f"solver rows drift {drift:.3g} from 1")
    eps = epsilon if audit_epsilon is None else audit_epsilon
    scale = np.exp(eps * grid.distances)
    for _ in range(5):
        q /= q.sum(axis=1, keepdims=True)
        mech = Mechanism(np.hstack([q, np.zeros((n, 1))]), float(eps), label)
        report = verify_geo_ind(mech, grid, eps)
        if report.satisfied:
            break
        repaired = lipschitz_envelope(q, scale)
        if np.abs(repaired - q).max() > REPAIR_LIMIT:
            raise GeoIndViolation(report)
        q = repaired
    if not report.satisfied:
        raise GeoIndViolation(report)
    mat = mech.matrix
    mat.setflags(write=False)
    return mech


def build_optql(prior, grid: Grid, epsilon: float, mode: str = "full", delta: float = 1.09,
                relaxed: bool = False, solver: str = "auto",
                max_iterations: int | None = None) -> OptimalResult:
    """Mechanism minimizing expected distance under epsilon-geo-indistinguishability.

    Parameters
    ----------
    mode : {"full", "spanner"}
        ``"spanner"`` constrains only the edges of a greedy ``delta``-spanner,
        shrinking the program from O(n^3) to O(|E| n) rows at some loss of
        optimality. The guarantee for ``epsilon`` on the grid metric is kept.
    relaxed : bool
        Spanner mode only: spend ``epsilon`` on the spanner metric instead;
        the mechanism then carries budget ``epsilon * delta``.
    solver : {"auto", "simplex", "highs"}
        Passed to :func:`geopriv.simplex.solve_lp`.
    """
    if mode == "full":
        constraints = "full"
        audit_eps = epsilon
        label = "OptQL-full"
    elif mode == "spanner":
        constraints = build_spanner(grid, delta)
        audit_eps = epsilon * delta if relaxed else epsilon
        label = f"OptQL-spanner({delta:g}{',relaxed' if relaxed else ''})"
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lp = assemble_lp(prior, grid, epsilon, constraints, relaxed=relaxed)
    sol = solve_lp(lp, max_iterations=max_iterations, solver=solver)
    log.info("%s eps=%g: %s, objective %.6g, %d iterations (%s)", label, epsilon,
             sol.status, sol.objective, sol.iterations, sol.solver)
    if not sol.optimal:
        raise SolverError(f"{label} at epsilon={epsilon:g}: solver status {sol.status}", sol)
    mech = mechanism_from_solution(sol.x, grid, epsilon, label, audit_eps)
    ql, _ = quality_loss(prior, mech, grid)
    return OptimalResult(mech, ql, lp, sol)
