"""Dense two-phase tableau simplex with Bland's anti-cycling rule."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .linprog import LinearProgram

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

# above this many tableau entries "auto" hands the program to HiGHS
DENSE_LIMIT = 6_000_000


@dataclass(frozen=True)
class LPSolution:
    status: str
    objective: float
    x: np.ndarray = field(repr=False)
    iterations: int
    solver: str = "simplex"

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Rows ``0..m-1`` are constraints, row ``m`` the reduced costs; last column is the rhs.

    ``T0`` keeps the phase's starting tableau so the current one can be
    rebuilt from the basis every ``refactor`` pivots, which stops round-off
    from compounding over long degenerate runs.

    Entering columns are priced by Dantzig's rule (most negative reduced
    cost). After ``stall`` consecutive pivots without objective progress the
    tableau switches to Bland's rule until the objective moves again, which
    rules out cycling.
    """

    stall = 50

    def __init__(self, T, basis, tol, pivot_tol=1e-9):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.pivot_tol = pivot_tol
        self.iterations = 0
        self.T0 = T.copy()

    @property
    def refactor(self):
        return max(100, self.T.shape[0])

    def restart(self):
        self.T0 = self.T.copy()

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        if rows.size:
            prow = T[r]
            cols = np.flatnonzero(prow)
            T[np.ix_(rows, cols)] -= np.outer(col[rows], prow[cols])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j

    def reinvert(self):
        m = self.T.shape[0] - 1
        B = self.T0[:m, self.basis]
        try:
            body = np.linalg.solve(B, self.T0[:m])
        except np.linalg.LinAlgError:
            return
        self.T[:m] = body
        self.T[m] = self.T0[m] - self.T0[m, self.basis] @ body
        self.T[np.arange(m), self.basis] = 1.0

    def run(self, max_iter):
        """Pivot to optimality; return a status."""
        m = self.T.shape[0] - 1
        since = 0
        stalled = 0
        while True:
            T = self.T
            rhs = T[:m, -1]
            rhs[(rhs < 0) & (rhs > -1e-9)] = 0.0
            red = T[m, :-1]
            cand = np.flatnonzero(red < -self.tol)
            if cand.size == 0:
                return OPTIMAL
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            bland = stalled >= self.stall
            j = cand[0] if bland else cand[np.argmin(red[cand])]
            colj = T[:m, j]
            pos = np.flatnonzero(colj > self.pivot_tol)
            if pos.size == 0:
                return UNBOUNDED
            ratios = rhs[pos] / colj[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
            if bland:
                r = ties[np.argmin(self.basis[ties])]  # lowest-index leaving variable
            else:
                r = ties[np.argmax(colj[ties])]  # largest pivot among ties
            obj = T[m, -1]
            self.pivot(r, j)
            self.iterations += 1
            stalled = stalled + 1 if T[m, -1] <= obj + 1e-13 * max(1.0, abs(obj)) else 0
            since += 1
            if since >= self.refactor:
                self.reinvert()
                since = 0


def simplex(lp: LinearProgram, max_iterations: int = 1_000_000, tol: float = 1e-10) -> LPSolution:
    """Solve ``lp`` with a dense two-phase simplex.

    Phase one minimizes the sum of artificial variables added to equality rows
    and to inequality rows with a negative right-hand side; other inequality
    rows start with their slack in the basis. Both phases price by Dantzig's
    rule and fall back to Bland's rule while degenerate, so they cannot cycle.
    """
    nv = lp.n_variables
    A_ub = lp.A_ub.toarray()
    A_eq = lp.A_eq.toarray()
    b_ub, b_eq = lp.b_ub.copy(), lp.b_eq.copy()
    m_ub, m_eq = b_ub.size, b_eq.size
    m = m_ub + m_eq

    # ub row i: A x + s_i = b; flip rows with b < 0 so every rhs is >= 0
    flip_ub = b_ub < 0
    flip_eq = b_eq < 0
    A = np.vstack([A_ub, A_eq]) if m else np.zeros((0, nv))
    b = np.concatenate([b_ub, b_eq])
    sign = np.where(np.concatenate([flip_ub, flip_eq]), -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    needs_art = np.concatenate([flip_ub, np.ones(m_eq, dtype=bool)])
    art_rows = np.flatnonzero(needs_art)
    n_art = art_rows.size
    ncol = nv + m_ub + n_art

    T = np.zeros((m + 1, ncol + 1))
    T[:m, :nv] = A
    T[np.arange(m_ub), nv + np.arange(m_ub)] = sign[:m_ub]
    T[art_rows, nv + m_ub + np.arange(n_art)] = 1.0
    T[:m, -1] = b
    basis = np.empty(m, dtype=int)
    basis[:m_ub] = nv + np.arange(m_ub)
    basis[art_rows] = nv + m_ub + np.arange(n_art)

    tab = _Tableau(T, basis, tol)
    is_art = np.zeros(ncol, dtype=bool)
    is_art[nv + m_ub:] = True

    if n_art:
        # phase one objective: sum of artificials, priced out of the basis
        T[m, :] = 0.0
        T[m, nv + m_ub:ncol] = 1.0
        T[m] -= T[art_rows].sum(axis=0)
        tab.restart()
        status = tab.run(max_iterations)
        if status == ITERATION_LIMIT:
            return _result(status, tab, lp, nv)
        infeas = -T[m, -1]
        if infeas > max(1e-9, tol * (1 + np.abs(b).max(initial=0))):
            return _result(INFEASIBLE, tab, lp, nv)
        # drive zero-level artificials out of the basis, dropping redundant rows
        keep = np.ones(m + 1, dtype=bool)
        for r in range(m):
            if not is_art[tab.basis[r]]:
                continue
            row = T[r, :nv + m_ub]
            nz = np.flatnonzero(np.abs(row) > 1e-9)
            if nz.size:
                tab.pivot(r, nz[0])
            else:
                keep[r] = False
        if not keep.all():
            tab.T = T = T[keep]
            tab.basis = tab.basis[keep[:m]]
            m = T.shape[0] - 1

    # phase two: drop artificial columns, install the real objective
    T = np.delete(tab.T, np.arange(nv + m_ub, ncol), axis=1)
    tab.T = T
    ncol = nv + m_ub
    T[m, :] = 0.0
    T[m, :nv] = lp.c
    for r, j in enumerate(tab.basis):
        if T[m, j] != 0.0:
            T[m] -= T[m, j] * T[r]
    tab.restart()
    status = tab.run(max_iterations)
    return _result(status, tab, lp, nv)


def _result(status, tab, lp, nv):
    T = tab.T
    m = T.shape[0] - 1
    x = np.zeros(T.shape[1] - 1)
    x[tab.basis] = T[:m, -1]
    x = x[:nv]
    obj = float(lp.c @ x) if status == OPTIMAL else np.nan
    log.debug("simplex %s after %d pivots", status, tab.iterations)
    return LPSolution(status, obj, x, tab.iterations, "simplex")


def _highs(lp: LinearProgram, max_iterations) -> LPSolution:
    from scipy.optimize import linprog

    opts = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10,
            "presolve": True}
    if max_iterations is not None:
        opts["maxiter"] = int(max_iterations)
    res = linprog(lp.c, A_ub=lp.A_ub if lp.n_inequalities else None,
                  b_ub=lp.b_ub if lp.n_inequalities else None,
                  A_eq=lp.A_eq if lp.n_equalities else None,
                  b_eq=lp.b_eq if lp.n_equalities else None,
                  bounds=(0, None), method="highs-ipm", options=opts)
    status = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status)
    if status is None:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    x = res.x if res.x is not None else np.full(lp.n_variables, np.nan)
    obj = float(res.fun) if status == OPTIMAL else np.nan
    return LPSolution(status, obj, np.asarray(x), int(getattr(res, "nit", 0)), "highs")


def solve_lp(lp: LinearProgram, max_iterations: int | None = None,
             solver: str = "auto") -> LPSolution:
    """Solve ``lp``.

    ``solver`` is ``"simplex"`` (the bundled dense solver), ``"highs"``
    (scipy's HiGHS interior point with crossover) or ``"auto"``, which uses the bundled solver
    whenever its dense tableau stays under ``DENSE_LIMIT`` entries.
    """
    if solver == "auto":
        m = lp.n_inequalities + lp.n_equalities
        solver = "simplex" if (m + 1) * (lp.n_variables + m + 1) <= DENSE_LIMIT else "highs"
    if solver == "simplex":
        return simplex(lp, 1_000_000 if max_iterations is None else max_iterations)
    if solver == "highs":
        return _highs(lp, max_iterations)
    raise ValueError(f"unknown solver {solver!r}")
