"""The quality-loss linear program: assembly, CPLEX-LP export and solution import."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .grid import Grid, validate_prior
from .spanner import SpannerGraph


@dataclass(frozen=True)
class LinearProgram:
    """``min c @ x`` s.t. ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``, ``x >= 0``.

    For mechanism programs variable ``x * n + y`` is ``Q[x, y]`` and is named
    ``q_x_y``.
    """

    c: np.ndarray = field(repr=False)
    A_ub: sparse.csr_matrix = field(repr=False)
    b_ub: np.ndarray = field(repr=False)
    A_eq: sparse.csr_matrix = field(repr=False)
    b_eq: np.ndarray = field(repr=False)
    names: tuple = field(default=(), repr=False)
    n_regions: int | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        nv = c.size
        A_ub = sparse.csr_matrix(self.A_ub if self.A_ub is not None else (0, nv), dtype=float)
        A_eq = sparse.csr_matrix(self.A_eq if self.A_eq is not None else (0, nv), dtype=float)
        if A_ub.shape[0] == 0:
            A_ub = sparse.csr_matrix((0, nv))
        if A_eq.shape[0] == 0:
            A_eq = sparse.csr_matrix((0, nv))
        b_ub = np.asarray(self.b_ub if self.b_ub is not None else [], dtype=float).ravel()
        b_eq = np.asarray(self.b_eq if self.b_eq is not None else [], dtype=float).ravel()
        if A_ub.shape != (b_ub.size, nv) or A_eq.shape != (b_eq.size, nv):
            raise ValueError("constraint shapes do not match")
        for m in (c, A_ub.data, A_eq.data, b_ub, b_eq):
            if not np.all(np.isfinite(m)):
                raise ValueError("linear program coefficients must be finite")
        names = tuple(self.names) or tuple(f"x{i}" for i in range(nv))
        if len(names) != nv:
            raise ValueError("one name per variable required")
        for attr, val in (("c", c), ("A_ub", A_ub), ("A_eq", A_eq), ("b_ub", b_ub),
                          ("b_eq", b_eq), ("names", names)):
            object.__setattr__(self, attr, val)

    @property
    def n_variables(self) -> int:
        return self.c.size

    @property
    def n_inequalities(self) -> int:
        return self.A_ub.shape[0]

    @property
    def n_equalities(self) -> int:
        return self.A_eq.shape[0]

    def var_index(self, x: int, y: int) -> int:
        return x * self.n_regions + y

    def max_violation(self, x) -> float:
        """Largest constraint or bound violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        v = [0.0, float(np.max(-x, initial=0.0))]
        if self.n_inequalities:
            v.append(float(np.max(self.A_ub @ x - self.b_ub)))
        if self.n_equalities:
            v.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        return max(v)


def assemble_lp(prior, grid: Grid, epsilon: float, constraints="full",
                relaxed: bool = False) -> LinearProgram:
    """Quality-loss LP whose feasible set is the epsilon-geo-indistinguishable mechanisms.

    Parameters
    ----------
    constraints : "full" or SpannerGraph
        ``"full"`` writes ``Q[x, y] <= exp(eps d(x, x')) Q[x', y]`` for every
        ordered pair and output. With a spanner only ordered edge endpoints are
        constrained, each with exponent ``(eps / delta) * w``; chaining along
        shortest paths then bounds every pair by ``eps * d``.
    relaxed : bool
        Spanner mode only: use exponent ``eps * w``. The result is then
        guaranteed for ``eps * delta`` on the Euclidean metric, not ``eps``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = grid.n_regions
    prior = validate_prior(prior, n)
    d = grid.distances
    c = (prior[:, None] * d).ravel()

    if isinstance(constraints, str):
        if constraints != "full":
            raise ValueError(f"unknown constraint mode {constraints!r}")
        x, xp = np.nonzero(~np.eye(n, dtype=bool))
        factor = np.exp(epsilon * d[x, xp])
    elif isinstance(constraints, SpannerGraph):
        if constraints.n_regions != n:
            raise ValueError("spanner and grid sizes differ")
        if n > 1 and not constraints.is_connected():
            raise ValueError("spanner graph is disconnected")
        if constraints.edges:
            a, b, w = (np.array(t) for t in zip(*constraints.edges))
        else:
            a = b = w = np.zeros(0)
        x = np.concatenate([a, b]).astype(int)
        xp = np.concatenate([b, a]).astype(int)
        rate = epsilon if relaxed else epsilon / constraints.dilation
        factor = np.exp(rate * np.concatenate([w, w]))
    else:
        raise TypeError("constraints must be 'full' or a SpannerGraph")

    # one row per (pair, y): +1 on Q[x, y], -factor on Q[x', y]
    npair = x.size
    rows = np.arange(npair * n)
    pair = np.repeat(np.arange(npair), n)
    y = np.tile(np.arange(n), npair)
    A_ub = sparse.csr_matrix(
        (np.concatenate([np.ones(rows.size), -factor[pair]]),
         (np.concatenate([rows, rows]), np.concatenate([x[pair] * n + y, xp[pair] * n + y]))),
        shape=(rows.size, n * n))
    A_eq = sparse.csr_matrix(sparse.kron(sparse.identity(n), np.ones((1, n))))
    names = tuple(f"q_{i}_{j}" for i in range(n) for j in range(n))
    return LinearProgram(c, A_ub, np.zeros(rows.size), A_eq, np.ones(n), names, n)


def _fmt(v: float) -> str:
    return repr(float(v))


def _expr(coefs, names, per_line=6) -> list[str]:
    terms = []
    for v, name in zip(coefs, names):
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        terms.append(f"{sign} {name}" if mag == 1.0 else f"{sign} {_fmt(mag)} {name}")
    if not terms:
        terms = [f"+ 0 {names[0]}" if names else "+ 0"]
    if terms[0].startswith("+ "):
        terms[0] = terms[0][2:]
    return [" ".join(terms[i:i + per_line]) for i in range(0, len(terms), per_line)]


def export_lp(lp: LinearProgram) -> str:
    """Render ``lp`` in CPLEX-LP text format."""
    out = io.StringIO()
    w = out.write
    w(f"\\ {lp.n_variables} variables, {lp.n_inequalities} inequalities, "
      f"{lp.n_equalities} equalities\n")
    w("Minimize\n")
    nz = np.flatnonzero(lp.c)
    if nz.size == 0 and lp.n_variables:
        nz = np.array([0])
    lines = _expr(lp.c[nz], [lp.names[i] for i in nz])
    w(f" obj: {lines[0]}\n")
    for line in lines[1:]:
        w(f"   {line}\n")
    w("Subject To\n")
    for tag, A, b, sense in (("g", lp.A_ub, lp.b_ub, "<="), ("e", lp.A_eq, lp.b_eq, "=")):
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            idx, val = A.indices[lo:hi], A.data[lo:hi]
            lines = _expr(val, [lp.names[i] for i in idx])
            lines[-1] += f" {sense} {_fmt(b[r])}"
            w(f" {tag}{r}: {lines[0]}\n")
            for line in lines[1:]:
                w(f"   {line}\n")
    w("Bounds\n")
    for name in lp.names:
        w(f" {name} >= 0\n")
    w("End\n")
    return out.getvalue()


_TOKEN = re.compile(r"\s*(<=|>=|=<|=>|=|[+-]|[A-Za-z_][\w.\[\]]*\s*:|"
                    r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[A-Za-z_][\w.\[\]]*)")
_SECTIONS = {"minimize": "obj", "minimum": "obj", "min": "obj", "subject to": "st",
             "such that": "st", "st": "st", "s.t.": "st", "bounds": "bounds", "bound": "bounds",
             "end": "end"}


def _tokens(text):
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse LP text near {text[pos:pos + 30]!r}")
        out.append(m.group(1).replace(" ", ""))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _linear(tokens):
    """Parse ``[+-] [coef] var ...`` into ``{var: coef}``."""
    coefs, sign, coef = {}, 1.0, None
    for tok in tokens:
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
        elif _is_number(tok):
            coef = float(tok)
        else:
            coefs[tok] = coefs.get(tok, 0.0) + sign * (1.0 if coef is None else coef)
            sign, coef = 1.0, None
    return coefs


def parse_lp(text: str) -> LinearProgram:
    """Read a minimization in CPLEX-LP format (as written by :func:`export_lp`).

    Only nonnegative variables are supported; ``>= 0`` bound lines are
    accepted and any other bound is rejected.
    """
    sections = {"obj": [], "st": [], "bounds": []}
    current = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = _SECTIONS.get(line.lower())
        if key == "end":
            break
        if key:
            current = key
            continue
        if line.lower() in ("maximize", "maximum", "max"):
            raise ValueError("only minimization programs are supported")
        if current is None:
            raise ValueError(f"LP text outside any section: {line!r}")
        sections[current].append(line)

    order: dict[str, int] = {}

    def note(names):
        for nm in names:
            order.setdefault(nm, len(order))

    obj_toks = _tokens(" ".join(sections["obj"]))
    if obj_toks and obj_toks[0].endswith(":"):
        obj_toks = obj_toks[1:]
    obj = _linear(obj_toks)
    note(obj)

    ub, eq = [], []
    toks = _tokens(" ".join(sections["st"]))
    i = 0
    while i < len(toks):
        if toks[i].endswith(":"):
            i += 1
        j = i
        while toks[j] not in ("<=", ">=", "=<", "=>", "="):
            j += 1
        lhs, sense = _linear(toks[i:j]), toks[j]
        k = j + 1
        sign = 1.0
        if toks[k] in "+-":
            sign = -1.0 if toks[k] == "-" else 1.0
            k += 1
        rhs = sign * float(toks[k])
        note(lhs)
        if sense in ("<=", "=<"):
            ub.append((lhs, rhs))
        elif sense in (">=", "=>"):
            ub.append(({v: -c for v, c in lhs.items()}, -rhs))
        else:
            eq.append((lhs, rhs))
        i = k + 1

    for line in sections["bounds"]:
        m = re.fullmatch(r"([^\s<>=]+)\s*>=\s*([+-]?[\d.eE+-]+)", line)
        if not m or float(m.group(2)) != 0.0:
            raise ValueError(f"unsupported bound {line!r}")
        note([m.group(1)])

    names = tuple(order)

    def matrix(rows):
        data, ri, ci = [], [], []
        for r, (lhs, _) in enumerate(rows):
            for v, cf in lhs.items():
                data.append(cf)
                ri.append(r)
                ci.append(order[v])
        return sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), len(names)))

    c = np.zeros(len(names))
    for v, cf in obj.items():
        c[order[v]] = cf
    n = None
    if names and all(re.fullmatch(r"q_\d+_\d+", nm) for nm in names):
        side = int(round(len(names) ** 0.5))
        n = side if side * side == len(names) else None
    return LinearProgram(c, matrix(ub), [r for _, r in ub], matrix(eq), [r for _, r in eq],
                         names, n)


def import_solution(lp: LinearProgram, stream) -> np.ndarray:
    """Variable values from CSV ``variable,value`` lines; absent variables are 0."""
    index = {nm: i for i, nm in enumerate(lp.names)}
    x = np.zeros(lp.n_variables)
    reader = csv.reader(stream)
    for lineno, row in enumerate(reader, start=1):
        if not row or row[0].startswith("#"):
            continue
        if lineno == 1 and row[0].strip().lower() == "variable":
            continue
        if len(row) != 2:
            raise ValueError(f"line {lineno}: expected 'variable,value'")
        name, value = row[0].strip(), row[1].strip()
        if name not in index:
            raise ValueError(f"line {lineno}: unknown variable {name!r}")
        x[index[name]] = float(value)
    return x
