"""CSV/JSON readers and writers for grids, priors, users, mechanisms and datasets."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import Grid, UserLocations, validate_prior
from .mechanism import BOTTOM, Mechanism, ObfuscatedDataset, new_mechanism


def _g(v: float, digits: int = 12) -> str:
    return format(float(v), f".{digits}g")


def write_grid(grid: Grid, path):
    Path(path).write_text(json.dumps(grid.to_dict(), indent=2) + "\n")


def read_grid(path) -> Grid:
    return Grid.from_dict(json.loads(Path(path).read_text()))


def write_prior(prior, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["region", "prob"])
        for r, p in enumerate(prior):
            w.writerow([r, _g(p)])


def read_prior(path, n_regions: int | None = None) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = n_regions if n_regions is not None else max(int(r["region"]) for r in rows) + 1
    p = np.zeros(n)
    for r in rows:
        p[int(r["region"])] = float(r["prob"])
    # 12 significant digits leave up to ~1e-10 of rounding per entry
    s = p.sum()
    if abs(s - 1) < 1e-6:
        p = p / s
    return validate_prior(p, n)


def write_users(users: UserLocations, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "region"])
        w.writerows(users.records())


def read_users(path) -> UserLocations:
    with open(path, newline="") as fh:
        return UserLocations.from_records((r["user_id"], int(r["region"])) for r in csv.DictReader(fh))


def write_mechanism(mech: Mechanism, grid: Grid, path):
    n = mech.n_regions
    with open(path, "w", newline="") as fh:
        fh.write(f"# epsilon={mech.epsilon!r}\n# label={mech.label}\n"
                 f"# rows={grid.rows}\n# cols={grid.cols}\n")
        w = csv.writer(fh)
        w.writerow(["input", *range(n), "BOTTOM"])
        for x in range(n):
            w.writerow([x, *(_g(v) for v in mech.matrix[x])])


def read_mechanism(path) -> tuple[Mechanism, dict]:
    """Read a mechanism file; returns the mechanism and its metadata block."""
    meta, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
    rows = list(csv.reader(body))
    header, data = rows[0], rows[1:]
    if header[0] != "input" or header[-1] != "BOTTOM":
        raise ValueError(f"{path}: not a mechanism file")
    n = len(header) - 2
    q = np.zeros((n, n + 1))
    for row in data:
        q[int(row[0])] = [float(v) for v in row[1:]]
    # undo 12-digit rounding before the strict row-sum check
    sums = q.sum(axis=1, keepdims=True)
    if np.all(np.abs(sums - 1) < 1e-6):
        q = q / sums
    mech = new_mechanism(q, n, float(meta.get("epsilon", 0.0)), meta.get("label", "custom"))
    return mech, meta


def grid_from_meta(meta: dict) -> Grid:
    return Grid((0.0, 0.0), int(meta["rows"]), int(meta["cols"]), 1.0, 1.0)


def write_dataset(ds: ObfuscatedDataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "true_region", "reported"])
        for u, x, y in zip(ds.user_ids, ds.true_regions.tolist(), ds.reported.tolist()):
            w.writerow([u, x, "BOTTOM" if y == BOTTOM else y])


def read_dataset(path) -> ObfuscatedDataset:
    ids, true, rep = [], [], []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            ids.append(r["user_id"])
            true.append(int(r["true_region"]))
            rep.append(BOTTOM if r["reported"] == "BOTTOM" else int(r["reported"]))
    return ObfuscatedDataset(tuple(ids), true, rep, label=Path(path).stem)


def write_table(rows: list[dict], path, digits: int = 6):
    """Write dict rows as CSV, floats at ``digits`` significant digits."""
    if not rows:
        Path(path).write_text("")
        return
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (_g(v, digits) if isinstance(v, float) else v) for k, v in r.items()})
