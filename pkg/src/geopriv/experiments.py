"""Config-driven sweeps over mechanisms and privacy budgets."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .anonymity import asymptotic_kappa, bayes_vulnerability, delete_for_k, empirical_kappa, kappa_sup
from .grid import Grid, empirical_prior, ingest_checkins, synth_population
from .mechanism import (BOTTOM, Mechanism, ObfuscatedDataset, build_planar_laplacian,
                        identity_mechanism, obfuscate_dataset, quality_loss)
from .optimal import build_optql

log = logging.getLogger(__name__)

#: 10x10 stand-in for Manhattan: one dominant downtown bump and two smaller ones.
BENCHMARK_COMPONENTS = ((23, 0.8, 0.6), (66, 1.2, 0.25), (81, 2.0, 0.15))
BENCHMARK_GRID = {"rows": 10, "cols": 10, "origin": [0.0, 0.0], "cell_size": [1.0, 1.0]}
DEFAULT_EPSILONS = tuple(round(0.1 * i, 1) for i in range(1, 11))


@dataclass(frozen=True)
class MechanismSpec:
    kind: str  # "identity", "PL", "OptQL-full" or "OptQL-spanner"
    delta: float = 1.09
    relaxed: bool = False
    solver: str = "auto"

    @classmethod
    def parse(cls, item) -> "MechanismSpec":
        if isinstance(item, MechanismSpec):
            return item
        if isinstance(item, str):
            item = {"name": item}
        name = item.get("name", item.get("kind"))
        aliases = {"identity": "identity", "pl": "PL", "optql": "OptQL-full",
                   "optql-full": "OptQL-full", "optql-spanner": "OptQL-spanner"}
        kind = aliases.get(str(name).lower())
        if kind is None:
            raise ValueError(f"unknown mechanism {name!r}")
        spec = cls(kind, float(item.get("delta", 1.09)), bool(item.get("relaxed", False)),
                   item.get("solver", "auto"))
        if spec.delta < 1:
            raise ValueError("delta must be >= 1")
        return spec

    @property
    def label(self) -> str:
        if self.kind == "OptQL-spanner":
            return f"OptQL-spanner({self.delta:g})"
        return self.kind


@dataclass
class ExperimentConfig:
    grid: dict = field(default_factory=lambda: dict(BENCHMARK_GRID))
    data: dict = field(default_factory=lambda: {
        "synthetic": {"components": [list(c) for c in BENCHMARK_COMPONENTS], "n": 2000}})
    mechanisms: list = field(default_factory=lambda: ["PL", {"name": "OptQL-spanner", "delta": 1.09}])
    epsilons: list = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    ks: list = field(default_factory=lambda: [10, 100])
    alphas: list = field(default_factory=lambda: [0.05, 0.1])
    seed: int = 42
    output_dir: str = "results"
    prior: str = "empirical"
    converge_epsilon: float = 1.0
    sizes: list = field(default_factory=lambda: [100, 250, 500, 1000, 2000])
    trials: int = 10
    n_jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        for e in self.epsilons:
            if not 0 < e <= 10:
                raise ValueError(f"epsilon {e} outside (0, 10]")
        if not 0 < self.converge_epsilon <= 10:
            raise ValueError("converge_epsilon outside (0, 10]")
        if any(int(k) != k or k < 1 for k in self.ks):
            raise ValueError("k values must be integers >= 1")
        if any(not 0 <= a <= 1 for a in self.alphas):
            raise ValueError("alpha values must lie in [0, 1]")
        if self.prior not in ("empirical", "analytic"):
            raise ValueError("prior must be 'empirical' or 'analytic'")
        if not ("checkins" in self.data or "synthetic" in self.data):
            raise ValueError("data needs a 'checkins' path or a 'synthetic' section")
        self.specs  # parses mechanism entries

    @property
    def specs(self) -> list[MechanismSpec]:
        return [MechanismSpec.parse(m) for m in self.mechanisms]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        d = dict(d)
        if "seed" not in d and os.environ.get("GEOPRIV_SEED"):
            d["seed"] = int(os.environ["GEOPRIV_SEED"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Population:
    grid: Grid
    users: object
    prior: np.ndarray
    skipped: int = 0


def load_population(config: ExperimentConfig) -> Population:
    grid = Grid.from_dict(config.grid)
    if "checkins" in config.data:
        with open(config.data["checkins"], newline="", encoding="utf-8") as fh:
            users, prior, skipped = ingest_checkins(
                fh, grid, config.data.get("policy", "first-by-timestamp"))
        return Population(grid, users, prior, skipped)
    syn = config.data["synthetic"]
    comps = [tuple(c) for c in syn.get("components", BENCHMARK_COMPONENTS)]
    users, analytic = synth_population(grid, comps, int(syn.get("n", 2000)), config.seed)
    prior = analytic if config.prior == "analytic" else empirical_prior(users.regions, grid.n_regions)
    return Population(grid, users, prior)


def build_mechanism(spec: MechanismSpec, grid: Grid, prior, epsilon: float) -> Mechanism:
    if spec.kind == "identity":
        return identity_mechanism(grid)
    if spec.kind == "PL":
        return build_planar_laplacian(grid, epsilon)
    mode = "full" if spec.kind == "OptQL-full" else "spanner"
    return build_optql(prior, grid, epsilon, mode=mode, delta=spec.delta,
                       relaxed=spec.relaxed, solver=spec.solver).mechanism


@dataclass(frozen=True)
class SweepRow:
    mechanism: str
    epsilon: float
    ql: float
    stay_fraction: float
    bottom_fraction: float
    deleted_fraction: dict
    kappa_star: float
    posterior_vulnerability: float
    expected_ql: float = float("nan")

    def as_dict(self) -> dict:
        d = {"mechanism": self.mechanism, "epsilon": float(self.epsilon), "ql": self.ql,
             "expected_ql": self.expected_ql, "stay_fraction": self.stay_fraction,
             "bottom_fraction": self.bottom_fraction}
        for k, v in self.deleted_fraction.items():
            d[f"deleted_k{k}"] = v
        d["kappa_star"] = self.kappa_star
        d["posterior_vulnerability"] = self.posterior_vulnerability
        return d


def dataset_utility(ds: ObfuscatedDataset, grid: Grid) -> tuple[float, float]:
    """Mean distance and stay fraction over users who did not report BOTTOM."""
    ok = ~ds.bottom_mask
    if not ok.any():
        return float("nan"), float("nan")
    x, y = ds.true_regions[ok], ds.reported[ok]
    return float(grid.distances[x, y].mean()), float(np.mean(x == y))


def sweep_point(spec: MechanismSpec, epsilon: float, pop: Population, ks, seed: int,
                mech: Mechanism | None = None) -> SweepRow:
    """One (mechanism, epsilon) cell of the sweep.

    Every point obfuscates with the same seed, so differences between rows
    come from the mechanisms and not from sampling noise.
    """
    mech = mech or build_mechanism(spec, pop.grid, pop.prior, epsilon)
    ds = obfuscate_dataset(pop.users, mech, seed)
    ql, stay = dataset_utility(ds, pop.grid)
    n = len(ds)
    deleted = {int(k): delete_for_k(ds, int(k))[1] / n for k in ks}
    return SweepRow(spec.label, float(epsilon), ql, stay, float(ds.bottom_mask.mean()), deleted,
                    asymptotic_kappa(pop.prior, mech),
                    bayes_vulnerability(pop.prior, mech)[1],
                    quality_loss(pop.prior, mech, pop.grid)[0])


def run_sweep(config: ExperimentConfig, population: Population | None = None) -> list[SweepRow]:
    """Evaluate every (mechanism, epsilon) pair of ``config``."""
    pop = population or load_population(config)
    tasks = [(spec, eps) for spec in config.specs for eps in config.epsilons]
    if config.n_jobs != 1:
        from joblib import Parallel, delayed
        return list(Parallel(n_jobs=config.n_jobs)(
            delayed(sweep_point)(s, e, pop, config.ks, config.seed) for s, e in tasks))
    rows = []
    for spec, eps in tasks:
        log.info("sweep %s eps=%g", spec.label, eps)
        rows.append(sweep_point(spec, eps, pop, config.ks, config.seed))
    return rows


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def convergence_study(config: ExperimentConfig, sizes=None, trials: int | None = None,
                      population: Population | None = None, mechanisms: dict | None = None):
    """Empirical kappa of random sub-populations against the population value.

    For each size, ``trials`` subsamples are drawn without replacement,
    obfuscated at ``config.converge_epsilon`` and scored with
    :func:`empirical_kappa` at each alpha (BOTTOM excluded).

    Returns
    -------
    table : list of dict
        ``size, mechanism, alpha, mean_kappa, std_kappa`` rows.
    reference : list of dict
        ``mechanism, alpha, population_kappa`` rows from (prior, mechanism);
        the identity mechanism appears as ``prior``.
    """
    pop = population or load_population(config)
    sizes = list(config.sizes if sizes is None else sizes)
    trials = config.trials if trials is None else trials
    big = len(pop.users)
    for s in sizes:
        if not 1 <= s <= big:
            raise ValueError(f"subsample size {s} outside [1, {big}]")
    eps = config.converge_epsilon
    if mechanisms is None:
        mechanisms = {"prior": identity_mechanism(pop.grid)}
        for spec in config.specs:
            if spec.kind != "identity":
                mechanisms[spec.label] = build_mechanism(spec, pop.grid, pop.prior, eps)
    table, reference = [], []
    for label, mech in mechanisms.items():
        for a in config.alphas:
            reference.append({"mechanism": label, "alpha": float(a),
                              "population_kappa": kappa_sup(pop.prior, mech, a)})
        for s in sizes:
            est = np.zeros((trials, len(config.alphas)))
            for t in range(trials):
                rng = np.random.Generator(np.random.Philox(
                    np.random.SeedSequence([config.seed, s, t])))
                idx = np.sort(rng.choice(big, size=s, replace=False)) if s < big else np.arange(big)
                ds = obfuscate_dataset(pop.users.subset(idx), mech,
                                       _derived_seed(config.seed, s, t, 1))
                est[t] = [empirical_kappa(ds, a) for a in config.alphas]
            for i, a in enumerate(config.alphas):
                table.append({"size": int(s), "mechanism": label, "alpha": float(a),
                              "mean_kappa": float(est[:, i].mean()),
                              "std_kappa": float(est[:, i].std())})
    return table, reference


def heatmap_counts(ds: ObfuscatedDataset, grid: Grid) -> tuple[np.ndarray, int]:
    rep = ds.reported
    regions = rep[rep != BOTTOM]
    if regions.size and (regions.min() < 0 or regions.max() >= grid.n_regions):
        raise ValueError("dataset regions do not fit the grid")
    counts = np.bincount(regions, minlength=grid.n_regions).reshape(grid.rows, grid.cols)
    return counts, int((rep == BOTTOM).sum())


def emit_heatmap(ds: ObfuscatedDataset, grid: Grid, path) -> np.ndarray:
    """Write the per-region report counts as a ``rows x cols`` integer CSV.

    Row ``i`` of the file is grid row ``i``; the BOTTOM count follows as a
    ``# BOTTOM,<count>`` comment line.
    """
    counts, bottom = heatmap_counts(ds, grid)
    with open(path, "w") as fh:
        for row in counts:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
        fh.write(f"# BOTTOM,{bottom}\n")
    return counts


def read_heatmap(path) -> tuple[np.ndarray, int]:
    rows, bottom = [], 0
    for line in Path(path).read_text().splitlines():
        if line.startswith("# BOTTOM,"):
            bottom = int(line.split(",", 1)[1])
        elif line.strip():
            rows.append([int(v) for v in line.split(",")])
    return np.array(rows, dtype=int), bottom
