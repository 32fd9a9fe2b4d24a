"""Anonymity of obfuscated location data: k-anonymity, asymptotic anonymity, deletion."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mechanism import BOTTOM, Mechanism, ObfuscatedDataset, output_distribution

# slack for comparing coverage fractions that should tie exactly
_EPS = 1e-12


@dataclass(frozen=True)
class AnonymityReport:
    """Anonymity summary of one dataset.

    ``counts`` maps each reported region (and BOTTOM when included) to the
    number of users reporting it. ``kappa_sup`` is the empirical analogue of
    the asymptotic level, ``min n(y) / n``.
    """

    counts: dict = field(repr=False)
    n: int
    max_k: int
    kappa_sup: float
    bottom_count: int = 0
    include_bottom: bool = False
    alpha_at: dict = field(default_factory=dict, repr=False)

    @property
    def bottom_fraction(self) -> float:
        total = self.n + (0 if self.include_bottom else self.bottom_count)
        return self.bottom_count / total if total else 0.0

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "max_k": self.max_k,
            "kappa_sup": self.kappa_sup,
            "counts": {("BOTTOM" if y == BOTTOM else str(y)): c for y, c in sorted(self.counts.items())},
            "bottom_fraction": self.bottom_fraction,
            "alpha_at": {repr(k): v for k, v in self.alpha_at.items()},
        }, indent=2)


def _counts(reported: np.ndarray, include_bottom: bool) -> dict:
    values, counts = np.unique(reported, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts) if include_bottom or v != BOTTOM}


def dataset_k_anonymity(ds: ObfuscatedDataset, include_bottom: bool = False,
                        kappas=()) -> AnonymityReport:
    """Count reports per output and take the largest k the dataset satisfies.

    With ``include_bottom=False`` BOTTOM reports are left out of the counts
    and of ``n``, and are tallied in ``bottom_count`` instead. ``kappas``
    optionally fills ``alpha_at`` with the empirical minimal error rate at
    each level.
    """
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    counts = _counts(ds.reported, include_bottom)
    n = sum(counts.values())
    max_k = min(counts.values()) if counts else 0
    freq = np.array(list(counts.values()), dtype=float) / n if n else np.zeros(0)
    alpha_at = {float(k): _alpha_min(freq, k) for k in kappas}
    return AnonymityReport(counts, n, max_k, max_k / n if n else 0.0,
                           int(ds.bottom_mask.sum()), include_bottom, alpha_at)


def _marginal(prior, mech: Mechanism, include_bottom: bool) -> np.ndarray:
    p = output_distribution(prior, mech)
    return p if include_bottom else p[:-1]


def asymptotic_kappa(prior, mech: Mechanism, include_bottom: bool = False) -> float:
    """Smallest positive output probability.

    ``(prior, mech)`` is kappa-asymptotically anonymous for every kappa
    strictly below the returned value.
    """
    p = _marginal(prior, mech, include_bottom)
    pos = p[p > 0]
    return float(pos.min()) if pos.size else 0.0


def _alpha_min(p: np.ndarray, kappa: float) -> float:
    total = p[p > 0].sum()
    if total == 0:
        return 0.0
    return float(1.0 - p[p > kappa].sum() / total)


def kappa_alpha(prior, mech: Mechanism, kappa: float, include_bottom: bool = False):
    """Minimal error rate at level ``kappa`` and the predicate it induces.

    Returns ``(alpha_min, holds)`` where ``holds(alpha)`` tells whether
    ``(prior, mech)`` is (kappa, alpha)-asymptotically anonymous. The mass
    counted as anonymous is that of outputs with probability strictly above
    ``kappa``, relative to all outputs of positive probability.
    """
    if not 0 <= kappa <= 1:
        raise ValueError("kappa must lie in [0, 1]")
    alpha_min = _alpha_min(_marginal(prior, mech, include_bottom), kappa)

    def holds(alpha: float) -> bool:
        return alpha >= alpha_min - _EPS

    return alpha_min, holds


def min_deletion_fraction(prior, mech: Mechanism, kappa: float,
                          include_bottom: bool = False) -> float:
    """Approximate fraction of users to delete for level ``kappa``.

    Mass of the outputs with ``0 < p(y) < kappa`` over all positive mass.
    Multiply by the number of users to get a head count.
    """
    if not 0 <= kappa <= 1:
        raise ValueError("kappa must lie in [0, 1]")
    p = _marginal(prior, mech, include_bottom)
    total = p[p > 0].sum()
    if total == 0:
        return 0.0
    return float(p[(p > 0) & (p < kappa)].sum() / total)


def kappa_sup(prior, mech: Mechanism, alpha: float = 0.0, include_bottom: bool = False) -> float:
    """Largest anonymity level reachable with error rate ``alpha``.

    This is the largest output probability ``t`` such that outputs with
    ``p(y) >= t`` carry at least ``1 - alpha`` of the positive mass, the
    population counterpart of :func:`empirical_kappa`; every kappa below it
    satisfies (kappa, alpha)-asymptotic anonymity. At ``alpha=0`` it equals
    :func:`asymptotic_kappa`.
    """
    return _threshold(_marginal(prior, mech, include_bottom), alpha)


def _threshold(weights: np.ndarray, alpha: float) -> float:
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    w = np.sort(weights[weights > 0])[::-1]
    if w.size == 0:
        return 0.0
    covered = np.cumsum(w)
    need = (1.0 - alpha) * covered[-1]
    # the largest t is the value at the first prefix covering enough mass;
    # equal values must be included together
    i = int(np.searchsorted(covered, need - _EPS * covered[-1]))
    i = min(i, w.size - 1)
    return float(w[i])


def delete_for_k(ds: ObfuscatedDataset, k: int, drop_bottom: bool = True):
    """Delete every report shared by fewer than ``k`` users.

    Counts are taken once on the input. A single pass is enough: deleting a
    whole output never changes the count of an output that is kept, so every
    survivor still shares its output with at least ``k - 1`` others.

    Returns
    -------
    anonymized : ObfuscatedDataset
    deleted_count : int
        Region reports removed for falling below ``k``.
    bottom_count : int
        BOTTOM reports in the input, removed when ``drop_bottom``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rep = ds.reported
    is_bottom = rep == BOTTOM
    values, inverse, counts = np.unique(rep, return_inverse=True, return_counts=True)
    small = (counts[inverse] < k) & ~is_bottom
    keep = ~small & ~(is_bottom if drop_bottom else np.zeros_like(is_bottom))
    return ds.subset(keep), int(small.sum()), int(is_bottom.sum())


def empirical_kappa(ds: ObfuscatedDataset, alpha: float = 0.0,
                    include_bottom: bool = False) -> float:
    """Largest ``t / n`` such that users in outputs with count >= t make up at least ``(1 - alpha) n``.

    ``n`` counts the users entering the computation (BOTTOM reporters only
    when ``include_bottom``). At ``alpha=0`` this is ``min n(y) / n``.
    """
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    counts = np.array(list(_counts(ds.reported, include_bottom).values()), dtype=float)
    if counts.size == 0:
        return 0.0
    n = counts.sum()
    return _threshold(counts, alpha) / n


def bayes_vulnerability(prior, mech: Mechanism) -> tuple[float, float]:
    """Prior and posterior Bayes vulnerability; BOTTOM is an observable output."""
    prior = np.asarray(prior, dtype=float)
    joint = prior[:, None] * mech.matrix
    return float(prior.max()), float(joint.max(axis=0).sum())
