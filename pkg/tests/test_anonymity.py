import json
from collections import Counter

import numpy as np
import pytest

from conftest import LN2
from geopriv import (BOTTOM, ObfuscatedDataset, asymptotic_kappa, bayes_vulnerability,
                     build_grid, build_planar_laplacian, dataset_k_anonymity, delete_for_k,
                     empirical_kappa, identity_mechanism, kappa_alpha, kappa_sup,
                     min_deletion_fraction, new_mechanism)


def dataset(reported, true=None):
    reported = list(reported)
    true = [0] * len(reported) if true is None else true
    return ObfuscatedDataset(tuple(f"u{i}" for i in range(len(reported))), true, reported)


A, B, C = 0, 1, 2


def null_channel(p):
    """Mechanism whose every row is ``p``, so the output marginal is ``p``."""
    p = np.asarray(p, float)
    return new_mechanism(np.tile(np.append(p, 0.0), (p.size, 1)), p.size, 0.0)


def test_k_anonymity_counting():
    rep = dataset_k_anonymity(dataset([A, A, B, A, B]))
    assert rep.counts == {A: 3, B: 2} and rep.max_k == 2 and rep.n == 5
    assert dataset_k_anonymity(dataset([C] * 7)).max_k == 7
    assert dataset_k_anonymity(dataset(range(6))).max_k == 1


def test_k_anonymity_bottom_flag():
    ds = dataset([A, A, BOTTOM, B, B, B])
    excl = dataset_k_anonymity(ds)
    incl = dataset_k_anonymity(ds, include_bottom=True)
    assert excl.max_k == 2 and excl.n == 5 and excl.bottom_count == 1
    assert excl.bottom_fraction == pytest.approx(1 / 6)
    assert incl.max_k == 1 and incl.counts[BOTTOM] == 1


def test_k_anonymity_empty():
    with pytest.raises(ValueError):
        dataset_k_anonymity(dataset([]))


def test_report_json():
    rep = dataset_k_anonymity(dataset([A, A, BOTTOM, B]), include_bottom=True, kappas=[0.3])
    doc = json.loads(rep.to_json())
    assert set(doc) >= {"n", "max_k", "kappa_sup", "counts", "bottom_fraction"}
    assert doc["counts"] == {"BOTTOM": 1, "0": 2, "1": 1}
    # frequencies .5, .25, .25: only region 0 clears 0.3
    assert doc["alpha_at"]["0.3"] == pytest.approx(0.5)


def test_asymptotic_kappa_examples():
    g2 = build_grid(rows=1, cols=2)
    assert asymptotic_kappa([0.5, 0.5], build_planar_laplacian(g2, LN2)) == pytest.approx(0.5)
    assert asymptotic_kappa([0.7, 0.2, 0.1], identity_mechanism(3)) == pytest.approx(0.1)
    assert asymptotic_kappa([0.6, 0.0, 0.4], identity_mechanism(3)) == pytest.approx(0.4)


def test_asymptotic_kappa_bottom_flag():
    g = build_grid(rows=1, cols=3)
    m = build_planar_laplacian(g, LN2)
    prior = np.full(3, 1 / 3)
    assert asymptotic_kappa(prior, m) == pytest.approx(0.875 / 3)
    assert asymptotic_kappa(prior, m, include_bottom=True) == pytest.approx(1 / 12)


def test_kappa_alpha_examples():
    m = null_channel([0.7, 0.2, 0.1])
    prior = [1 / 3] * 3
    a, holds = kappa_alpha(prior, m, 0.15)
    assert a == pytest.approx(0.1)
    assert holds(0.1) and holds(0.5) and not holds(0.05)
    assert kappa_alpha(prior, m, 0.0)[0] == 0.0
    assert kappa_alpha(prior, m, 0.7)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        kappa_alpha(prior, m, 1.5)


def test_min_deletion_fraction_examples():
    m = null_channel([0.7, 0.2, 0.1])
    prior = [1 / 3] * 3
    f = min_deletion_fraction(prior, m, 0.15)
    assert f == pytest.approx(0.1) and round(f * 100) == 10
    assert min_deletion_fraction(prior, m, 0.0) == 0.0
    g = build_grid(rows=3, cols=3)
    pl = build_planar_laplacian(g, 0.5)
    p = np.full(9, 1 / 9)
    # full support: the denominator is all the region mass
    assert min_deletion_fraction(p, pl, 1.0) == pytest.approx(1.0)


def test_boundary_mass_identity():
    # 1 - alpha_min - deletion fraction is the mass sitting exactly at kappa
    m = null_channel([0.5, 0.25, 0.25])
    prior = [1 / 3] * 3
    a = kappa_alpha(prior, m, 0.25)[0]
    f = min_deletion_fraction(prior, m, 0.25)
    assert 1 - a - f == pytest.approx(0.5)
    a = kappa_alpha(prior, m, 0.3)[0]
    f = min_deletion_fraction(prior, m, 0.3)
    assert 1 - a - f == pytest.approx(0.0, abs=1e-15)


def test_kappa_sup():
    m = null_channel([0.7, 0.2, 0.1])
    prior = [1 / 3] * 3
    assert kappa_sup(prior, m) == pytest.approx(0.1)
    assert kappa_sup(prior, m, 0.1) == pytest.approx(0.2)
    assert kappa_sup(prior, m, 0.05) == pytest.approx(0.1)
    assert kappa_sup(prior, m, 0.3) == pytest.approx(0.7)


def test_delete_for_k_examples():
    ds = dataset([A, A, B, A, B])
    kept, deleted, bottom = delete_for_k(ds, 3)
    assert kept.reported.tolist() == [A, A, A] and deleted == 2 and bottom == 0
    ds = dataset([A, BOTTOM, B, BOTTOM])
    kept, deleted, bottom = delete_for_k(ds, 1)
    assert kept.reported.tolist() == [A, B] and deleted == 0 and bottom == 2
    kept, _, _ = delete_for_k(ds, 1, drop_bottom=False)
    assert len(kept) == 4
    with pytest.raises(ValueError):
        delete_for_k(ds, 0)


def test_delete_for_k_does_not_mutate():
    ds = dataset([A, B, B])
    delete_for_k(ds, 2)
    assert ds.reported.tolist() == [A, B, B]


def test_delete_for_k_fraction_is_mass_below_k():
    counts = [3, 9, 10, 25, 1, 40]
    reports = np.repeat(np.arange(len(counts)), counts)
    _, deleted, _ = delete_for_k(dataset(reports), 10)
    assert deleted == 3 + 9 + 1


@pytest.mark.parametrize("alpha,want", [(0.1, 0.2), (0.2, 0.3), (0.0, 0.2)])
def test_empirical_kappa_examples(alpha, want):
    ds = dataset([A] * 5 + [B] * 3 + [C] * 2)
    assert empirical_kappa(ds, alpha) == pytest.approx(want)


def test_empirical_kappa_bottom_and_errors():
    ds = dataset([A, A, A, BOTTOM])
    assert empirical_kappa(ds) == 1.0
    assert empirical_kappa(ds, include_bottom=True) == 0.25
    with pytest.raises(ValueError):
        empirical_kappa(dataset([]))
    with pytest.raises(ValueError):
        empirical_kappa(ds, 1.5)


def test_empirical_kappa_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(100):
        reps = rng.integers(0, 12, size=int(rng.integers(1, 80)))
        alpha = float(rng.choice([0.0, 0.05, 0.1, 0.3, 1.0]))
        counts = Counter(reps.tolist())
        n = len(reps)
        # only counts that occur (and 1) are candidate thresholds
        best = max(t for t in set(counts.values()) | {1}
                   if sum(c for c in counts.values() if c >= t) >= (1 - alpha) * n - 1e-9)
        assert empirical_kappa(dataset(reps), alpha) == pytest.approx(best / n)


def test_bayes_vulnerability_examples():
    assert bayes_vulnerability([0.7, 0.3], identity_mechanism(2)) == pytest.approx((0.7, 1.0))
    assert bayes_vulnerability([0.7, 0.3], null_channel([0.4, 0.6])) == pytest.approx((0.7, 0.7))
    g2 = build_grid(rows=1, cols=2)
    assert bayes_vulnerability([0.5, 0.5], build_planar_laplacian(g2, LN2)) == pytest.approx((0.5, 2 / 3))


def test_bayes_vulnerability_counts_bottom():
    g = build_grid(rows=1, cols=3)
    m = build_planar_laplacian(g, LN2)
    prior = np.array([0.2, 0.3, 0.5])
    joint = prior[:, None] * m.matrix
    assert bayes_vulnerability(prior, m)[1] == pytest.approx(joint.max(axis=0).sum())
