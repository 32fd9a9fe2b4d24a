"""scikit-learn style wrappers: obfuscators are fit on true regions, then transform them."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .anonymity import asymptotic_kappa, delete_for_k
from .grid import Grid, UserLocations, empirical_prior, validate_prior
from .mechanism import BOTTOM, ObfuscatedDataset, build_planar_laplacian, obfuscate_dataset, quality_loss
from .optimal import build_optql
from .validation import check_epsilon, check_regions, check_seed


class _Obfuscator(TransformerMixin, BaseEstimator):

    def _fit_prior(self, X):
        regions, _ = check_regions(X, self.grid.n_regions)
        if getattr(self, "prior", None) is not None:
            return validate_prior(self.prior, self.grid.n_regions)
        return empirical_prior(regions, self.grid.n_regions)

    def _finish_fit(self, prior):
        self.prior_ = prior
        self.quality_loss_, self.bottom_mass_ = quality_loss(prior, self.mechanism_, self.grid)
        self.kappa_ = asymptotic_kappa(prior, self.mechanism_)
        self.n_regions_ = self.grid.n_regions
        return self

    def transform(self, X):
        """Obfuscated regions, ``BOTTOM`` (-1) where the mechanism reports it."""
        check_is_fitted(self, "mechanism_")
        regions, was_2d = check_regions(X, self.n_regions_)
        users = UserLocations(tuple(range(regions.size)), regions)
        out = obfuscate_dataset(users, self.mechanism_, check_seed(self.random_state)).reported
        return out[:, None] if was_2d else out


class PlanarLaplaceObfuscator(_Obfuscator):
    """Discrete planar Laplacian over ``grid``.

    Parameters
    ----------
    grid : Grid
    epsilon : float
        Budget per unit of grid distance.
    random_state : int or None
        Seed for :meth:`transform`; equal seeds give equal outputs.

    Attributes
    ----------
    mechanism_ : Mechanism
    prior_ : ndarray
        Empirical distribution of the regions seen by :meth:`fit`.
    quality_loss_, bottom_mass_, kappa_ : float
    """

    def __init__(self, grid: Grid = None, epsilon: float = 1.0, random_state=None):
        self.grid = grid
        self.epsilon = epsilon
        self.random_state = random_state

    def fit(self, X, y=None):
        prior = self._fit_prior(X)
        self.mechanism_ = build_planar_laplacian(self.grid, check_epsilon(self.epsilon))
        return self._finish_fit(prior)


class OptimalObfuscator(_Obfuscator):
    """Quality-loss optimal geo-indistinguishable mechanism fit to the data's prior.

    The prior is the empirical distribution of ``X`` unless ``prior`` is given.
    ``mode``, ``delta``, ``relaxed`` and ``solver`` are passed to
    :func:`geopriv.optimal.build_optql`.
    """

    def __init__(self, grid: Grid = None, epsilon: float = 1.0, mode: str = "spanner",
                 delta: float = 1.09, relaxed: bool = False, solver: str = "auto",
                 prior=None, random_state=None):
        self.grid = grid
        self.epsilon = epsilon
        self.mode = mode
        self.delta = delta
        self.relaxed = relaxed
        self.solver = solver
        self.prior = prior
        self.random_state = random_state

    def fit(self, X, y=None):
        prior = self._fit_prior(X)
        res = build_optql(prior, self.grid, check_epsilon(self.epsilon), mode=self.mode,
                          delta=self.delta, relaxed=self.relaxed, solver=self.solver)
        self.mechanism_ = res.mechanism
        self.lp_solution_ = res.solution
        return self._finish_fit(prior)


class LocationDeletion(TransformerMixin, BaseEstimator):
    """Drop reports whose output is shared by fewer than ``k`` users.

    Unlike most transformers this one removes samples: :meth:`transform`
    returns only the surviving reports. :meth:`get_support` gives the mask.
    """

    def __init__(self, k: int = 10, drop_bottom: bool = True):
        self.k = k
        self.drop_bottom = drop_bottom

    def fit(self, X, y=None):
        reported, _ = check_regions(X, np.iinfo(np.int64).max, allow_bottom=True)
        values, counts = np.unique(reported, return_counts=True)
        self.counts_ = {int(v): int(c) for v, c in zip(values, counts)}
        return self

    def get_support(self, X):
        check_is_fitted(self, "counts_")
        reported, _ = check_regions(X, np.iinfo(np.int64).max, allow_bottom=True)
        n = np.array([self.counts_.get(int(v), 0) for v in reported])
        keep = (n >= self.k) | (reported == BOTTOM)
        if self.drop_bottom:
            keep &= reported != BOTTOM
        return keep

    def transform(self, X):
        keep = self.get_support(X)
        arr = np.asarray(X)
        return arr[keep]

    def fit_transform(self, X, y=None, **fit_params):
        if int(self.k) < 1:
            raise ValueError("k must be >= 1")
        reported, was_2d = check_regions(X, np.iinfo(np.int64).max, allow_bottom=True)
        ds = ObfuscatedDataset(tuple(range(reported.size)), np.zeros_like(reported), reported)
        self.fit(X)
        kept, self.deleted_count_, self.bottom_count_ = delete_for_k(ds, int(self.k), self.drop_bottom)
        return kept.reported[:, None] if was_2d else kept.reported
