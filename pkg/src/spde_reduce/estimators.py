"""scikit-learn style wrappers around the preset models.

``FermiProjector`` maps field snapshots to manifold coordinates and back;
``ReducedEnsemble`` simulates the reduced SDE and predicts ensemble
moments at arbitrary times.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .integrators import run_ensemble
from .manifold import fermi_project
from .models import get_preset


class FermiProjector(TransformerMixin, BaseEstimator):
    """Project field snapshots ``(n_samples, n_points)`` onto a preset's manifold.

    Parameters
    ----------
    model : str
        Preset name.
    model_params : dict, optional
        Overrides passed to the preset factory.
    h_guess : float or array, optional
        Starting point of the Newton iteration; defaults to the preset's
        initial condition.
    tol : float
        Tolerance on ``max_j |<u_j^h, v>|``.
    """

    def __init__(self, model="damped_wave", model_params=None, h_guess=None, tol=1e-8):
        self.model = model
        self.model_params = model_params
        self.h_guess = h_guess
        self.tol = tol

    def fit(self, X=None, y=None):
        self.preset_ = get_preset(self.model, **(self.model_params or {}))
        chart = self.preset_.chart
        self.n_features_in_ = chart.grid.n_points
        guess = self.preset_.defaults["h0"] if self.h_guess is None else self.h_guess
        self.h_guess_ = np.broadcast_to(np.asarray(guess, dtype=float), (chart.dim,)).copy()
        if X is not None:
            self._check(X)
        return self

    def _check(self, X):
        X = check_array(X, dtype=(np.float64, np.complex128))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def transform(self, X):
        check_is_fitted(self, "preset_")
        X = self._check(X)
        chart = self.preset_.chart
        out = np.empty((X.shape[0], chart.dim))
        self.residuals_ = np.empty(X.shape[0])
        guess = self.h_guess_
        for i, row in enumerate(X):
            fp = fermi_project(chart, row, guess, tol=self.tol)
            out[i] = fp.h
            self.residuals_[i] = fp.max_residual
            guess = fp.h
        return out

    def inverse_transform(self, H):
        check_is_fitted(self, "preset_")
        H = check_array(H)
        return self.preset_.chart.values(H)


class ReducedEnsemble(RegressorMixin, BaseEstimator):
    """Monte Carlo ensemble of a preset's reduced SDE.

    ``fit`` runs the simulation; ``predict(t)`` interpolates the ensemble
    mean of the first coordinate at times ``t``.
    """

    def __init__(self, model="swift_hohenberg", model_params=None, h0=None, T=None, dt=None,
                 n_paths=1000, seed=0, interpretation="ito"):
        self.model = model
        self.model_params = model_params
        self.h0 = h0
        self.T = T
        self.dt = dt
        self.n_paths = n_paths
        self.seed = seed
        self.interpretation = interpretation

    def fit(self, X=None, y=None):
        preset = get_preset(self.model, **(self.model_params or {}))
        sde = preset.reduced if self.interpretation == "ito" else preset.stratonovich
        d = preset.defaults
        h0 = d["h0"] if self.h0 is None else self.h0
        self.stats_ = run_ensemble(sde, h0, self.T or d["T"], self.dt or d["dt"], self.n_paths, self.seed)
        return self

    def predict(self, X):
        check_is_fitted(self, "stats_")
        t = check_array(np.asarray(X, dtype=float).reshape(-1, 1))[:, 0]
        return np.interp(t, self.stats_.times, self.stats_.mean[:, 0])

    def predict_variance(self, X):
        check_is_fitted(self, "stats_")
        t = check_array(np.asarray(X, dtype=float).reshape(-1, 1))[:, 0]
        return np.interp(t, self.stats_.times, self.stats_.variance[:, 0])
