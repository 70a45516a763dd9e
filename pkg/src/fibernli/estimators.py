"""scikit-learn style wrappers for the data-driven path.

``SymbolCovarianceEstimator`` learns symbol-energy covariances from a
dual-polarization symbol array; ``MEGNRegressor`` turns a symbol array into
an NLI PSD predictor. Both take an (n_slots, 2) complex array ``X`` whose
columns are the x and y polarizations.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, ParameterError
from .kernels import QuadratureConfig
from .linkmodel import LinkConfig, PulseShape
from .megn import MEGNConfig, assemble, build_kernel_bank, eta_and_snr, kernel_bank_for
from .stats import MomentSet, analytic_covariances, empirical_covariances, symbol_moments


def check_symbols(X, min_slots=2):
    """Validate a dual-polarization symbol array and return it as complex."""
    if hasattr(X, "x_pol"):
        X = np.stack([X.x_pol, X.y_pol], axis=1)
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != 2:
        raise DataError(f"expected an (n_slots, 2) array, got shape {X.shape}")
    if not np.issubdtype(X.dtype, np.number):
        raise DataError("symbols must be numeric")
    X = X.astype(complex, copy=False)
    if X.shape[0] < min_slots:
        raise DataError(f"need at least {min_slots} slots, got {X.shape[0]}")
    if not np.isfinite(X).all():
        raise DataError("symbols contain NaN or inf")
    return X


def empirical_moments(X):
    """Per-polarization symbol moments pooled over both polarizations."""
    e = np.abs(X) ** 2
    m = {k: float(np.mean(e ** (k // 2))) for k in (2, 4, 6)}
    return MomentSet(None, m, m[2])


class SymbolCovarianceEstimator(BaseEstimator, TransformerMixin):
    """Time-averaged symbol-energy covariances from data.

    ``period`` is the correlation length Ms in slots (the stream is cut into
    whole periods aligned to slot 0). ``transform`` returns the per-slot
    energies ``|x|^2, |y|^2`` normalized by the fitted mean power.
    """

    def __init__(self, period=25, max_tau=50, max_tau_prime=None, n_groups=100, triples=True):
        self.period = period
        self.max_tau = max_tau
        self.max_tau_prime = max_tau_prime
        self.n_groups = n_groups
        self.triples = triples

    def fit(self, X, y=None):
        X = check_symbols(X, min_slots=2 * int(self.period))
        if int(self.period) < 1 or int(self.max_tau) < 0:
            raise ParameterError("period must be >= 1 and max_tau >= 0")
        self.covariances_ = empirical_covariances(
            X, self.period, self.max_tau, self.max_tau_prime, n_groups=self.n_groups, triples=self.triples
        )
        self.p_ch_ = self.covariances_.p_ch
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "covariances_")
        X = check_symbols(X, min_slots=1)
        return np.abs(X) ** 2 / self.p_ch_


class MEGNRegressor(BaseEstimator):
    """NLI PSD predictor fitted to a symbol stream.

    ``fit`` estimates moments and covariances from ``X`` (or, with
    ``covariance="analytic"``, takes them from ``composition`` and
    ``mapping_h`` at the measured power). ``predict(f)`` returns the total
    per-polarization PSD in W/Hz at frequencies ``f`` (Hz).
    """

    def __init__(
        self,
        link=None,
        pulse=None,
        memory=50,
        mode="approx",
        n_freq=65,
        quad=None,
        covariance="empirical",
        period=None,
        composition=None,
        mapping_h=None,
        n_groups=100,
        workers=1,
    ):
        self.link = link
        self.pulse = pulse
        self.memory = memory
        self.mode = mode
        self.n_freq = n_freq
        self.quad = quad
        self.covariance = covariance
        self.period = period
        self.composition = composition
        self.mapping_h = mapping_h
        self.n_groups = n_groups
        self.workers = workers

    def _parts(self):
        link = self.link or LinkConfig()
        pulse = self.pulse or PulseShape()
        cfg = MEGNConfig(memory=self.memory, mode=self.mode, n_freq=self.n_freq, quad=self.quad or QuadratureConfig())
        return link, pulse, cfg

    def fit(self, X, y=None):
        X = check_symbols(X)
        link, pulse, cfg = self._parts()
        M = cfg.memory
        if self.covariance == "analytic":
            if self.composition is None or self.mapping_h is None:
                raise ParameterError("analytic covariances need composition and mapping_h")
            p = float(np.mean(np.abs(X) ** 2))
            self.moments_ = symbol_moments(self.composition, self.mapping_h, power=p)
            self.covariances_ = analytic_covariances(self.composition, self.mapping_h, 2 * M, 2 * M, power=p)
        elif self.covariance == "empirical":
            if self.period is None:
                raise ParameterError("empirical covariances need the correlation length `period`")
            self.moments_ = empirical_moments(X)
            triples = cfg.mode == "full"
            self.covariances_ = empirical_covariances(
                X, self.period, 2 * M, 2 * M, n_groups=self.n_groups, triples=triples
            )
            # pin the power to the moment estimate so both refer to one P
            self.covariances_.p_ch = self.moments_.p_ch
        else:
            raise ParameterError("covariance must be 'empirical' or 'analytic'")
        bank = kernel_bank_for(link, pulse, cfg, workers=self.workers)
        self.spectrum_ = assemble(cfg.mode, self.moments_, self.covariances_, bank, M)
        self.result_ = eta_and_snr(self.spectrum_, self.moments_.p_ch, link, pulse)
        self.eta_ = self.result_.eta
        self.n_features_in_ = 2
        return self

    def predict(self, f):
        """Total PSD at ``f`` (Hz, within [-Rs/2, Rs/2])."""
        check_is_fitted(self, "spectrum_")
        link, pulse, cfg = self._parts()
        f = np.atleast_1d(np.asarray(f, dtype=float))
        if np.abs(f).max() > pulse.symbol_rate_hz / 2 * (1 + 1e-12):
            raise DataError("frequencies must lie within [-Rs/2, Rs/2]")
        grid = np.unique(np.concatenate([-np.abs(f), np.abs(f)]))
        bank = build_kernel_bank(grid, pulse, link, cfg.memory, cfg.quad, double=cfg.mode == "full", workers=self.workers)
        spec = assemble(cfg.mode, self.moments_, self.covariances_, bank, cfg.memory)
        return np.interp(f, grid, spec.g_total)
