"""Estimator-style wrappers around the detection algorithms.

Each detector follows the scikit-learn convention: ``fit(C)`` binds a code
matrix and precomputes everything that depends only on the code and the
channel statistics (mismatch moments, decoder design), ``predict(Y)`` maps
received signals (rows of a complex (n, L) array) to binary activity vectors
of shape (n, K). A single (L,) signal predicts to a single (K,) vector.

When the expected user count ``M0`` is not given, each signal gets its own
energy-based estimate before thresholds (or the regularization weight) are
derived from it.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .channel import ChannelParams
from .decoders import (design_decoder_mmse, design_decoder_optimal,
                       mmse_delta, scaled_code_decoder)
from .greedy import compute_thresholds, cmud_detect, estimate_user_count
from .mismatch import moments
from .sparse import (LASSO_NOISELESS_XI, TlsConfig, lasso_detect,
                     lp_tls_detect)
from .validation import ensure_code_matrix, ensure_received


def _auto_xi(K: int, sigma_r_sq: float, noise_var: float, M: int):
    """Regularization weight sqrt(2 log K) / sigma_w from the per-entry
    interference variance sigma_w^2 = M sigma_r^2 + noise_var / 2; None when
    that variance vanishes (caller falls back to a fixed constant)."""
    sigma_w_sq = M * sigma_r_sq + noise_var / 2.0
    if sigma_w_sq <= 0:
        return None
    return float(np.sqrt(2.0 * np.log(K) / sigma_w_sq))


class _MomentsMixin:
    """Shared fit-time computation of the mismatch moments."""

    def _fit_common(self, C):
        self.C_ = ensure_code_matrix(C)
        channel = self.channel if self.channel is not None else ChannelParams()
        self.channel_ = channel
        rng = np.random.default_rng(self.seed)
        self.moments_ = moments(channel, self.varrho, rng, self.moment_draws)
        return self.C_

    def _check_fitted(self):
        if not hasattr(self, "C_"):
            raise RuntimeError("call fit before predict")

    def _signal_rows(self, Y):
        Y = np.asarray(Y)
        single = Y.ndim == 1
        rows = Y[None, :] if single else Y
        L = self.C_.shape[0]
        return [ensure_received(r, L) for r in rows], single

    def _estimate_or_M0(self, y) -> int:
        if self.M0 is not None:
            return int(self.M0)
        est = estimate_user_count(y, self.moments_, self.channel_.noise_var,
                                  self.C_.shape[0], self.C_.shape[1])
        return max(est, 1)


class CmudDetector(_MomentsMixin, BaseEstimator):
    """Iterative correlate-threshold-subtract detection.

    decoder: "scaled" (C/L), "mmse", or "optimal" (min-coherence design).
    The designed decoders need an expected user count; pass M0 explicitly or
    pass a representative signal y to fit so it can be estimated.
    """

    def __init__(self, channel: ChannelParams | None = None, decoder="scaled",
                 M0: int | None = None, nu: float = 1.0,
                 kappa_policy="adaptive", varrho: float = 0.999,
                 moment_draws: int = 10 ** 6, seed: int = 0,
                 solver_opts: dict | None = None):
        self.channel = channel
        self.decoder = decoder
        self.M0 = M0
        self.nu = nu
        self.kappa_policy = kappa_policy
        self.varrho = varrho
        self.moment_draws = moment_draws
        self.seed = seed
        self.solver_opts = solver_opts

    def fit(self, C, y=None):
        C = self._fit_common(C)
        L, K = C.shape
        mom = self.moments_
        if self.decoder == "scaled":
            self.decoder_ = scaled_code_decoder(C)
            return self
        if self.M0 is not None:
            M0 = int(self.M0)
        elif y is not None:
            M0 = max(estimate_user_count(ensure_received(y, L), mom,
                                         self.channel_.noise_var, L, K), 1)
        else:
            raise ValueError(
                f"decoder {self.decoder!r} needs an expected user count: "
                "pass M0, or a representative signal y to fit")
        self.M0_design_ = M0
        eps = M0 / K
        if self.decoder == "mmse":
            delta = mmse_delta(eps, mom.mu_r, mom.m2_r)
            self.decoder_ = design_decoder_mmse(C, delta,
                                                self.channel_.noise_var)
        elif self.decoder == "optimal":
            Upsilon = float(np.sqrt(2.0 * (1.0 + self.nu) * np.log(K))
                            * np.sqrt(M0 * mom.sigma_r_sq
                                      + self.channel_.noise_var / 2.0))
            self.decoder_ = design_decoder_optimal(C, eps, mom.mu_r, M0,
                                                   Upsilon, self.solver_opts)
        else:
            raise ValueError(f"unknown decoder {self.decoder!r}")
        return self

    def detect(self, y):
        """Full detection result for one received signal."""
        self._check_fitted()
        y = ensure_received(y, self.C_.shape[0])
        M0 = self._estimate_or_M0(y)
        thresholds = compute_thresholds(self.decoder_.entries, self.C_,
                                        self.moments_,
                                        self.channel_.noise_var, M0, self.nu,
                                        self.C_.shape[1])
        return cmud_detect(self.C_, self.decoder_.entries, y, thresholds,
                           self.kappa_policy)

    def predict(self, Y):
        self._check_fitted()
        rows, single = self._signal_rows(Y)
        out = np.zeros((len(rows), self.C_.shape[1]), dtype=int)
        for i, y in enumerate(rows):
            out[i, self.detect(y).detected] = 1
        return out[0] if single else out


class LpTlsDetector(_MomentsMixin, BaseEstimator):
    """lp-regularized total-least-squares detection.

    xi=None derives the data weight per signal from the interference
    variance at the (estimated or given) user count; a vanishing variance
    falls back to the TlsConfig default.
    """

    def __init__(self, channel: ChannelParams | None = None, p: float = 0.5,
                 xi: float | None = None, M0: int | None = None,
                 max_outer: int = 60, max_inner: int = 30,
                 max_dual_steps: int = 40, stop_tol: float = 1e-3,
                 weight_eps: float = 1e-3, dual_step0: float = 1.0,
                 varrho: float = 0.999, moment_draws: int = 10 ** 6,
                 seed: int = 0):
        self.channel = channel
        self.p = p
        self.xi = xi
        self.M0 = M0
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.max_dual_steps = max_dual_steps
        self.stop_tol = stop_tol
        self.weight_eps = weight_eps
        self.dual_step0 = dual_step0
        self.varrho = varrho
        self.moment_draws = moment_draws
        self.seed = seed

    def fit(self, C, y=None):
        self._fit_common(C)
        return self

    def _config_for(self, y) -> TlsConfig:
        xi = self.xi
        if xi is None:
            M = self._estimate_or_M0(y)
            xi = _auto_xi(self.C_.shape[1], self.moments_.sigma_r_sq,
                          self.channel_.noise_var, M)
        if xi is None:
            xi = TlsConfig.xi  # class default: no noise to scale against
        return TlsConfig(p=self.p, xi=xi, max_outer=self.max_outer,
                         max_inner=self.max_inner,
                         max_dual_steps=self.max_dual_steps,
                         stop_tol=self.stop_tol, weight_eps=self.weight_eps,
                         dual_step0=self.dual_step0)

    def detect(self, y):
        """(support, relaxed iterate, trace) for one received signal."""
        self._check_fitted()
        y = ensure_received(y, self.C_.shape[0])
        return lp_tls_detect(self.C_, y, self._config_for(y))

    def predict(self, Y):
        self._check_fitted()
        rows, single = self._signal_rows(Y)
        out = np.zeros((len(rows), self.C_.shape[1]), dtype=int)
        for i, y in enumerate(rows):
            out[i, self.detect(y)[0]] = 1
        return out[0] if single else out


class LassoDetector(_MomentsMixin, BaseEstimator):
    """l1-relaxation baseline solved by coordinate descent."""

    def __init__(self, channel: ChannelParams | None = None,
                 xi: float | None = None, M0: int | None = None,
                 varrho: float = 0.999, moment_draws: int = 10 ** 6,
                 seed: int = 0):
        self.channel = channel
        self.xi = xi
        self.M0 = M0
        self.varrho = varrho
        self.moment_draws = moment_draws
        self.seed = seed

    def fit(self, C, y=None):
        self._fit_common(C)
        return self

    def detect(self, y):
        """(support, relaxed iterate) for one received signal."""
        self._check_fitted()
        y = ensure_received(y, self.C_.shape[0])
        xi = self.xi
        if xi is None:
            M = self._estimate_or_M0(y)
            xi = _auto_xi(self.C_.shape[1], self.moments_.sigma_r_sq,
                          self.channel_.noise_var, M)
        if xi is None:
            xi = LASSO_NOISELESS_XI
        return lasso_detect(self.C_, y, xi)

    def predict(self, Y):
        self._check_fitted()
        rows, single = self._signal_rows(Y)
        out = np.zeros((len(rows), self.C_.shape[1]), dtype=int)
        for i, y in enumerate(rows):
            out[i, self.detect(y)[0]] = 1
        return out[0] if single else out
