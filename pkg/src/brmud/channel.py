"""Channel realization and received-signal synthesis.

Each active user's symbol is zero-forcing pre-equalized against its estimated
channel frequency response, so the base station sees per-subcarrier residual
distortion through the mismatch ratio

    lambda = ((1 - alpha) h + e - eta) / (h + e),

with h the true CFR, e the pilot-estimation error, eta the channel-aging
noise, and alpha = exp(i theta) the deterministic aging rotation. The
received vector obeys the sparse model y = C x - u + noise with x in {0,1}^K
and u = Q x collecting the per-code mismatch contributions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelParams:
    """Statistical parameters shared by all users (per-user equalization of
    received power is assumed done by the ranging procedure)."""

    sigma_h_sq: float = 1.0
    sigma_e_sq: float = 0.0
    sigma_eta_sq: float = 0.0
    theta_deg: float = 0.0
    noise_var: float = 0.0  # receiver noise variance (complex, per subcarrier)

    def __post_init__(self):
        if self.sigma_h_sq <= 0:
            raise ValueError("sigma_h_sq must be positive")
        for name in ("sigma_e_sq", "sigma_eta_sq", "noise_var"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def alpha(self) -> complex:
        return complex(np.exp(1j * np.deg2rad(self.theta_deg)))


@dataclass
class ChannelDraw:
    """One realization of all per-(subcarrier, user) random quantities."""

    h: np.ndarray        # (L, M) complex CFR
    e: np.ndarray        # (L, M) estimation noise
    eta: np.ndarray      # (L, M) aging noise
    lam: np.ndarray      # (L, M) mismatch ratios
    vartheta: np.ndarray  # (L,) receiver noise
    y: np.ndarray        # (L,) received vector


@dataclass
class SparseModel:
    """Receiver-side re-expression y = C x_ring - u + vartheta."""

    x_ring: np.ndarray   # (K,) {0,1} activity indicator
    Q: np.ndarray        # (L, K) complex, zero columns outside the active set
    u: np.ndarray        # (L,) = Q @ x_ring
    epsilon: float       # M / K


def sample_active_set(K: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """M distinct code indices drawn uniformly without replacement, sorted."""
    if M < 0 or M > K:
        raise ValueError(f"need 0 <= M <= K, got M={M}, K={K}")
    return np.sort(rng.choice(K, size=M, replace=False))


def _draw_cn(rng, var, size):
    # circular complex gaussian, total variance var
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_lambda(params: ChannelParams, rng: np.random.Generator, size=None):
    """Draw mismatch ratios; returns a scalar when size is None.

    Draw order is h, then e, then eta (each real parts before imaginary),
    which keeps seeded sequences stable. Redraws the vanishing-denominator
    event |h+e| < 1e-12 sigma_v (probability ~0).
    """
    if params.sigma_h_sq + params.sigma_e_sq <= 0:
        raise ValueError("sigma_h_sq + sigma_e_sq must be positive")
    n = 1 if size is None else size
    h = _draw_cn(rng, params.sigma_h_sq, n)
    e = _draw_cn(rng, params.sigma_e_sq, n)
    eta = _draw_cn(rng, params.sigma_eta_sq, n)
    den = h + e
    floor = 1e-12 * np.sqrt(params.sigma_h_sq + params.sigma_e_sq)
    bad = np.abs(den) < floor
    while np.any(bad):
        m = int(bad.sum())
        h[bad] = _draw_cn(rng, params.sigma_h_sq, m)
        e[bad] = _draw_cn(rng, params.sigma_e_sq, m)
        eta[bad] = _draw_cn(rng, params.sigma_eta_sq, m)
        den = h + e
        bad = np.abs(den) < floor
    lam = ((1.0 - params.alpha) * h + e - eta) / den
    return lam[0] if size is None else lam


def synthesize_received(C: np.ndarray, S: np.ndarray, params: ChannelParams,
                        rng: np.random.Generator):
    """Simulate one received vector for active set S.

    Returns (y, ChannelDraw, SparseModel). S may contain repeated indices
    (code-collision experiments); x_ring stays binary and each extra user on
    a shared code is folded into that column of Q, so the identity
    y = C x_ring - u + vartheta holds exactly in every case.
    """
    L, K = C.shape
    S = np.asarray(S, dtype=int)
    if S.size and (S.min() < 0 or S.max() >= K):
        raise ValueError("active set indices out of range")
    M = S.size
    h = _draw_cn(rng, params.sigma_h_sq, (L, M))
    e = _draw_cn(rng, params.sigma_e_sq, (L, M))
    eta = _draw_cn(rng, params.sigma_eta_sq, (L, M))
    den = h + e
    floor = 1e-12 * np.sqrt(params.sigma_h_sq + params.sigma_e_sq)
    bad = np.abs(den) < floor
    while np.any(bad):
        m = int(bad.sum())
        h[bad] = _draw_cn(rng, params.sigma_h_sq, m)
        e[bad] = _draw_cn(rng, params.sigma_e_sq, m)
        eta[bad] = _draw_cn(rng, params.sigma_eta_sq, m)
        den = h + e
        bad = np.abs(den) < floor
    lam = ((1.0 - params.alpha) * h + e - eta) / den
    vartheta = _draw_cn(rng, params.noise_var, L)

    Cs = C[:, S]  # (L, M)
    y = (Cs * (1.0 - lam)).sum(axis=1) + vartheta

    x_ring = np.zeros(K)
    Q = np.zeros((L, K), dtype=complex)
    for m, k in enumerate(S):
        if x_ring[k] == 0.0:
            x_ring[k] = 1.0
            Q[:, k] += Cs[:, m] * lam[:, m]
        else:
            # collision: fold the whole extra term -C_k (1 - lam) into Q
            Q[:, k] -= Cs[:, m] * (1.0 - lam[:, m])
    u = Q @ x_ring
    model = SparseModel(x_ring=x_ring, Q=Q, u=u,
                        epsilon=float(np.count_nonzero(x_ring)) / K)
    draw = ChannelDraw(h=h, e=e, eta=eta, lam=lam, vartheta=vartheta, y=y)
    return y, draw, model
