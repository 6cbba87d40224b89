"""Greedy correlation detection and its threshold machinery.

The detector correlates a decoder matrix with the real part of the residual
signal, declares every code whose correlation magnitude exceeds a threshold
kappa, subtracts the declared codes, and repeats. The admissible kappa window
shrinks as detections accumulate; its endpoints come from the coherence
statistics (alpha, beta, gamma) of the decoder and the tail bound level
Upsilon. Detection is guaranteed (with high probability) only when
tau + M0 beta < 1/2; outside that regime the detector still runs with a
best-effort threshold and the result is flagged as carrying no guarantee.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decoders import coherence_stats
from .mismatch import LambdaMoments
from .validation import ensure_code_matrix, ensure_decoder, ensure_received


@dataclass
class CoherenceThresholds:
    coh_alpha: float
    coh_beta: float
    coh_gamma: float
    nu: float
    M0: int
    eps: float              # M0 / K
    Upsilon: float
    tau: float
    kappa_window: tuple     # (tau + M0 beta, 1 - M0 beta - tau)
    feasible: bool          # tau + M0 beta < 1/2


@dataclass
class IterationRecord:
    kappa: float
    added: np.ndarray
    residual_norm: float


@dataclass
class DetectionResult:
    detected: np.ndarray
    trace: list = field(default_factory=list)
    iterations: int = 0
    terminated_by: str = "empty-I"      # empty-I | budget
    guaranteed: bool = True


def thresholds_from_stats(stats, moments: LambdaMoments, noise_var: float,
                          M0: int, nu: float, K: int) -> CoherenceThresholds:
    """Threshold window from precomputed coherence stats (alpha, beta, gamma).

    Split out from compute_thresholds so callers that reuse one decoder
    across many M0 values pay the O(K^2 L) coherence cost once.
    """
    if M0 < 1:
        raise ValueError("M0 must be at least 1")
    if nu <= 0:
        raise ValueError("nu must be positive")
    a, b, g = stats
    eps = M0 / K
    Upsilon = np.sqrt(2.0 * (1.0 + nu) * np.log(K)) * np.sqrt(
        M0 * moments.sigma_r_sq + noise_var / 2.0)
    tau = eps * moments.mu_r * a + g * Upsilon
    window = (tau + M0 * b, 1.0 - M0 * b - tau)
    return CoherenceThresholds(
        coh_alpha=a, coh_beta=b, coh_gamma=g, nu=nu, M0=M0, eps=eps,
        Upsilon=float(Upsilon), tau=float(tau), kappa_window=window,
        feasible=bool(tau + M0 * b < 0.5),
    )


def compute_thresholds(D, C, moments: LambdaMoments, noise_var: float,
                       M0: int, nu: float, K: int | None = None) -> CoherenceThresholds:
    """Threshold window for a decoder/code pair at overestimate M0."""
    C = ensure_code_matrix(C)
    if K is None:
        K = C.shape[1]
    stats = coherence_stats(np.asarray(D, dtype=float), C)
    return thresholds_from_stats(stats, moments, noise_var, M0, nu, K)


def detection_error_bound(K: int, nu: float) -> float:
    """High-probability error bound (pi (1+nu) log K)^{-1/2} K^{-nu} that
    holds whenever the threshold window is feasible."""
    return float((np.pi * (1.0 + nu) * np.log(K)) ** -0.5 * K ** (-nu))


# fraction of the strongest remaining correlation kept as the peel threshold
# by the adaptive policy when the guarantee window is empty
PEEL_FRACTION = 0.8


def _kappa_value(thresholds: CoherenceThresholds, n_detected: int, policy,
                 corr_max: float = 0.0) -> float:
    if isinstance(policy, (int, float)):
        return float(policy)
    if policy not in ("window-midpoint", "adaptive"):
        raise ValueError(f"unknown kappa policy {policy!r}")
    t = thresholds
    if not t.feasible:
        if policy == "adaptive":
            # peel the strongest remaining correlations first; subtracting them
            # shrinks the interference seen by the weaker ones, so the floor at
            # 1/2 becomes safe by the time kappa reaches it
            return max(0.5, PEEL_FRACTION * corr_max)
        # no admissible window; run best-effort halfway to the self-correlation 1
        # (the midpoint of (tau, 1-tau) is 1/2 for any tau)
        return 0.5
    m = n_detected
    lo = (t.M0 - m) * t.coh_beta + t.tau
    hi = 1.0 - (t.M0 - m - 1) * t.coh_beta - t.tau
    return float(np.clip(0.5 * (lo + hi), t.tau, 1.0))


def cmud_detect(C, D, y, thresholds: CoherenceThresholds,
                kappa_policy="adaptive") -> DetectionResult:
    """Iterative thresholded-correlation detection on z = Re y.

    Per iteration: declare I = {l : |D_l^T z| > kappa} among not-yet-detected
    codes (strict inequality; detected codes are already subtracted and are
    never re-subtracted), subtract their codes from z, update kappa, stop on
    empty I or after M0 iterations.

    kappa policies: "window-midpoint" takes the midpoint of the shrinking
    guarantee window, falling back to 1/2 when the window is empty;
    "adaptive" (default) matches it on feasible windows but peels from the
    strongest remaining correlation downward when the window is empty, which
    is what makes the detector usable at user counts far beyond the
    guarantee regime; a float fixes kappa outright.
    """
    C = ensure_code_matrix(C)
    D = ensure_decoder(D, C)
    L, K = C.shape
    y = ensure_received(y, L)
    z = y.real.copy()
    detected = np.zeros(K, dtype=bool)
    trace = []
    terminated = "budget"
    for _ in range(thresholds.M0):
        corr = D.T @ z
        corr[detected] = 0.0
        kappa = _kappa_value(thresholds, int(detected.sum()), kappa_policy,
                             corr_max=float(np.abs(corr).max()))
        hits = (np.abs(corr) > kappa) & ~detected
        idx = np.nonzero(hits)[0]
        if idx.size == 0:
            terminated = "empty-I"
            trace.append(IterationRecord(kappa=kappa, added=idx,
                                         residual_norm=float(np.linalg.norm(z))))
            break
        detected[idx] = True
        z -= C[:, idx].sum(axis=1)
        trace.append(IterationRecord(kappa=kappa, added=idx,
                                     residual_norm=float(np.linalg.norm(z))))
    return DetectionResult(
        detected=np.nonzero(detected)[0],
        trace=trace,
        iterations=len(trace),
        terminated_by=terminated,
        guaranteed=thresholds.feasible,
    )


def estimate_user_count(y, moments: LambdaMoments, noise_var: float, L: int,
                        K: int | None = None) -> int:
    """Energy-based estimate of the number of active users:
    round((||Re y||^2 - L noise_var/2) / (L (1 - 2 mu_r + m2_r))), clamped to
    [0, K] when K is given (floor at 0 otherwise)."""
    denom = 1.0 - 2.0 * moments.mu_r + moments.m2_r
    if denom <= 0:
        raise ValueError("pathological moments: 1 - 2 mu_r + m2_r must be positive")
    y = np.asarray(y)
    G = float(np.dot(y.real, y.real))
    m_hat = int(round((G - L * noise_var / 2.0) / (L * denom)))
    m_hat = max(m_hat, 0)
    if K is not None:
        m_hat = min(m_hat, K)
    return m_hat
