"""Decoder matrix designs.

All decoders satisfy the unit-correlation constraint D_l^T C_l = 1 so that an
active code contributes exactly 1 to its own decoder output. Three designs:

- scaled code matched filter D = C/L (baseline);
- MMSE closed form D_l ~ (delta R + I nv/2)^{-1} C_l with R = C C^T, evaluated
  through the eigendecomposition of R;
- min-coherence design solving

    min  eps mu_r alpha + M0 beta + Upsilon gamma
    s.t. D_l^T C_l = 1,  |sum_j C_j^T D_l| <= alpha,
         |C_j^T D_l| <= beta (j != l),  ||D_l||_2 <= gamma,

  a second-order cone program handled by a first-order primal-dual scheme
  (Chambolle-Pock): the three max terms dualize into norm-ball projections
  (l1, l1 over off-diagonal entries, l1-of-l2 over columns) and the equality
  constraint has an exact per-column affine projection. Warm start at C/L and
  best-iterate tracking mean the result never scores worse than the baseline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import ensure_code_matrix


@dataclass
class DecoderMatrix:
    entries: np.ndarray
    provenance: str                     # identity-scaled | decoder-I | decoder-II
    design_inputs: dict = field(default_factory=dict)
    coh_alpha: float = 0.0
    coh_beta: float = 0.0
    coh_gamma: float = 0.0
    objective: float | None = None
    converged: bool = True


def coherence_stats(D: np.ndarray, C: np.ndarray):
    """(alpha, beta, gamma): max |sum-correlation|, max off-diagonal
    |cross-correlation|, max column norm."""
    B = C.T @ D
    s = C.sum(axis=1) @ D
    off = np.abs(B)
    np.fill_diagonal(off, 0.0)
    return (
        float(np.max(np.abs(s))),
        float(np.max(off)),
        float(np.max(np.linalg.norm(D, axis=0))),
    )


def decoder_objective(D: np.ndarray, C: np.ndarray, eps: float, mu_r: float,
                      M0: int, Upsilon: float):
    """Coherence statistics and the design merit eps mu_r alpha + M0 beta +
    Upsilon gamma."""
    a, b, g = coherence_stats(D, C)
    return a, b, g, eps * mu_r * a + M0 * b + Upsilon * g


def scaled_code_decoder(C) -> DecoderMatrix:
    """D = C/L; satisfies D_l^T C_l = ||C_l||^2 / L = 1 exactly."""
    C = ensure_code_matrix(C)
    L = C.shape[0]
    D = C / L
    a, b, g = coherence_stats(D, C)
    return DecoderMatrix(entries=D, provenance="identity-scaled",
                         coh_alpha=a, coh_beta=b, coh_gamma=g)


def mmse_delta(eps: float, mu_r: float, m2_r: float) -> float:
    """Interference strength delta = eps (1 + m2_r - 2 mu_r) for the MMSE
    design (real-part moments)."""
    return eps * (1.0 + m2_r - 2.0 * mu_r)


def design_decoder_mmse(C, delta: float, noise_var: float) -> DecoderMatrix:
    """MMSE decoder via the eigendecomposition of R = C C^T.

    D_l = A^{-1} C_l / (C_l^T A^{-1} C_l) with A = delta R + I noise_var/2.
    """
    C = ensure_code_matrix(C)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0 and noise_var == 0:
        raise ValueError("delta = 0 with zero noise makes the design singular")
    w, U = np.linalg.eigh(C @ C.T)
    d = delta * w + noise_var / 2.0
    if np.any(d <= 1e-14 * d.max()):
        raise ValueError("regularized matrix is numerically singular")
    V = U.T @ C                      # (L, K), columns U^T C_l
    AinvC = U @ (V / d[:, None])
    denom = np.einsum("ij,ij->j", V, V / d[:, None])
    D = AinvC / denom
    a, b, g = coherence_stats(D, C)
    return DecoderMatrix(
        entries=D, provenance="decoder-II",
        design_inputs={"delta": delta, "noise_var": noise_var},
        coh_alpha=a, coh_beta=b, coh_gamma=g,
    )


def _project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball (Duchi et al. 2008)."""
    if radius <= 0.0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    idx = np.nonzero(u * np.arange(1, u.size + 1) > css - radius)[0][-1]
    thr = (css[idx] - radius) / (idx + 1.0)
    return np.sign(v) * np.maximum(a - thr, 0.0)


class DesignError(RuntimeError):
    """Raised when the iterative design exhausts its budget; carries the last
    iterate and its constraint residuals."""

    def __init__(self, message, decoder: DecoderMatrix, residual: float):
        super().__init__(message)
        self.decoder = decoder
        self.residual = residual


def design_decoder_optimal(C, eps: float, mu_r: float, M0: int, Upsilon: float,
                           solver_opts: dict | None = None) -> DecoderMatrix:
    """Min-coherence decoder (primal-dual solver, see module docstring).

    solver_opts keys: max_iters (8000), check_every (25), tol (1e-9),
    stall_window (600), raise_on_budget (False).
    """
    C = ensure_code_matrix(C)
    if eps < 0 or mu_r < 0 or Upsilon < 0:
        raise ValueError("eps, mu_r, Upsilon must be nonnegative")
    if M0 < 1:
        raise ValueError("M0 must be at least 1")
    opts = dict(max_iters=8000, check_every=25, tol=1e-9, stall_window=600,
                balance=None, raise_on_budget=False)
    opts.update(solver_opts or {})

    L, K = C.shape
    csum = C.sum(axis=1)
    c1, c2, c3 = eps * mu_r, float(M0), Upsilon

    # block step sizes: each dual block gets a step inversely proportional to
    # the squared norm of its own linear map, so the heavy csum block cannot
    # throttle the shared primal step (tau * sum_i sig_i |A_i|^2 <= 0.99).
    # balance trades dual progress against primal progress; the optimal dual
    # variables scale with the coherence weight M0, so the default grows with it.
    eta = float(opts["balance"]) if opts["balance"] is not None else max(10.0, float(M0))
    n1 = np.linalg.norm(csum) ** 2 + 1e-12
    n2 = np.linalg.norm(C, 2) ** 2
    n3 = 1.0
    sig1, sig2, sig3 = eta / n1, eta / n2, eta / n3
    tau = 0.99 / (3.0 * eta)

    D = C / L
    Dbar = D.copy()
    z1 = np.zeros(K)
    Z2 = np.zeros((K, K))
    Z3 = np.zeros((L, K))
    diag = np.arange(K)

    def merit(Dm):
        a, b, g = coherence_stats(Dm, C)
        return c1 * a + c2 * b + c3 * g

    best_obj = merit(D)
    best_D = D.copy()
    best_it = 0
    stalled = False
    for it in range(1, opts["max_iters"] + 1):
        # dual ascent + projection onto the conjugate domains
        z1 = _project_l1(z1 + sig1 * (csum @ Dbar), c1)
        Z2 += sig2 * (C.T @ Dbar)
        Z2[diag, diag] = 0.0
        Z2 = _project_l1(Z2.ravel(), c2).reshape(K, K)
        Z3 += sig3 * Dbar
        if c3 > 0.0:
            gn = np.linalg.norm(Z3, axis=0)
            gn_new = _project_l1(gn, c3)
            with np.errstate(invalid="ignore", divide="ignore"):
                scale = np.where(gn > 0.0, gn_new / gn, 0.0)
            Z3 *= scale
        else:
            Z3[:] = 0.0
        # primal descent + exact affine projection (keeps D always feasible)
        D_old = D
        G = np.outer(csum, z1) + C @ Z2 + Z3
        D = D - tau * G
        r = 1.0 - np.einsum("ij,ij->j", C, D)
        D = D + C * (r / L)
        Dbar = 2.0 * D - D_old
        if it % opts["check_every"] == 0:
            obj = merit(D)
            if obj < best_obj - opts["tol"]:
                best_obj = obj
                best_D = D.copy()
                best_it = it
            elif obj < best_obj:
                best_obj = obj
                best_D = D.copy()
            if it - best_it >= opts["stall_window"]:
                stalled = True
                break

    converged = stalled
    a, b, g = coherence_stats(best_D, C)
    dec = DecoderMatrix(
        entries=best_D, provenance="decoder-I",
        design_inputs={"eps": eps, "mu_r": mu_r, "M0": M0, "Upsilon": Upsilon},
        coh_alpha=a, coh_beta=b, coh_gamma=g,
        objective=c1 * a + c2 * b + c3 * g,
        converged=converged,
    )
    if not converged and opts["raise_on_budget"]:
        resid = float(np.max(np.abs(np.einsum("ij,ij->j", C, best_D) - 1.0)))
        raise DesignError("design did not stall within the iteration budget",
                          dec, resid)
    return dec
