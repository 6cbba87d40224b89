"""Sparse binary recovery: lp-constrained total least squares, and Lasso.

The TLS detector alternates three steps on the real part of the received
signal y_r:

1. reweighting: W_t = (x_t^2 + weight_eps)^{(p-2)/2}, the iteratively
   reweighted quadratic surrogate for ||x||_p^p with 0 < p <= 1;
2. a Lagrangian dual ascent for the binary constraints x_t^2 - x_t = 0 of the
   weighted problem min_x (xi/2)||y_r - (C-Q)x||^2 + x^T W x, where the inner
   minimizer is closed-form x = P^{-1} v / 2 with
   P = W + (xi/2)(C-Q)^T(C-Q) + diag(mu); the candidate is accepted only when
   it certifies descent of the surrogate against the previous iterate;
3. the closed-form perturbation update Q = (Cx - y_r) x^T / (1 + ||x||^2),
   the exact minimizer of ||y_r - (C-Q)x||^2 + ||Q||_F^2 in Q.

The recorded objective is the majorized TLS merit

    G(x, Q) = (xi/2)(||y_r - (C-Q)x||^2 + ||Q||_F^2)
              + (2/p) sum_t (x_t^2 + weight_eps)^{p/2},

which is provably nonincreasing across accepted outer iterations (descent
certificate + exact Q step + tangency of the reweighted quadratic).

The final iterate is projected onto {0,1} by thresholding at 1/2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dpotrf, dpotrs

from .validation import ensure_code_matrix, ensure_received


# flat lasso xi for exactly-noiseless problems: any 1/xi below the unit
# active coefficients recovers the same thresholded support, and this one
# converges about 4x faster than the TLS default 25 (measured at L=16, K=32)
LASSO_NOISELESS_XI = 5.0


@dataclass
class TlsConfig:
    p: float = 0.5
    xi: float = 25.0
    max_outer: int = 60
    max_inner: int = 30          # backtracking halvings per ascent step
    max_dual_steps: int = 40
    stop_tol: float = 1e-3
    # weight floor large enough that a coordinate starting at 0 stays mobile
    # against the data curvature (see README, known limitations)
    weight_eps: float = 1e-3
    dual_step0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if not 0.0 <= self.stop_tol <= 1.0:
            raise ValueError("stop_tol must be in [0, 1]")
        if self.weight_eps <= 0:
            raise ValueError("weight_eps must be positive")


@dataclass
class TlsTrace:
    objective: list = field(default_factory=list)       # merit per outer step
    certificate_ok: list = field(default_factory=list)  # per outer step
    dual_steps: list = field(default_factory=list)
    outer_iterations: int = 0
    converged: bool = False


def q_update(x: np.ndarray, C: np.ndarray, y_r: np.ndarray) -> np.ndarray:
    """Exact minimizer of ||y_r - (C-Q)x||^2 + ||Q||_F^2 over Q."""
    r = C @ x - y_r
    return np.outer(r, x) / (1.0 + float(x @ x))


def focuss_weights(x_prev: np.ndarray, p: float, weight_eps: float) -> np.ndarray:
    """Reweighting diagonal W_t = (x_t^2 + weight_eps)^{(p-2)/2}."""
    if not 0.0 < p <= 2.0:
        raise ValueError("p must be in (0, 2]")
    return (x_prev ** 2 + weight_eps) ** ((p - 2.0) / 2.0)


def _factor(P: np.ndarray):
    """Cholesky factor of P, or None when P is not positive definite.

    Raw LAPACK potrf: P is always a fresh temporary built from finite
    inputs, and non-positive-definite iterates are routine in the ascent
    backtracking, so the info flag is much cheaper than an exception.
    """
    c, info = dpotrf(P, lower=1, overwrite_a=1)
    return c if info == 0 else None


def _shifted(H: np.ndarray, d: np.ndarray) -> np.ndarray:
    """H + diag(d) without materializing the diagonal matrix."""
    P = H.copy()
    P.flat[:: H.shape[0] + 1] += d
    return P


def _solve(chol, b: np.ndarray) -> np.ndarray:
    x, info = dpotrs(chol, b, lower=1)
    if info != 0:
        raise ValueError("cholesky solve failed")
    return x


def _dual_value(chol, a: np.ndarray, mu: np.ndarray):
    """Dual value only (one solve); Pv is returned for reuse on acceptance."""
    z = a - mu
    v = a + mu
    Pv = _solve(chol, v)
    return 0.25 * float(z @ Pv), Pv


def _dual_eval(chol, a: np.ndarray, mu: np.ndarray):
    """Dual value and gradient given a Cholesky factor of P."""
    g, Pv = _dual_value(chol, a, mu)
    Pz = _solve(chol, a - mu)
    grad = 0.25 * (-Pz * Pv - Pv + Pz)
    return g, grad, Pv


def _dual_grad(chol, a: np.ndarray, mu: np.ndarray, Pv: np.ndarray):
    """Gradient alone, reusing the Pv solve from _dual_value."""
    Pz = _solve(chol, a - mu)
    return 0.25 * (-Pz * Pv - Pv + Pz)


def dual_function_and_gradient(mu, C, Q, y_r, W, xi):
    """Dual value g(mu) and its gradient for the binary-constraint relaxation.

    Requires P = W + (xi/2)(C-Q)^T(C-Q) + diag(mu) positive definite; raises
    otherwise (the ascent must backtrack its step size to stay in the domain).
    """
    A = C - Q
    mu = np.asarray(mu, dtype=float)
    P = _shifted((xi / 2.0) * (A.T @ A), W + mu)
    chol = _factor(P)
    if chol is None:
        raise ValueError(
            "P is not positive definite: the dual iterate left the domain; "
            "backtrack the ascent step size")
    a = xi * (A.T @ y_r)
    g, grad, _ = _dual_eval(chol, a, mu)
    return g, grad


def primal_from_dual(mu, C, Q, y_r, W, xi) -> np.ndarray:
    """Inner minimizer x = P^{-1}(xi (C-Q)^T y_r + mu) / 2."""
    A = C - Q
    mu = np.asarray(mu, dtype=float)
    P = _shifted((xi / 2.0) * (A.T @ A), W + mu)
    chol = _factor(P)
    if chol is None:
        raise ValueError("P is not positive definite")
    v = xi * (A.T @ y_r) + mu
    return 0.5 * _solve(chol, v)


def _surrogate(x, W, A, y_r, xi):
    # S(x; W, A) = (xi/2) ||y_r - A x||^2 + x^T W x
    r = y_r - A @ x
    return 0.5 * xi * float(r @ r) + float(x @ (W * x))


def _merit(x, Q, C, y_r, xi, p, weight_eps):
    r = y_r - (C - Q) @ x
    data = 0.5 * xi * (float(r @ r) + float(np.sum(Q * Q)))
    return data + (2.0 / p) * float(np.sum((x ** 2 + weight_eps) ** (p / 2.0)))


def lp_tls_detect(C, y, cfg: TlsConfig):
    """Alternating lp-TLS detection; returns (support, x_final, trace).

    support is the index set of entries above 1/2 after the final {0,1}
    projection. trace.converged is False when the outer budget ran out before
    the iterate stabilized.
    """
    C = ensure_code_matrix(C)
    L, K = C.shape
    y = ensure_received(y, L)
    y_r = y.real.astype(float)

    # min-norm least squares start
    cho_R = scipy.linalg.cho_factor(C @ C.T + 1e-12 * np.eye(L),
                                    check_finite=False)
    x = C.T @ scipy.linalg.cho_solve(cho_R, y_r, check_finite=False)
    Q = np.zeros((L, K))

    trace = TlsTrace()
    trace.objective.append(_merit(x, Q, C, y_r, cfg.xi, cfg.p, cfg.weight_eps))
    for _ in range(cfg.max_outer):
        W = focuss_weights(x, cfg.p, cfg.weight_eps)
        A = C - Q
        H = 0.5 * cfg.xi * (A.T @ A)
        a = cfg.xi * (A.T @ y_r)
        # descent certificate: the accepted candidate must not increase the
        # current-weight surrogate relative to the current iterate; together
        # with the tangency of the reweighting and the exact Q step this
        # forces the merit G to be nonincreasing
        rhs = _surrogate(x, W, A, y_r, cfg.xi)

        mu = np.zeros(K)
        chol = _factor(_shifted(H, W))
        if chol is None:
            break  # weighted problem itself indefinite; keep current iterate
        g, grad, Pv = _dual_eval(chol, a, mu)
        step = cfg.dual_step0
        x_cand = None
        steps_used = 0
        for _ in range(cfg.max_dual_steps):
            accepted = False
            for _ in range(cfg.max_inner):
                mu_try = mu + step * grad
                chol_try = _factor(_shifted(H, W + mu_try))
                if chol_try is not None:
                    # value first; the gradient solve is only paid on accept
                    g_try, Pv_try = _dual_value(chol_try, a, mu_try)
                    if g_try > g:
                        grad = _dual_grad(chol_try, a, mu_try, Pv_try)
                        mu, g, Pv, chol = mu_try, g_try, Pv_try, chol_try
                        accepted = True
                        break
                step *= 0.5
            steps_used += 1
            if not accepted:
                break
            cand = 0.5 * Pv
            if _surrogate(cand, W, A, y_r, cfg.xi) <= rhs:
                x_cand = cand  # keep the deepest certified candidate
            step *= 2.0
        trace.dual_steps.append(steps_used)

        if x_cand is None:
            # the unconstrained minimizer (mu = 0) of the current-weight
            # surrogate always certifies (at worst equality)
            cand = primal_from_dual(np.zeros(K), C, Q, y_r, W, cfg.xi)
            if _surrogate(cand, W, A, y_r, cfg.xi) <= rhs:
                x_cand = cand
        trace.certificate_ok.append(x_cand is not None)
        if x_cand is None:
            break  # nothing certifies descent; iterate is stable

        delta = float(np.max(np.abs(x_cand - x)))
        x = x_cand
        Q = q_update(x, C, y_r)
        trace.outer_iterations += 1
        trace.objective.append(_merit(x, Q, C, y_r, cfg.xi, cfg.p, cfg.weight_eps))
        if delta < cfg.stop_tol:
            trace.converged = True
            break

    x_binary = (x > 0.5).astype(float)
    support = np.nonzero(x_binary)[0]
    return support, x, trace


def lasso_detect(C, y, xi: float):
    """Lasso baseline: min_x ||y_r - C x||^2 / 2 + ||x||_1 / xi by cyclic
    coordinate descent to duality gap 1e-8; support by thresholding at 1/2.

    The sweeps run in scikit-learn's compiled coordinate descent solver
    (cyclic order, soft-threshold per coordinate). Its stopping rule is
    gap-based but scaled by ||y||^2, so convergence to the absolute 1e-8
    gap is certified here from a freshly computed residual, tightening the
    solver tolerance and refitting from the warm iterate until the
    certificate holds. A plain python sweep loop finishes off the rare
    iterate the solver cannot push below the certificate on its own.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    C = ensure_code_matrix(C)
    L, K = C.shape
    y = ensure_received(y, L)
    y_r = y.real.astype(float)
    lam = 1.0 / xi
    colsq = float(L)  # +/-1 columns have squared norm L

    b = C.T @ y_r
    yy = float(y_r @ y_r)

    def exact_gap(x) -> float:
        r = y_r - C @ x
        ct_r = C.T @ r
        primal = 0.5 * float(r @ r) + lam * float(np.abs(x).sum())
        sc = min(1.0, lam / max(float(np.max(np.abs(ct_r))), 1e-300))
        theta = sc * r
        dual = 0.5 * yy - 0.5 * float((theta - y_r) @ (theta - y_r))
        return primal - dual

    if lam >= float(np.max(np.abs(b))):
        # null solution: the penalty dominates every correlation, gap is 0
        return np.zeros(0, dtype=np.intp), np.zeros(K)

    from sklearn.exceptions import ConvergenceWarning
    from sklearn.linear_model import Lasso

    Cf = np.asfortranarray(C, dtype=np.float64)
    model = Lasso(alpha=lam / L, fit_intercept=False, copy_X=False,
                  max_iter=100000, tol=1e-9 / max(yy, 1e-300), warm_start=True)
    x = np.zeros(K)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for _ in range(20):
            model.fit(Cf, y_r)
            x = np.array(model.coef_, dtype=float)
            if exact_gap(x) <= 1e-8:
                break
            model.tol /= 10.0
        else:
            # fallback polish: exact cyclic sweeps with an incrementally
            # maintained gradient until the certificate holds
            G = C.T @ C
            s = G @ x
            thr = lam / colsq
            for cycle in range(100000):
                for j in range(K):
                    xj = x[j]
                    rho = xj + (b[j] - s[j]) / colsq
                    a = abs(rho) - thr
                    xj_new = (a if rho >= 0.0 else -a) if a > 0.0 else 0.0
                    if xj_new != xj:
                        s += G[j] * (xj_new - xj)
                        x[j] = xj_new
                if exact_gap(x) <= 1e-8:
                    break
                s = G @ x
    support = np.nonzero(x > 0.5)[0]
    return support, x
