"""Shared input validation helpers."""
from __future__ import annotations

import numpy as np


def ensure_code_matrix(C) -> np.ndarray:
    """Validate an L x K +/-1 code matrix and return it as float64."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError(f"code matrix must be 2-D, got shape {C.shape}")
    L, K = C.shape
    if L == 0 or K == 0:
        raise ValueError("code matrix dimensions must be positive")
    if not np.all(np.abs(C) == 1.0):
        bad = np.argwhere(np.abs(C) != 1.0)[0]
        raise ValueError(
            f"code matrix entry at row {bad[0]}, column {bad[1]} is not +/-1"
        )
    return C


def ensure_received(y, L: int) -> np.ndarray:
    """Validate a received signal vector of length L (complex or real)."""
    y = np.asarray(y)
    if y.shape != (L,):
        raise ValueError(f"received signal must have shape ({L},), got {y.shape}")
    return y.astype(complex, copy=False)


def ensure_decoder(D, C) -> np.ndarray:
    """Validate decoder shape against the code matrix and the unit-correlation
    constraint D_l^T C_l = 1."""
    D = np.asarray(D, dtype=float)
    if D.shape != C.shape:
        raise ValueError(f"decoder shape {D.shape} does not match code matrix {C.shape}")
    diag = np.einsum("ij,ij->j", D, C)
    err = np.max(np.abs(diag - 1.0))
    if err > 1e-8:
        raise ValueError(f"decoder violates D_l^T C_l = 1 (max deviation {err:.3e})")
    return D
