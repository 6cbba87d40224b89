"""BPSK code bank: generation and plain-text persistence.

The base station and all subscribers share an L x K matrix of +/-1 codes,
one column per code, L < K (overcomplete bank). Codes are i.i.d. fair signs
from a seeded PRNG; columns are regenerated until no two are equal up to a
global sign flip (a negated duplicate makes {0,1} activity vectors
unidentifiable for every detector, so plain distinctness is not enough).
"""
from __future__ import annotations

import numpy as np

from .validation import ensure_code_matrix


def _sign_canonical(C: np.ndarray) -> np.ndarray:
    # normalize each column so its first entry is +1; duplicates up to sign
    # then collide exactly
    return C * C[0:1, :]


def generate_code_matrix(L: int, K: int, seed: int) -> np.ndarray:
    """Draw an L x K +/-1 code matrix, deterministic in (L, K, seed).

    Columns are pairwise distinct even after negating one of them.
    """
    if L <= 0 or K <= 0:
        raise ValueError("L and K must be positive")
    if L >= K:
        raise ValueError(f"code bank must be overcomplete (L < K), got L={L}, K={K}")
    rng = np.random.default_rng(seed)
    C = rng.choice([-1.0, 1.0], size=(L, K))
    while True:
        canon = _sign_canonical(C)
        _, first = np.unique(canon, axis=1, return_index=True)
        dup = np.setdiff1d(np.arange(K), first)
        if dup.size == 0:
            return C
        C[:, dup] = rng.choice([-1.0, 1.0], size=(L, dup.size))


def save_code_matrix(C, path) -> None:
    """Write a code matrix as text: header "L K", then one row per line of
    "+1"/"-1" entries."""
    C = ensure_code_matrix(C)
    L, K = C.shape
    with open(path, "w") as fh:
        fh.write(f"{L} {K}\n")
        for row in C:
            fh.write(" ".join("+1" if v > 0 else "-1" for v in row))
            fh.write("\n")


def load_code_matrix(path) -> np.ndarray:
    """Read a code matrix written by save_code_matrix; strict +/-1 validation."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be 'L K'")
        L, K = int(header[0]), int(header[1])
        C = np.empty((L, K))
        for i in range(L):
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: expected {L} rows, file ends at row {i}")
            parts = line.split()
            if len(parts) != K:
                raise ValueError(
                    f"{path}: row {i} has {len(parts)} entries, expected {K} (ragged row)"
                )
            for j, tok in enumerate(parts):
                if tok == "+1" or tok == "1":
                    C[i, j] = 1.0
                elif tok == "-1":
                    C[i, j] = -1.0
                else:
                    raise ValueError(
                        f"{path}: entry at row {i}, column {j} is {tok!r}, not +/-1"
                    )
    return C
