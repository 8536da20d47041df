"""Evaluation helpers: permutation-aligned endmember error, optimal
assignment, SNR, and singular-value spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ValidationError

_JACOBI_SWEEPS = 30


@dataclass(frozen=True)
class AlignmentResult:
    """Outcome of matching estimated endmember columns to the truth.

    permutation[i] is the truth column assigned to estimate column i;
    per_column_sq[i] is the squared distance of that pair; mse is the
    total squared error normalized by K times the truth's squared
    Frobenius norm.
    """

    permutation: np.ndarray
    mse: float
    per_column_sq: np.ndarray


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Optimal assignment on a square cost matrix.

    Returns perm with perm[i] the column assigned to row i, minimizing the
    total cost.  Among all optimal assignments the lexicographically
    smallest perm is returned, found by fixing rows in order to the
    smallest column that keeps the optimum attainable.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValidationError(f"cost matrix must be square, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValidationError("cost matrix must be finite")
    k = c.shape[0]

    def optimum(sub: np.ndarray) -> float:
        if sub.size == 0:
            return 0.0
        rows, cols = linear_sum_assignment(sub)
        return float(sub[rows, cols].sum())

    total = optimum(c)
    slack = 1e-12 * max(1.0, float(np.abs(c).max())) * k
    perm = np.empty(k, dtype=int)
    cols_left = list(range(k))
    fixed = 0.0
    for i in range(k):
        for pos, j in enumerate(cols_left):
            rest = [jj for jj in cols_left if jj != j]
            sub = c[np.ix_(range(i + 1, k), rest)]
            if fixed + c[i, j] + optimum(sub) <= total + slack:
                perm[i] = j
                fixed += c[i, j]
                cols_left.pop(pos)
                break
        else:
            raise AssertionError("assignment search lost the optimum")
    return perm


def aligned_mse(estimate: np.ndarray, truth: np.ndarray) -> AlignmentResult:
    """Normalized squared endmember error after optimal column matching.

    Columns of the estimate are matched one-to-one to truth columns by
    minimum total squared distance; the reported value is that total
    divided by K times the squared Frobenius norm of the truth.
    """
    a = np.atleast_2d(np.asarray(estimate, dtype=np.float64))
    b = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: estimate {a.shape} vs truth {b.shape}")
    k = a.shape[1]
    diff = a[:, :, None] - b[:, None, :]
    cost = np.einsum("mij,mij->ij", diff, diff)
    perm = hungarian(cost)
    per_col = cost[np.arange(k), perm]
    denom = k * float(np.sum(b * b))
    if denom == 0.0:
        raise ValidationError("truth matrix is identically zero")
    return AlignmentResult(
        permutation=perm,
        mse=float(per_col.sum() / denom),
        per_column_sq=per_col,
    )


def snr_db(endmembers: np.ndarray, abundances: np.ndarray, sigma2: float) -> float:
    """Signal-to-noise ratio in dB of a mixing model with noise variance
    sigma2: signal power is the mean squared entry of the clean mix."""
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be positive, got {sigma2!r}")
    a = np.atleast_2d(np.asarray(endmembers, dtype=np.float64))
    z = np.atleast_2d(np.asarray(abundances, dtype=np.float64))
    clean = a @ z
    m, n = clean.shape
    return float(10.0 * np.log10(np.sum(clean * clean) / (sigma2 * m * n)))


def singular_spectrum(mat: np.ndarray) -> np.ndarray:
    """All singular values of a matrix, descending.

    One-sided Jacobi: rotate column pairs until mutually orthogonal, then
    the column norms are the singular values.  Working on the transpose
    when it is thinner keeps the pair count at min(rows, cols)^2.
    """
    a = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    if not np.all(np.isfinite(a)):
        raise ValidationError("singular_spectrum requires finite input")
    if a.shape[0] < a.shape[1]:
        a = a.T
    a = a.copy()
    n = a.shape[1]
    eps = np.finfo(np.float64).eps
    for _ in range(_JACOBI_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                dot_pq = float(a[:, p] @ a[:, q])
                norm_p = float(a[:, p] @ a[:, p])
                norm_q = float(a[:, q] @ a[:, q])
                if norm_p == 0.0 or norm_q == 0.0:
                    continue
                if abs(dot_pq) <= 10.0 * eps * np.sqrt(norm_p * norm_q):
                    continue
                rotated = True
                tau = (norm_q - norm_p) / (2.0 * dot_pq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                col_p = a[:, p].copy()
                a[:, p] = cs * col_p - sn * a[:, q]
                a[:, q] = sn * col_p + cs * a[:, q]
        if not rotated:
            break
    svals = np.sqrt((a * a).sum(axis=0))
    svals[::-1].sort()
    return svals
