"""SVD, singular value shrinkage and numeric rank."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import ConfigError, NumericError

RANK_FLOOR = 1e-12


class SvdFactors(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def svd(A) -> SvdFactors:
    """Economy SVD with ``A = U @ diag(S) @ V.T``."""
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise NumericError("svd input contains non-finite entries")
    try:
        U, S, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails where the slower gesvd still converges
        try:
            U, S, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericError(
                f"SVD of {A.shape[0]}x{A.shape[1]} matrix did not converge "
                f"(|A|_F={np.linalg.norm(A):.3e}) after gesdd and gesvd: {exc}") from exc
    return SvdFactors(U, S, Vt.T)


def numeric_rank(S, sigma1: float | None = None, shape=None) -> int:
    """Number of singular values above ``max(rows, cols) * sigma1 * eps``.

    ``shape`` defaults to ``(len(S), len(S))``; the tolerance never drops
    below ``1e-12``.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.size == 0:
        return 0
    if sigma1 is None:
        sigma1 = float(S[0])
    dim = max(shape) if shape is not None else len(S)
    tol = max(dim * sigma1 * np.finfo(np.float64).eps, RANK_FLOOR)
    return int(np.count_nonzero(S > tol))


def _truncated_factors(A, k):
    rows, cols = A.shape
    v0 = np.ones(min(rows, cols)) / np.sqrt(min(rows, cols))
    U, S, Vt = scipy.sparse.linalg.svds(A, k=k, v0=v0, solver="arpack")
    order = np.argsort(S)[::-1]
    return U[:, order], S[order], Vt[order].T


def shrink_factors(A, threshold: float, rank_hint: int | None = None):
    """Shrink singular values of ``A`` by ``threshold``.

    Returns ``(Z, S_shrunk)`` where ``S_shrunk`` holds the surviving
    (strictly positive) shrunk values in nonincreasing order.  With a
    ``rank_hint`` well below ``min(A.shape)`` a truncated decomposition is
    tried first and accepted only if the smallest computed singular value is
    already below the threshold, i.e. no survivor was missed.
    """
    if threshold < 0:
        raise ConfigError("shrinkage threshold must be non-negative")
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise NumericError("shrink input contains non-finite entries")
    small = min(A.shape)
    factors = None
    if rank_hint is not None and small > 0 and rank_hint < small / 4:
        k = min(small - 1, rank_hint + 10)
        if k >= 1:
            try:
                U, S, V = _truncated_factors(A, k)
            except (scipy.sparse.linalg.ArpackError, scipy.sparse.linalg.ArpackNoConvergence):
                U = None
            if U is not None and S[-1] <= threshold:
                factors = (U, S, V)
    if factors is None:
        factors = svd(A)
    U, S, V = factors
    shrunk = np.maximum(S - threshold, 0.0)
    # survivors at rounding level of the input spectrum are zero: threshold = sigma1
    # must give the zero matrix even if the two SVD calls differ in the last ulp
    noise = max(A.shape) * (float(S[0]) if S.size else 0.0) * np.finfo(np.float64).eps
    keep = shrunk > noise
    shrunk[~keep] = 0.0
    S_keep = shrunk[keep]
    Z = (U[:, keep] * S_keep) @ V[:, keep].T
    return Z, S_keep


def shrink(A, threshold: float) -> np.ndarray:
    """``U @ diag(max(S - threshold, 0)) @ V.T`` for ``U, S, V = svd(A)``."""
    return shrink_factors(A, threshold)[0]
