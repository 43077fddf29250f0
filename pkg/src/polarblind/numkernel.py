"""Dense linear-algebra kernels used by the estimation algorithms.

Everything here operates on complex128 ndarrays.  The routines wrap the
obvious LAPACK calls but pin down the conventions the rest of the library
relies on: explicit rank checks, deterministic starting vectors, and a fixed
phase convention for singular vectors.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatchError, NoConvergenceError, RankDeficientError

# Relative singular-value floor below which a matrix counts as rank deficient.
COND_FLOOR = 1e-10


def pseudoinverse(a: np.ndarray, cond_floor: float = COND_FLOOR) -> np.ndarray:
    """Left Moore-Penrose pseudoinverse (A^H A)^-1 A^H of a tall matrix.

    Computed from the thin QR factorization A = QR as R^-1 Q^H, which is
    cheaper and better conditioned than forming the normal equations.

    Parameters
    ----------
    a : (m, n) array with m >= n, expected to have full column rank.
    cond_floor : raise if sigma_min/sigma_max falls below this ratio.

    Returns
    -------
    (n, m) array ``a_pinv`` with ``a_pinv @ a == I_n`` to working precision.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-d array, got ndim={a.ndim}")
    m, n = a.shape
    if m < n:
        raise DimensionMismatchError(f"matrix must be tall, got shape {a.shape}")
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0 or s[-1] < cond_floor * s[0]:
        raise RankDeficientError(
            f"singular value ratio {s[-1]:.3e}/{s[0]:.3e} below floor {cond_floor:.1e}"
        )
    q, r = np.linalg.qr(a, mode="reduced")
    return solve_triangular(r, q.conj().T, lower=False)


def projector(w: np.ndarray, cond_floor: float = COND_FLOOR) -> np.ndarray:
    """Orthogonal projector W (W^H W)^-1 W^H onto the column space of W.

    Hermitian and idempotent by construction; the caller gets the explicit
    dense matrix because downstream objective evaluations need it.
    """
    w = np.asarray(w, dtype=np.complex128)
    return w @ pseudoinverse(w, cond_floor=cond_floor)


def _start_vector(x: np.ndarray) -> np.ndarray:
    # Deterministic start: conjugate of the largest-norm row.  Its image under
    # X is never zero for a nonzero X, so the iteration cannot stall at 0.
    row_norms = np.linalg.norm(x, axis=1)
    v0 = x[int(np.argmax(row_norms))].conj()
    return v0 / np.linalg.norm(v0)


def principal_pair(
    x: np.ndarray, max_iters: int = 100, tol: float = 1e-10
) -> tuple[float, np.ndarray, np.ndarray]:
    """Leading singular triple (sigma, u, v) of X, so X ~= sigma * u v^H.

    Uses power iteration on X^H X with a deterministic starting vector and
    stops when the Rayleigh quotient changes by less than ``tol`` relatively.
    The returned pair is phase-pinned: the largest-magnitude entry of u is
    rotated to the positive real axis (u and v rotated together, so the outer
    product u v^H is untouched).

    Raises
    ------
    NoConvergenceError if the Rayleigh quotient has not settled after
    ``max_iters`` sweeps.  Callers may fall back to a full SVD.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-d array, got ndim={x.ndim}")
    if not np.any(x):
        raise ValueError("principal_pair of an all-zero matrix is undefined")

    v = _start_vector(x)
    lam_prev = np.inf
    for _ in range(max_iters):
        xv = x @ v
        lam = float(np.real(np.vdot(xv, xv)))  # Rayleigh quotient of X^H X
        w = x.conj().T @ xv
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v landed exactly in the null space; restart cannot help more
            # than the deterministic start already did.
            raise NoConvergenceError("power iteration mapped to the null space")
        v = w / nw
        if abs(lam - lam_prev) <= tol * max(lam, np.finfo(float).tiny):
            break
        lam_prev = lam
    else:
        raise NoConvergenceError(f"power iteration did not settle in {max_iters} sweeps")

    sigma = float(np.sqrt(lam))
    u = (x @ v) / sigma
    u /= np.linalg.norm(u)
    i = int(np.argmax(np.abs(u)))
    phase = u[i] / abs(u[i])
    return sigma, u / phase, v / phase
