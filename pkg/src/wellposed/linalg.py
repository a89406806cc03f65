"""Dense complex matrix kernels.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Everything here is
meant for the small matrices that show up in the boundary algebra
(at most 12x12), so clarity wins over speed.

Eigenvalues come from a cyclic Jacobi iteration on the real symmetric
embedding ``[[Re A, -Im A], [Im A, Re A]]`` of a Hermitian ``A``; singular
values come from the same routine applied to the Jordan-Wielandt matrix
``[[0, A], [A*, 0]]``, whose spectrum is ``{+-sigma_i}``.  Working on the
embedding instead of ``A* A`` keeps small singular values resolvable down to
``eps * sigma_max``, which the invertibility threshold below needs.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg

from .errors import NotHermitianError, SingularMatrixError

#: Relative threshold sigma_min / sigma_max above which a square matrix counts as invertible.
INVERTIBILITY_RTOL = 1e-10


def as_cmatrix(a, name="matrix") -> np.ndarray:
    """Return ``a`` as a 2-D complex array, rejecting NaN/Inf entries."""
    arr = np.array(a, dtype=complex)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(a).T


def solve_linear(A, B, pivot_rtol: float = 1e-13) -> np.ndarray:
    """Solve ``A X = B`` by LU factorization with partial pivoting.

    Raises :class:`SingularMatrixError` when the smallest pivot of ``U`` is below
    ``pivot_rtol`` times the largest one.
    """
    A = as_cmatrix(A, "A")
    Bm = np.asarray(B, dtype=complex)
    vector = Bm.ndim == 1
    Bm = Bm.reshape(-1, 1) if vector else Bm
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    if Bm.shape[0] != A.shape[0]:
        raise ValueError(f"B has {Bm.shape[0]} rows, A has {A.shape[0]}")
    if A.shape[0] == 0:
        return Bm[:, 0] if vector else Bm.copy()
    with warnings.catch_warnings():
        # exact zero pivots are reported through SingularMatrixError below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= pivot_rtol * max(pivots.max(), np.finfo(float).tiny):
        raise SingularMatrixError(
            f"smallest pivot {pivots.min():.3e} vs largest {pivots.max():.3e}"
        )
    X = scipy.linalg.lu_solve((lu, piv), Bm, check_finite=False)
    return X[:, 0] if vector else X


def _jacobi_symmetric_eigenvalues(S: np.ndarray, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(S, dtype=float)
    n = a.shape[0]
    if n <= 1:
        return np.diag(a).copy()
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= eps * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= eps * eps * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
    return np.diag(a).copy()


def hermitian_eigenvalues(A, tol: float = 1e-10) -> np.ndarray:
    """Real eigenvalues of a Hermitian matrix, sorted nondecreasing.

    The asymmetry ``||A - A*||`` may be at most ``tol * max(1, ||A||)``
    (Frobenius norms); the matrix is symmetrized before iterating.
    """
    A = as_cmatrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise NotHermitianError(f"matrix is not square: {A.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    asym = np.linalg.norm(A - dagger(A))
    if asym > tol * max(1.0, np.linalg.norm(A)):
        raise NotHermitianError(f"||A - A*|| = {asym:.3e}")
    A = 0.5 * (A + dagger(A))
    X, Y = A.real, A.imag
    embedding = np.block([[X, -Y], [Y, X]])
    ev = np.sort(_jacobi_symmetric_eigenvalues(embedding))
    # every eigenvalue of A appears twice in the embedding
    return 0.5 * (ev[0::2] + ev[1::2])


def singular_values(A) -> np.ndarray:
    """Singular values of ``A`` (any shape), sorted nonincreasing."""
    A = as_cmatrix(A, "A")
    r, c = A.shape
    p = min(r, c)
    if p == 0:
        return np.zeros(0)
    jw = np.zeros((r + c, r + c), dtype=complex)
    jw[:r, r:] = A
    jw[r:, :r] = dagger(A)
    ev = hermitian_eigenvalues(jw)[::-1]
    return np.clip(ev[:p], 0.0, None)


def operator_norm(A) -> float:
    """Spectral norm (largest singular value); 0 for empty matrices."""
    sv = singular_values(A)
    return float(sv[0]) if sv.size else 0.0


def smallest_singular_value(A) -> float:
    sv = singular_values(A)
    return float(sv[-1]) if sv.size else 0.0


def is_invertible(A, rtol: float = INVERTIBILITY_RTOL) -> bool:
    """Square ``A`` with ``sigma_min / sigma_max > rtol``."""
    A = as_cmatrix(A, "A")
    if A.shape[0] != A.shape[1] or A.shape[0] == 0:
        return False
    sv = singular_values(A)
    return bool(sv[0] > 0.0 and sv[-1] / sv[0] > rtol)


def numerical_rank(A, rtol: float = INVERTIBILITY_RTOL) -> int:
    sv = singular_values(A)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


_TAYLOR_ORDER = 18


def matrix_exponential(A) -> np.ndarray:
    """``exp(A)`` by scaling and squaring with a degree-18 Taylor kernel.

    The argument is scaled by ``2**-k`` until its 1-norm is at most 1/2, where
    the truncation error is below ``0.5**19 / 19!`` (about 1e-23).
    """
    A = as_cmatrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"A must be square, got {A.shape}")
    norm1 = np.abs(A).sum(axis=0).max() if n else 0.0
    k = max(0, int(math.ceil(math.log2(norm1 / 0.5)))) if norm1 > 0.5 else 0
    X = A / (2.0 ** k)
    E = np.eye(n, dtype=complex)
    # Horner: I + X(I + X/2(I + X/3(...)))
    for j in range(_TAYLOR_ORDER, 0, -1):
        E = np.eye(n, dtype=complex) + (X @ E) / j
    for _ in range(k):
        E = E @ E
    return E
