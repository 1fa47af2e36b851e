"""Dense linear algebra for the closed-form ridge training path.

All functions are pure and operate on float64 arrays; 32-bit feature data is
promoted on entry.  The solver path is a Cholesky factorization (LAPACK
dpotrf/dpotrs): the systems solved here have the form ``(G + I/C) X = R``
with ``G`` a Gram matrix and ``C > 0``, which is symmetric positive definite
by construction.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs

# Relative Frobenius tolerance under which an input counts as symmetric.
SYMMETRY_RTOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization encountered a non-positive pivot."""

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(
            f"matrix is not positive definite: pivot {pivot} "
            f"(leading minor of order {pivot + 1}) is not positive"
        )


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite 2-D array and return it as float64."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: cannot multiply {a.shape} by {b.shape}"
        )
    return a @ b


def gram(a) -> np.ndarray:
    """aᵀa in float64, symmetrized so the result is exactly symmetric."""
    a = as_matrix(a)
    if a.size == 0:
        raise ValueError("gram of an empty matrix")
    g = a.T @ a
    return (g + g.T) * 0.5


def spd_solve(a, b) -> np.ndarray:
    """Solve ``a X = b`` for symmetric positive definite ``a``.

    ``a`` must be square and symmetric to within ``SYMMETRY_RTOL`` (relative
    Frobenius); it is symmetrized before factorization to absorb round-off.
    Raises :class:`NotPositiveDefiniteError` naming the failing pivot when
    the factorization breaks down.
    """
    a = as_matrix(a, "coefficient matrix")
    b = as_matrix(b, "right-hand side")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"coefficient matrix must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix {a.shape} vs right-hand side {b.shape}"
        )
    norm = np.linalg.norm(a)
    if norm > 0.0 and np.linalg.norm(a - a.T) > SYMMETRY_RTOL * norm:
        raise ValueError("coefficient matrix is not symmetric")
    sym = (a + a.T) * 0.5
    factor, info = dpotrf(sym, lower=1, overwrite_a=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    x, info = dpotrs(factor, b, lower=1)
    if info != 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrs")
    return x
