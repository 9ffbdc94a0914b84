"""Small dense complex linear algebra and real special functions.

Matrices and vectors are plain numpy arrays (complex128). Everything here
operates on tiny dimensions (a handful of antennas), so the routines favour
numerical transparency over asymptotic speed. Orthonormalisation routines
accept stacked inputs ``(..., m, n)`` so batched callers can reuse the exact
same arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

# Rank tolerance on the Gram determinant magnitude. Gaussian channels are
# almost surely full rank; hitting this triggers resampling upstream.
RANK_TOL = 1e-12
# Minimum norm of a subspace projection before it counts as degenerate.
PROJECTION_TOL = 1e-12


class RankDeficient(ValueError):
    """A channel matrix (or its Gram matrix) is numerically rank deficient."""


class DegenerateProjection(ValueError):
    """A codeword is numerically orthogonal to the target subspace."""


class DomainError(ValueError):
    """A special-function argument lies outside the supported domain."""


def _as_matrix(h) -> np.ndarray:
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={h.ndim}")
    if not np.all(np.isfinite(h)):
        raise ValueError("matrix entries must be finite")
    return h


def _as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got ndim={v.ndim}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def mgs_columns(a: np.ndarray) -> np.ndarray:
    """Orthonormalise the columns of ``a`` (modified Gram-Schmidt).

    Runs a second full sweep as a reorthogonalisation pass. Accepts a stack
    ``(..., m, n)`` with n <= m; the output columns span the same space as
    the input columns, slice by slice.
    """
    q = np.array(a, dtype=np.complex128)
    ncols = q.shape[-1]
    for _sweep in range(2):
        for j in range(ncols):
            col = q[..., :, j]
            for i in range(j):
                prev = q[..., :, i]
                coeff = np.sum(prev.conj() * col, axis=-1)
                col -= coeff[..., None] * prev
            norm = np.sqrt(np.sum(col.real**2 + col.imag**2, axis=-1))
            if np.any(norm < RANK_TOL):
                raise RankDeficient("column collapsed during orthonormalisation")
            col /= norm[..., None]
    return q


def gram_matrix(h: np.ndarray) -> np.ndarray:
    """H H^H for a stack of row-major channel matrices ``(..., n, m)``."""
    return h @ np.conj(np.swapaxes(h, -1, -2))


def orthonormal_basis(h) -> np.ndarray:
    """Orthonormal basis of the subspace spanned by the conjugated rows of ``h``.

    Returns an ``m x n`` matrix with orthonormal columns whose span equals the
    column span of ``h^H`` (the receive subspace a combiner can steer within).
    Raises :class:`RankDeficient` when ``|det(H H^H)|`` falls below the rank
    tolerance.
    """
    h = _as_matrix(h)
    n, m = h.shape
    if n > m:
        raise ValueError(f"need row count <= column count, got {n}x{m}")
    if abs(np.linalg.det(gram_matrix(h))) < RANK_TOL:
        raise RankDeficient("Gram determinant below tolerance")
    return mgs_columns(h.conj().T)


def subspace_project_unit(c, q: np.ndarray) -> np.ndarray:
    """Unit-norm projection of ``c`` onto the column span of orthonormal ``q``.

    Among unit vectors inside the subspace, the result maximises the
    cross-correlation magnitude with ``c``. Raises
    :class:`DegenerateProjection` when ``c`` is (numerically) orthogonal to
    the subspace.
    """
    c = _as_vector(c)
    proj = q @ (q.conj().T @ c)
    norm = np.linalg.norm(proj)
    if norm <= PROJECTION_TOL:
        raise DegenerateProjection("codeword orthogonal to the subspace")
    return proj / norm


def gram_solve(h, v) -> np.ndarray:
    """Solve ``(H H^H) u = H v`` for the unnormalised combiner ``u``."""
    h = _as_matrix(h)
    v = _as_vector(v)
    gram = gram_matrix(h)
    if abs(np.linalg.det(gram)) < RANK_TOL:
        raise RankDeficient("Gram determinant below tolerance")
    return np.linalg.solve(gram, h @ v)


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"ln_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def beta_function(a: float, b: float) -> float:
    """Beta function B(a, b), evaluated in the log domain.

    Stays finite for very lopsided arguments (e.g. ``a = 2**16``) where the
    naive gamma-product overflows.
    """
    if not (math.isfinite(a) and math.isfinite(b)) or a <= 0.0 or b <= 0.0:
        raise DomainError(f"beta_function requires positive arguments, got ({a}, {b})")
    return math.exp(ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))


def binomial(n: int, k: int) -> int:
    """Exact binomial coefficient C(n, k)."""
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"binomial requires 0 <= k <= n, got ({n}, {k})")
    return math.comb(n, k)


def haar_unitary(m: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``m x m`` unitary matrix.

    QR of a complex Ginibre draw with the R-diagonal phase correction, which
    makes the distribution exactly rotation invariant.
    """
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    z = (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))
