"""Dense complex linear algebra and grid helpers.

Everything here works on small (n <= a few hundred) complex128 arrays.
Tolerances are relative to the max-norm of the inputs with an absolute
floor of ``ABS_FLOOR``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

EPS = np.finfo(float).eps
ABS_FLOOR = 1e-14


class SingularMatrix(np.linalg.LinAlgError):
    """A linear system is singular to working precision."""


class NoUniqueSolution(np.linalg.LinAlgError):
    """Sylvester equation whose operator is singular (spectra of A and -B meet)."""


def maxnorm(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _square(a, name="A"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class UniformGrid:
    """Nodes ``t_i = i*h`` on ``[0, T]`` with ``N`` panels."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    def level(self, tau: float) -> int:
        """Index of the node closest to ``tau``."""
        j = int(round(tau / self.h))
        if not 0 <= j <= self.N:
            raise ValueError(f"tau={tau} outside [0, {self.T}]")
        return j


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    """Composite trapezoid weights on ``n`` panels (``n + 1`` nodes)."""
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2
    if n == 0:
        w[0] = 0.0
    return w


def mat_exp(a, t: float = 1.0) -> np.ndarray:
    """``exp(t*A)`` by scaling and squaring with a Pade approximant."""
    a = _square(a)
    return scipy.linalg.expm(t * a)


def phi_integral(a, t: float) -> np.ndarray:
    """``int_0^t exp(s*A) ds`` from one augmented exponential.

    Stays well defined when ``A`` is singular, unlike ``A^{-1}(e^{tA} - I)``.
    """
    a = _square(a)
    n = a.shape[0]
    aug = np.zeros((2 * n, 2 * n), dtype=complex)
    aug[:n, :n] = a
    aug[:n, n:] = np.eye(n)
    return scipy.linalg.expm(t * aug)[:n, n:]


class LU:
    """LU factorization that refuses near-singular pivots.

    A pivot counts as singular when ``|u_ii| <= n * eps * max|A|``.
    """

    def __init__(self, a):
        a = _square(a)
        self.n = a.shape[0]
        scale = maxnorm(a)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self._lu, self._piv = scipy.linalg.lu_factor(a, check_finite=True)
        pivots = np.abs(np.diag(self._lu))
        self.min_pivot = float(pivots.min()) if self.n else 0.0
        if scale == 0.0 or self.min_pivot <= max(self.n, 1) * EPS * scale:
            raise SingularMatrix(
                f"pivot {self.min_pivot:.3e} is singular relative to max|A|={scale:.3e}"
            )

    def solve(self, b) -> np.ndarray:
        return scipy.linalg.lu_solve((self._lu, self._piv), np.asarray(b, dtype=complex))


def lu_solve(a, b) -> np.ndarray:
    """Solve ``A X = B``; raise :class:`SingularMatrix` on a degenerate pivot."""
    b = np.asarray(b, dtype=complex)
    a = _square(a)
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    return LU(a).solve(b)


def is_hermitian(a, rtol: float = 1e-10) -> bool:
    a = np.asarray(a)
    return maxnorm(a - a.conj().T) <= max(rtol * maxnorm(a), ABS_FLOOR)


def posdef_check(a) -> bool:
    """True iff the hermitian matrix ``A`` is strictly positive definite.

    Uses a Cholesky factorization and requires every squared pivot to exceed
    ``1e-12 * max|A|``.
    """
    a = _square(a)
    if not is_hermitian(a):
        raise ValueError("posdef_check needs a hermitian matrix")
    scale = maxnorm(a)
    if scale == 0.0:
        return False
    a = (a + a.conj().T) / 2
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    pivots = np.abs(np.diag(chol)) ** 2
    return bool(np.all(pivots > 1e-12 * scale))


def sylvester_solve(a, b, c) -> np.ndarray:
    """Solve ``A X + X B = C`` through the Kronecker linearization.

    Raises :class:`NoUniqueSolution` when the spectra of ``A`` and ``-B``
    intersect (the linearized operator is singular).
    """
    a = _square(a, "A")
    b = _square(b, "B")
    c = np.asarray(c, dtype=complex)
    m, n = a.shape[0], b.shape[0]
    if c.shape != (m, n):
        raise ValueError(f"C must have shape {(m, n)}, got {c.shape}")
    # column-major vec: vec(AX + XB) = (I kron A + B^T kron I) vec X
    op = np.kron(np.eye(n), a) + np.kron(b.T, np.eye(m))
    try:
        x = lu_solve(op, c.reshape(-1, order="F"))
    except SingularMatrix as exc:
        raise NoUniqueSolution(str(exc)) from None
    return x.reshape((m, n), order="F")


def tsvd_lstsq(a, b, rel_threshold: float = 1e-10):
    """Minimum-norm least squares keeping singular values >= rel_threshold * s_max.

    Returns ``(X, rank)``.
    """
    if not 0 < rel_threshold < 1:
        raise ValueError("rel_threshold must lie in (0, 1)")
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        shape = (a.shape[1],) + b.shape[1:]
        return np.zeros(shape, dtype=complex), 0
    keep = s >= rel_threshold * s[0]
    rank = int(keep.sum())
    coef = u[:, keep].conj().T @ b
    coef = coef / (s[keep][:, None] if coef.ndim == 2 else s[keep])
    return vh[keep].conj().T @ coef, rank
