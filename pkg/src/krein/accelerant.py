"""Accelerants with a jump at the origin, their resolvent kernels and potentials.

Discretization
--------------
All integrals over ``[0, tau]`` use the composite trapezoid rule on the grid
nodes, split at every point where the integrand jumps.  For the convolution
``int k(t_i - v) x(v) dv`` the kernel jumps at ``v = t_i``; the left panel sees
``k_plus(0)`` and the right panel ``k_minus(0)``.

For a source node ``s`` the resolvent column ``x(v) = gamma(v, s)`` itself
jumps at ``v = s`` by ``J = k_plus(0) - k_minus(0)``.  Writing
``x = y + J * H(v - s)`` with the unit step ``H`` (``H(0) = 0``) leaves a
continuous unknown ``y`` that solves a system with the same matrix for every
source, so one factorization per level serves all columns at O(h^2).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .lincore import LU, SingularMatrix, UniformGrid, maxnorm, posdef_check

log = logging.getLogger(__name__)


def _blocks_to_matrix(blocks: np.ndarray) -> np.ndarray:
    """(n, n, r, r) block array -> (n*r, n*r) matrix."""
    n, _, r, _ = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(n * r, n * r)


def _stack_rows(blocks: np.ndarray) -> np.ndarray:
    """(n, m, r, r) column-of-sources array -> (n*r, m*r)."""
    n, m, r, _ = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(n * r, m * r)


def _unstack_rows(mat: np.ndarray, n: int, m: int, r: int) -> np.ndarray:
    return mat.reshape(n, r, m, r).transpose(0, 2, 1, 3)


@dataclass
class AccelerantKernel:
    """Hermitian ``r x r`` kernel on ``[-T, T]`` sampled on a uniform grid.

    ``k_plus[i] = k(t_i)`` and ``k_minus[i] = k(-t_i)``, both of shape
    ``(N + 1, r, r)``; index 0 holds the one-sided limits ``k(0+)`` and
    ``k(0-)``, which may differ.
    """

    grid: UniformGrid
    k_plus: np.ndarray
    k_minus: np.ndarray
    herm_tol: float = 1e-10

    def __post_init__(self):
        self.k_plus = np.asarray(self.k_plus, dtype=complex)
        self.k_minus = np.asarray(self.k_minus, dtype=complex)
        n = self.grid.N + 1
        for name in ("k_plus", "k_minus"):
            arr = getattr(self, name)
            if arr.ndim != 3 or arr.shape[0] != n or arr.shape[1] != arr.shape[2]:
                raise ValueError(f"{name} must have shape ({n}, r, r), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if self.k_plus.shape != self.k_minus.shape:
            raise ValueError("k_plus and k_minus shapes differ")
        defect = self.hermitian_defect()
        if defect > max(self.herm_tol * maxnorm(self.k_plus), 1e-14):
            raise ValueError(f"kernel is not hermitian: max|k(-t) - k(t)^*| = {defect:.3e}")

    @classmethod
    def from_function(
        cls,
        k: Callable[[float], np.ndarray],
        T: float,
        N: int,
        k0_plus=None,
        k0_minus=None,
    ) -> "AccelerantKernel":
        """Sample ``k`` (a callable of one real argument returning r x r).

        ``k0_plus``/``k0_minus`` override the values at the origin; by default
        ``k(0)`` is used on both sides.
        """
        grid = UniformGrid(T, N)
        t = grid.nodes
        kp = np.array([np.atleast_2d(k(x)) for x in t], dtype=complex)
        km = np.array([np.atleast_2d(k(-x)) for x in t], dtype=complex)
        if k0_plus is not None:
            kp[0] = np.atleast_2d(k0_plus)
        if k0_minus is not None:
            km[0] = np.atleast_2d(k0_minus)
        return cls(grid, kp, km)

    @classmethod
    def zero(cls, r: int, T: float, N: int) -> "AccelerantKernel":
        z = np.zeros((N + 1, r, r), dtype=complex)
        return cls(UniformGrid(T, N), z, z.copy())

    @property
    def r(self) -> int:
        return self.k_plus.shape[1]

    @property
    def jump(self) -> np.ndarray:
        """``k(0+) - k(0-)``."""
        return self.k_plus[0] - self.k_minus[0]

    def hermitian_defect(self) -> float:
        return maxnorm(self.k_minus - self.k_plus.conj().transpose(0, 2, 1))

    def truncate(self, N: int) -> "AccelerantKernel":
        """Restriction to ``[-t_N, t_N]`` on the same step."""
        if not 1 <= N <= self.grid.N:
            raise ValueError(f"cannot truncate to N={N}")
        return AccelerantKernel(
            UniformGrid(N * self.grid.h, N), self.k_plus[: N + 1], self.k_minus[: N + 1]
        )

    def lag_table(self, j: int, diag: np.ndarray) -> np.ndarray:
        """``table[i, m] = k(t_i - t_m)`` for nodes ``0..j``; ``diag`` fills ``i == m``."""
        lags = np.concatenate([self.k_minus[1 : j + 1][::-1], self.k_plus[: j + 1]])
        idx = np.subtract.outer(np.arange(j + 1), np.arange(j + 1)) + j
        table = lags[idx]
        table[np.arange(j + 1), np.arange(j + 1)] = diag
        return table

    def interpolate(self, t: np.ndarray) -> np.ndarray:
        """Linear interpolation between nodes; ``t = 0`` returns ``k(0+)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        h = self.grid.h
        out = np.empty((t.size, self.r, self.r), dtype=complex)
        for n, x in enumerate(t):
            arr = self.k_plus if x >= 0 else self.k_minus
            u = abs(x) / h
            i = min(int(np.floor(u)), self.grid.N - 1)
            frac = u - i
            out[n] = (1 - frac) * arr[i] + frac * arr[i + 1]
        return out


@dataclass
class ResolventKernel:
    """Samples of ``gamma_tau(t_i, t_l)`` at level ``j`` (``tau = t_j``).

    ``gamma[i, l]`` holds off-diagonal values; on the diagonal it stores the
    mean of the two one-sided limits kept in ``diag_upper`` (``t -> s+``,
    resolvent of ``k_plus``) and ``diag_lower`` (``t -> s-``).
    """

    h: float
    j: int
    gamma: np.ndarray
    diag_upper: np.ndarray
    diag_lower: np.ndarray
    residual: float = 0.0

    @property
    def r(self) -> int:
        return self.gamma.shape[2]

    @property
    def tau(self) -> float:
        return self.j * self.h

    def first_column(self) -> np.ndarray:
        """``gamma(x, 0)`` for ``x = t_0..t_j`` with the upper limit at ``x = 0``."""
        col = self.gamma[:, 0].copy()
        col[0] = self.diag_upper[0]
        return col

    def last_column(self) -> np.ndarray:
        """``gamma(x, tau)`` for ``x = t_0..t_j`` with the lower limit at ``x = tau``."""
        col = self.gamma[:, self.j].copy()
        col[self.j] = self.diag_lower[self.j]
        return col

    def hermitian_defect(self) -> float:
        off = maxnorm(self.gamma - self.gamma.conj().transpose(1, 0, 3, 2))
        diag = maxnorm(self.diag_upper - self.diag_lower.conj().transpose(0, 2, 1))
        return max(off, diag)


@dataclass
class Potential:
    """Potential ``a(t_j) = gamma_{t_j}(t_j, 0)`` on a uniform grid."""

    grid: UniformGrid
    a: np.ndarray
    convention: str = "a(tau) = gamma_tau(tau, 0)"

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=complex)
        if self.a.shape[0] != self.grid.N + 1:
            raise ValueError("potential sample count does not match the grid")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("potential has non-finite entries")

    @property
    def r(self) -> int:
        return self.a.shape[1]

    def at(self, tau) -> np.ndarray:
        """Linear interpolation; accepts scalar or array ``tau``."""
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        tau = np.atleast_1d(tau)
        u = np.clip(tau / self.grid.h, 0, self.grid.N)
        i = np.minimum(np.floor(u).astype(int), self.grid.N - 1)
        frac = (u - i)[:, None, None]
        out = (1 - frac) * self.a[i] + frac * self.a[i + 1]
        return out[0] if scalar else out

    def adjoint_convention(self) -> np.ndarray:
        """Samples of ``gamma_tau(0, tau) = a(tau)^*``."""
        return self.a.conj().transpose(0, 2, 1)


def _check_level(k: AccelerantKernel, j: int):
    if not 0 < j <= k.grid.N:
        raise ValueError(f"level j={j} must satisfy 0 < j <= N={k.grid.N}")


def assemble_nystrom(k: AccelerantKernel, j: int) -> np.ndarray:
    """Hermitian Nystrom matrix of ``T_tau = I - K`` at ``tau = t_j``.

    Returned in the symmetric form ``I - W^{1/2} K W^{1/2}`` (similar to the
    collocation matrix ``I - K W``) so that it is exactly self-adjoint.  The
    kernel value at coincident nodes is ``(k(0+) + k(0-)) / 2``, the two-sided
    weight split.  At the two end nodes, where only one panel exists, the
    one-sided value is replaced by this hermitian mean; the change is O(h)
    in a single entry and leaves definiteness unaffected as ``h -> 0``.
    """
    _check_level(k, j)
    h, r = k.grid.h, k.r
    mean0 = (k.k_plus[0] + k.k_minus[0]) / 2
    table = k.lag_table(j, mean0)
    sw = np.sqrt(np.full(j + 1, h))
    sw[0] = sw[-1] = np.sqrt(h / 2)
    blocks = -table * np.multiply.outer(sw, sw)[:, :, None, None]
    mat = _blocks_to_matrix(blocks)
    mat += np.eye((j + 1) * r)
    return mat


def collocation_matrix(k: AccelerantKernel, j: int) -> np.ndarray:
    """Collocation form ``I - K W`` of the Nystrom system at level ``j``.

    Panel-exact at coincident nodes: interior nodes get
    ``h/2 (k(0+) + k(0-))``, node 0 gets ``h/2 k(0-)`` and node ``j`` gets
    ``h/2 k(0+)``.  Used for the actual solves; it is not hermitian when the
    kernel jumps.
    """
    _check_level(k, j)
    h, r = k.grid.h, k.r
    panels = _panel_values(k, j)
    kw = np.zeros((j + 1, j + 1, r, r), dtype=complex)
    kw[:, :-1] += panels[0]
    kw[:, 1:] += panels[1]
    mat = -_blocks_to_matrix(kw * (h / 2))
    mat += np.eye((j + 1) * r)
    return mat


def _panel_values(k: AccelerantKernel, j: int):
    """Left/right endpoint kernel values of every panel, per collocation row.

    ``left[i, p] = k(t_i - t_p)`` seen from panel ``[t_p, t_{p+1}]`` (so the
    coincident value is ``k(0-)``) and ``right[i, p] = k(t_i - t_{p+1})`` with
    coincident value ``k(0+)``.
    """
    lower = k.lag_table(j, k.k_minus[0])
    upper = k.lag_table(j, k.k_plus[0])
    return lower[:, :-1], upper[:, 1:]


@dataclass
class AccelerantReport:
    ok: bool
    first_bad_level: Optional[int]
    levels_checked: int


def is_accelerant(k: AccelerantKernel) -> AccelerantReport:
    """Check strict positivity of the discretized ``T_tau`` at every level."""
    for j in range(1, k.grid.N + 1):
        if not posdef_check(assemble_nystrom(k, j)):
            log.debug("T_tau not positive at level %d", j)
            return AccelerantReport(False, j, j)
    return AccelerantReport(True, None, k.grid.N)


def _rhs_and_matrix(k: AccelerantKernel, j: int, sources: np.ndarray):
    """Matrix ``I - K W`` and the right-hand sides for the continuous parts ``y``."""
    h, r = k.grid.h, k.r
    jump = k.jump
    left, right = _panel_values(k, j)
    panels = (h / 2) * (left + right)  # (j+1, j, r, r)

    kw = np.zeros((j + 1, j + 1, r, r), dtype=complex)
    kw[:, :-1] += left
    kw[:, 1:] += right
    mat = np.eye((j + 1) * r) - _blocks_to_matrix(kw * (h / 2))

    # q[i, l] = int_{t_l}^{tau} k(t_i - v) dv, split at v = t_i
    tail = np.zeros((j + 1, j + 1, r, r), dtype=complex)
    tail[:, :-1] = np.cumsum(panels[:, ::-1], axis=1)[:, ::-1]
    rows = np.arange(j + 1)
    base = k.lag_table(j, k.k_minus[0])[:, sources]
    tail = tail[:, sources]
    step = (rows[:, None] > sources[None, :]).astype(float)[:, :, None, None]
    rhs = base - step * jump + tail @ jump
    return mat, rhs


def solve_resolvent(k: AccelerantKernel, j: int) -> ResolventKernel:
    """Resolvent kernel ``gamma_{t_j}`` on all node pairs of level ``j``.

    Raises :class:`~krein.lincore.SingularMatrix` when the level is not
    invertible.
    """
    _check_level(k, j)
    r = k.r
    sources = np.arange(j + 1)
    mat, rhs = _rhs_and_matrix(k, j, sources)
    lu = LU(mat)
    rhs_m = _stack_rows(rhs)
    y_m = lu.solve(rhs_m)
    residual = maxnorm(mat @ y_m - rhs_m) / max(maxnorm(rhs_m), 1e-300)
    y = _unstack_rows(y_m, j + 1, j + 1, r)

    rows = np.arange(j + 1)
    below = (rows[:, None] > rows[None, :]).astype(float)[:, :, None, None]
    gamma = y + below * k.jump
    lower = y[rows, rows].copy()
    upper = lower + k.jump
    gamma[rows, rows] = (upper + lower) / 2
    return ResolventKernel(k.grid.h, j, gamma, upper, lower, residual)


def _edge_value(k: AccelerantKernel, j: int) -> np.ndarray:
    """``gamma_{t_j}(t_j, 0)`` from a single-source solve."""
    mat, rhs = _rhs_and_matrix(k, j, np.array([0]))
    y = _unstack_rows(LU(mat).solve(_stack_rows(rhs)), j + 1, 1, k.r)
    return y[j, 0] + k.jump


def potential_of(k: AccelerantKernel, parallel: bool = False, origin: str = "extrapolate") -> Potential:
    """Potential ``a(t_j) = gamma_{t_j}(t_j, 0)`` for ``j = 1..N``.

    ``a(0)`` comes from quadratic extrapolation through ``a(t_1..t_3)``, or
    with ``origin="limit"`` from the limit ``k(0+)``.
    Raises :class:`~krein.lincore.SingularMatrix` naming the failing level.
    """
    N = k.grid.N
    if N < 2:
        raise ValueError("potential_of needs N >= 2")
    if origin not in ("extrapolate", "limit"):
        raise ValueError(f"origin must be 'extrapolate' or 'limit', got {origin!r}")

    def level(j):
        try:
            return _edge_value(k, j)
        except SingularMatrix as exc:
            raise SingularMatrix(f"level {j} (tau={j * k.grid.h:.6g}): {exc}") from None

    levels = range(1, N + 1)
    if parallel:
        with ThreadPoolExecutor() as pool:
            values = list(pool.map(level, levels))
    else:
        values = [level(j) for j in levels]
    a = np.empty((N + 1, k.r, k.r), dtype=complex)
    a[1:] = values
    if origin == "limit":
        # gamma_tau(tau, 0) -> k(0+) as tau -> 0
        a[0] = k.k_plus[0]
    elif N >= 3:
        a[0] = 3 * a[1] - 3 * a[2] + a[3]
    else:
        a[0] = 2 * a[1] - a[2]
    return Potential(k.grid, a)


def resolvent_residual(k: AccelerantKernel, gam: ResolventKernel) -> float:
    """Independent recomputation of the discrete resolvent-equation residual.

    Evaluates ``gamma(t, s) - int k(t - v) gamma(v, s) dv - k(t - s)`` at all
    node pairs by panel-wise trapezoid sums, using one-sided limits of both
    ``k`` and ``gamma(., s)`` wherever a panel touches a jump.  On the
    diagonal both limits are checked against ``k(0+)`` and ``k(0-)``.
    """
    j, h = gam.j, gam.h
    kl, kr = _panel_values(k, j)
    base_all = k.lag_table(j, k.k_minus[0])
    worst = 0.0
    for l in range(j + 1):
        col = gam.gamma[:, l]
        x_left = col.copy()   # gamma(v, t_l) as v -> t_p from the right
        x_right = col.copy()  # gamma(v, t_l) as v -> t_{p+1} from the left
        x_left[l] = gam.diag_upper[l]
        x_right[l] = gam.diag_lower[l]
        integral = (h / 2) * (
            np.einsum("ipab,pbc->iac", kl, x_left[:-1])
            + np.einsum("ipab,pbc->iac", kr, x_right[1:])
        )
        res = col - integral - base_all[:, l]
        res[l] = 0.0
        up = gam.diag_upper[l] - integral[l] - k.k_plus[0]
        low = gam.diag_lower[l] - integral[l] - k.k_minus[0]
        worst = max(worst, maxnorm(res), maxnorm(up), maxnorm(low))
    return worst


def krein_sobolev_residual(k: AccelerantKernel, j: int, i_t: int, i_s: int) -> float:
    """``max|d/dtau gamma(t, s) - gamma(t, tau) gamma(tau, s)|`` at ``tau = t_j``.

    The derivative is the central difference between levels ``j - 1`` and
    ``j + 1``.  When ``t == s`` the upper limits are differenced.
    """
    N = k.grid.N
    if not 1 < j < N:
        raise ValueError(f"level j={j} must satisfy 1 < j < N={N}")
    if not (0 <= i_t <= j - 1 and 0 <= i_s <= j - 1):
        raise ValueError("node indices must not exceed j - 1")
    h = k.grid.h
    before, here, after = (solve_resolvent(k, m) for m in (j - 1, j, j + 1))

    def value(g, i, l):
        return g.diag_upper[i] if i == l else g.gamma[i, l]

    deriv = (value(after, i_t, i_s) - value(before, i_t, i_s)) / (2 * h)
    prod = here.gamma[i_t, j] @ here.gamma[j, i_s]
    return maxnorm(deriv - prod)
