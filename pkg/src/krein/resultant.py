"""Exponential-type matrix functions and the continuous resultant operator.

An exponential-type function is ``I + int e^{i lam x} kernel(x) dx`` with the
kernel supported on ``[0, tau]`` (positive) or ``[-tau, 0]`` (negative).
Kernels are stored as samples on ``N + 1`` uniform nodes, listed from the
left end of the support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lincore import LU, SingularMatrix, UniformGrid, maxnorm, trapezoid_weights, tsvd_lstsq

POSITIVE = "positive_support"
NEGATIVE = "negative_support"


class SingularResultant(np.linalg.LinAlgError):
    """The discretized resultant could not be inverted."""


class ExtractionFailed(np.linalg.LinAlgError):
    """Kernel extraction from spectral samples lost too much rank."""


@dataclass
class ExpTypeFunction:
    orientation: str
    tau: float
    kernel: np.ndarray

    def __post_init__(self):
        if self.orientation not in (POSITIVE, NEGATIVE):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        self.kernel = np.asarray(self.kernel, dtype=complex)
        if self.kernel.ndim != 3 or self.kernel.shape[0] < 2:
            raise ValueError(f"kernel must have shape (N+1, r, r), got {self.kernel.shape}")
        if not np.all(np.isfinite(self.kernel)):
            raise ValueError("kernel has non-finite samples")

    @classmethod
    def identity(cls, r: int, tau: float, N: int, orientation: str = POSITIVE):
        return cls(orientation, tau, np.zeros((N + 1, r, r), dtype=complex))

    @property
    def r(self) -> int:
        return self.kernel.shape[1]

    @property
    def N(self) -> int:
        return self.kernel.shape[0] - 1

    @property
    def h(self) -> float:
        return self.tau / self.N

    @property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.N + 1) * self.h
        return x if self.orientation == POSITIVE else x - self.tau

    def __call__(self, lam) -> np.ndarray:
        return eval_exptype(self, lam)


def eval_exptype(F: ExpTypeFunction, lam) -> np.ndarray:
    """``I + sum_m w_m e^{i lam x_m} kernel(x_m)`` (composite trapezoid).

    Scalar ``lam`` gives an ``r x r`` matrix, an array gives ``(L, r, r)``.
    """
    lam = np.asarray(lam, dtype=complex)
    scalar = lam.ndim == 0
    lam = np.atleast_1d(lam)
    w = trapezoid_weights(F.N, F.h)
    phase = np.exp(1j * np.multiply.outer(lam, F.nodes)) * w
    out = np.einsum("lm,mab->lab", phase, F.kernel) + np.eye(F.r)
    return out[0] if scalar else out


def sharp(F: ExpTypeFunction) -> ExpTypeFunction:
    """``F^#(lam) = F(conj(lam))^*``: kernel ``x -> kernel(-x)^*``, support flipped."""
    flipped = NEGATIVE if F.orientation == POSITIVE else POSITIVE
    return ExpTypeFunction(flipped, F.tau, F.kernel[::-1].conj().transpose(0, 2, 1).copy())


def _half_hat(theta: np.ndarray) -> np.ndarray:
    """``int_0^1 e^{i theta v} (1 - v) dv``."""
    theta = np.asarray(theta, dtype=complex)
    z = 1j * theta
    small = np.abs(theta) < 0.5
    out = np.empty_like(z)
    zs = z[small]
    # (e^z - 1 - z) / z^2 = sum_n z^n / (n + 2)!
    term = np.full_like(zs, 0.5)
    acc = term.copy()
    for n in range(1, 16):
        term = term * zs / (n + 2)
        acc = acc + term
    out[small] = acc
    zb = z[~small]
    out[~small] = (np.exp(zb) - 1 - zb) / zb**2
    return out


def _collocation_rows(lam: np.ndarray, nodes: np.ndarray, h: float, model: str) -> np.ndarray:
    phase = np.exp(1j * np.multiply.outer(lam, nodes))
    n = nodes.size - 1
    if model == "trapezoid":
        return phase * trapezoid_weights(n, h)
    if model == "linear":
        # exact transforms of the piecewise-linear interpolant's hat functions
        theta = lam * h
        right_half = _half_hat(theta)
        left_half = _half_hat(-theta)
        coef = np.empty_like(phase)
        coef[:, 0] = right_half
        coef[:, -1] = left_half
        coef[:, 1:-1] = (right_half + left_half)[:, None]
        return phase * coef * h
    raise ValueError(f"unknown collocation model {model!r}")


@dataclass
class ExtractionReport:
    rank: int
    unknowns: int
    residual: float
    model: str


def extract_kernel(
    lam,
    samples,
    orientation: str,
    tau: float,
    N: int,
    rel_threshold: float = 1e-10,
    model: str = "trapezoid",
):
    """Recover kernel samples from values of ``F(lam_j) - I`` at real ``lam_j``.

    Solves ``F(lam_j) - I = sum_m c_m(lam_j) kernel(x_m)`` in the truncated-SVD
    least-squares sense.  ``model="trapezoid"`` uses ``c_m = w_m e^{i lam x_m}``;
    ``model="linear"`` uses the exact transform of the piecewise-linear
    interpolant, which stays faithful to the continuous integral for large
    ``|lam| h``.

    Returns ``(ExpTypeFunction, ExtractionReport)``; raises
    :class:`ExtractionFailed` when the effective rank drops below ``(N+1)/2``.
    """
    lam = np.asarray(lam)
    if np.any(np.abs(np.imag(lam)) > 0):
        raise ValueError("extraction needs real lambda samples")
    lam = np.real(lam).astype(float)
    samples = np.asarray(samples, dtype=complex)
    if lam.size < 2 * (N + 1):
        raise ValueError(f"need at least {2 * (N + 1)} samples, got {lam.size}")
    if np.unique(lam).size != lam.size:
        raise ValueError("lambda samples must be distinct")
    r = samples.shape[1]
    h = tau / N
    nodes = np.arange(N + 1) * h
    if orientation == NEGATIVE:
        nodes = nodes - tau
    rows = _collocation_rows(lam, nodes, h, model)
    rhs = samples.reshape(lam.size, r * r)
    sol, rank = tsvd_lstsq(rows, rhs, rel_threshold)
    if rank < 0.5 * (N + 1):
        raise ExtractionFailed(f"effective rank {rank} < {(N + 1) / 2} ({N + 1} unknowns)")
    residual = maxnorm(rows @ sol - rhs)
    fn = ExpTypeFunction(orientation, tau, sol.reshape(N + 1, r, r))
    return fn, ExtractionReport(rank, N + 1, residual, model)


@dataclass
class TwoSidedKernel:
    """Kernel on ``[-T, T]`` with a double node at 0.

    ``plus[i] = k(t_i)`` (``plus[0] = k(0+)``), ``minus[i] = k(-t_i)``
    (``minus[0] = k(0-)``).  Hermiticity is measured, not enforced.
    """

    grid: UniformGrid
    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        self.plus = np.asarray(self.plus, dtype=complex)
        self.minus = np.asarray(self.minus, dtype=complex)
        if self.plus.shape != self.minus.shape or self.plus.shape[0] != self.grid.N + 1:
            raise ValueError("plus/minus halves must both have N + 1 samples")
        if not (np.all(np.isfinite(self.plus)) and np.all(np.isfinite(self.minus))):
            raise ValueError("kernel has non-finite samples")

    @property
    def r(self) -> int:
        return self.plus.shape[1]

    def hermitian_defect(self) -> float:
        return maxnorm(self.minus - self.plus.conj().transpose(0, 2, 1))

    def lag_table(self, n: int, diag) -> np.ndarray:
        """``table[i, m] = k(t_i - t_m)`` on nodes ``0..n``; ``diag`` at ``i == m``."""
        lags = np.concatenate([self.minus[1 : n + 1][::-1], self.plus[: n + 1]])
        idx = np.subtract.outer(np.arange(n + 1), np.arange(n + 1)) + n
        table = lags[idx]
        table[np.arange(n + 1), np.arange(n + 1)] = diag
        return table

    def scaled(self, c: complex) -> "TwoSidedKernel":
        return TwoSidedKernel(self.grid, c * self.plus, c * self.minus)


@dataclass
class ResultantMatrix:
    """Discretized resultant on stacked samples.

    Unknown ordering: ``u = -T, -T+h, ..., 0-`` (``N + 1`` blocks) followed by
    ``0+, h, ..., T`` (``N + 1`` blocks); each block is ``r x r``.
    """

    matrix: np.ndarray
    r: int
    N: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def assemble_resultant(Bf: ExpTypeFunction, Df: ExpTypeFunction) -> ResultantMatrix:
    """Discretize ``(R q)(u) = q(u) + int d(u - s) q(s) ds`` (``u >= 0``) and
    ``q(u) + int b(u - s) q(s) ds`` (``u < 0``).

    ``b`` lives on ``[-tau, 0]`` and ``d`` on ``[0, tau]``; both are zero
    outside.  Each row integrates over one support-length window with the
    trapezoid rule (half weights at the window edges).  Where the window
    crosses ``s = 0`` the left panel uses ``q(0-)`` and the right panel
    ``q(0+)``; a window that ends at 0 uses the one-sided value from inside.
    """
    if Bf.orientation != NEGATIVE or Df.orientation != POSITIVE:
        raise ValueError("need b with negative support and d with positive support")
    if Bf.kernel.shape != Df.kernel.shape or not np.isclose(Bf.tau, Df.tau):
        raise ValueError("b and d must share r, tau and N")
    N, r, h = Df.N, Df.r, Df.h
    b, d = Bf.kernel, Df.kernel
    size = 2 * (N + 1)
    blocks = np.zeros((size, size, r, r), dtype=complex)
    m = np.arange(N + 1)
    w = trapezoid_weights(N, h)

    def col_of(pos):
        # grid position (integer, units of h, in [-N, N]) -> column index
        # away from 0; the caller handles s = 0 explicitly
        return np.where(pos < 0, pos + N, pos + N + 1)

    # rows u = t_i >= 0 (d branch): s = t_i - T + m h, d index N - m
    for i in range(N + 1):
        row = N + 1 + i
        pos = i - N + m
        vals = d[N - m] * w[:, None, None]
        at_zero = pos == 0
        cols = col_of(pos)
        keep = ~at_zero
        np.add.at(blocks[row], cols[keep], vals[keep])
        if at_zero.any():
            mz = int(np.flatnonzero(at_zero)[0])
            dz = d[N - mz] * (h / 2)
            if mz > 0:
                blocks[row, N] += dz      # left panel sees q(0-)
            if mz < N:
                blocks[row, N + 1] += dz  # right panel sees q(0+)
    # rows u = -T + p h <= 0- (b branch): s = u + m h, b index N - m
    for p in range(N + 1):
        pos = p - N + m
        vals = b[N - m] * w[:, None, None]
        at_zero = pos == 0
        cols = col_of(pos)
        keep = ~at_zero
        np.add.at(blocks[p], cols[keep], vals[keep])
        if at_zero.any():
            mz = int(np.flatnonzero(at_zero)[0])
            bz = b[N - mz] * (h / 2)
            if mz > 0:
                blocks[p, N] += bz
            if mz < N:
                blocks[p, N + 1] += bz
    mat = blocks.transpose(0, 2, 1, 3).reshape(size * r, size * r)
    mat += np.eye(size * r)
    return ResultantMatrix(mat, r, N)


def apply_resultant(R: ResultantMatrix, minus: np.ndarray, plus: np.ndarray):
    """Apply ``R`` to a two-sided sample vector given as left-to-right halves."""
    q = np.concatenate([minus, plus])
    size, r = q.shape[0], R.r
    out = (R.matrix @ q.reshape(size * r, r)).reshape(size, r, r)
    return out[: R.N + 1], out[R.N + 1 :]


@dataclass
class RecoveryReport:
    hermitian_defect: float
    residual: float
    notes: list = field(default_factory=list)


def recover_accelerant(F: ExpTypeFunction, G: ExpTypeFunction):
    """Accelerant ``k = R(F^#, G^#)^{-1} q`` from the pair ``F``, ``G``.

    ``F`` has positive support (kernel ``f``), ``G`` negative support (kernel
    ``g``); ``q`` is ``f(-x)^*`` on ``[-T, 0)`` and ``g(-x)^*`` on ``[0, T]``.
    Returns ``(TwoSidedKernel, RecoveryReport)``.
    """
    if F.orientation != POSITIVE or G.orientation != NEGATIVE:
        raise ValueError("F needs positive support and G negative support")
    if F.kernel.shape != G.kernel.shape or not np.isclose(F.tau, G.tau):
        raise ValueError("F and G must share r, tau and N")
    Fs, Gs = sharp(F), sharp(G)
    R = assemble_resultant(Fs, Gs)
    N, r = F.N, F.r
    q = np.concatenate([Fs.kernel, Gs.kernel])
    size = 2 * (N + 1)
    rhs = q.reshape(size * r, r)
    try:
        sol = LU(R.matrix).solve(rhs)
    except SingularMatrix as exc:
        raise SingularResultant(str(exc)) from None
    residual = maxnorm(R.matrix @ sol - rhs)
    k = sol.reshape(size, r, r)
    minus = k[: N + 1][::-1]
    plus = k[N + 1 :]
    out = TwoSidedKernel(UniformGrid(F.tau, N), plus, minus)
    return out, RecoveryReport(out.hermitian_defect(), residual)


@dataclass
class ConditionsReport:
    identity_residual: float
    min_singular_value: float
    worst_lambda: complex
    identity_threshold: float = 2e-3
    singular_threshold: float = 1e-6
    sampled_only: bool = True

    @property
    def identity_ok(self) -> bool:
        return self.identity_residual <= self.identity_threshold

    @property
    def kernel_ok(self) -> bool:
        return self.min_singular_value >= self.singular_threshold

    @property
    def passed(self) -> bool:
        return self.identity_ok and self.kernel_ok


def conditions_check(L: ExpTypeFunction, M: ExpTypeFunction, lam) -> ConditionsReport:
    """Sampled check of ``L L^# = M^# M`` and ``ker L^# cap ker M = {0}``.

    The kernel condition is replaced by the smallest singular value of the
    stacked ``[L^#(lam); M(lam)]`` over the given real grid; it says nothing
    about points off the grid.
    """
    lam = np.asarray(lam)
    if np.any(np.abs(np.imag(lam)) > 0):
        raise ValueError("conditions_check needs a real lambda grid")
    lam = np.real(lam).astype(float)
    Lv, Ls = eval_exptype(L, lam), eval_exptype(sharp(L), lam)
    Mv, Ms = eval_exptype(M, lam), eval_exptype(sharp(M), lam)
    ident = np.max(np.abs(Lv @ Ls - Ms @ Mv), axis=(1, 2))
    stacked = np.concatenate([Ls, Mv], axis=1)
    smin = np.linalg.svd(stacked, compute_uv=False)[:, -1]
    worst = int(np.argmin(smin))
    return ConditionsReport(float(ident.max()), float(smin[worst]), complex(lam[worst]))


def weight_residual(L: ExpTypeFunction, Mf: ExpTypeFunction, k: TwoSidedKernel):
    """Discrete residuals of the two weight equations on the grid nodes.

    ``l(t) - int_0^tau k(t - u) l(u) du - k(t)`` and
    ``m(t) - int_0^tau m(u) k(t - u) du - k(t)``; the kernel jump at ``u = t``
    is split between the two adjacent panels, and at ``t = 0`` the right-hand
    side is ``k(0+)``.  Returns ``(max|res_l|, max|res_m|)``.
    """
    if L.orientation != POSITIVE or Mf.orientation != POSITIVE:
        raise ValueError("both kernels must have positive support")
    N, h = L.N, L.h
    if Mf.N != N or k.grid.N != N:
        raise ValueError("L, M and k must share the grid")
    left = k.lag_table(N, k.minus[0])[:, :-1]  # panel [t_p, t_{p+1}] at u = t_p
    right = k.lag_table(N, k.plus[0])[:, 1:]   # ... at u = t_{p+1}
    ell, m = L.kernel, Mf.kernel
    int_l = (h / 2) * (
        np.einsum("ipab,pbc->iac", left, ell[:-1]) + np.einsum("ipab,pbc->iac", right, ell[1:])
    )
    int_m = (h / 2) * (
        np.einsum("pab,ipbc->iac", m[:-1], left) + np.einsum("pab,ipbc->iac", m[1:], right)
    )
    res_l = ell - int_l - k.plus
    res_m = m - int_m - k.plus
    return maxnorm(res_l), maxnorm(res_m)
