"""Krein orthogonal functions, the matrizant, and the F/G pair.

Two independent routes lead to the orthogonal functions at ``tau``:

* from the resolvent kernel, by quadrature of its edge columns;
* from the potential, by integrating the Krein system ``Y' = Y Q(tau, lam)``
  for ``Y = [P  P_*]``, i.e. ``P' = i lam P + P_* a`` and ``P_*' = P a^*``.

With ``a(tau) = gamma_tau(tau, 0)`` this makes
``Q = i lam diag(I, 0) + [[0, a^*], [a, 0]]``; the block placement of ``a``
and ``a^*`` is what ties the matrix form to the scalar pair of equations.

Their agreement is the numerical content of the forward theorem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .accelerant import Potential, ResolventKernel
from .lincore import maxnorm, trapezoid_weights
from .resultant import NEGATIVE, POSITIVE, ExpTypeFunction, extract_kernel

REGIONS = ("real_axis", "lower_half", "upper_half", "custom")


@dataclass
class LambdaGrid:
    values: np.ndarray
    flag: str = "custom"

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=complex))
        if self.values.size == 0:
            raise ValueError("lambda grid is empty")
        if np.unique(self.values).size != self.values.size:
            raise ValueError("lambda grid values must be distinct")
        if self.flag not in REGIONS:
            raise ValueError(f"unknown lambda grid flag {self.flag!r}")

    @classmethod
    def real(cls, lo: float, hi: float, count: int) -> "LambdaGrid":
        return cls(np.linspace(lo, hi, count), "real_axis")

    @classmethod
    def box(cls, re_lo, re_hi, im_lo, im_hi, n_re: int, n_im: int) -> "LambdaGrid":
        """Rectangular sample grid; flagged by the half-plane it lies in."""
        re, im = np.meshgrid(np.linspace(re_lo, re_hi, n_re), np.linspace(im_lo, im_hi, n_im))
        values = (re + 1j * im).ravel()
        if im_hi <= 0:
            flag = "lower_half"
        elif im_lo >= 0:
            flag = "upper_half"
        else:
            flag = "custom"
        return cls(values, flag)

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0))

    def __len__(self):
        return self.values.size

    def negated(self) -> "LambdaGrid":
        flip = {"lower_half": "upper_half", "upper_half": "lower_half"}
        return LambdaGrid(-self.values, flip.get(self.flag, self.flag))


def _as_grid(lam) -> LambdaGrid:
    if isinstance(lam, LambdaGrid):
        return lam
    values = np.atleast_1d(np.asarray(lam, dtype=complex))
    return LambdaGrid(values, "real_axis" if np.all(values.imag == 0) else "custom")


@dataclass
class OrthoPair:
    """Samples of the Krein orthogonal functions ``P(tau, lam)``, ``P_*(tau, lam)``."""

    tau: float
    lambdas: LambdaGrid
    P: np.ndarray
    P_star: np.ndarray

    @property
    def r(self) -> int:
        return self.P.shape[1]


@dataclass
class MatrizantSamples:
    tau_final: float
    lambdas: LambdaGrid
    U: np.ndarray
    trajectory: Optional[np.ndarray] = None

    @property
    def r(self) -> int:
        return self.U.shape[1] // 2


def ortho_from_resolvent(gam: ResolventKernel, lam) -> OrthoPair:
    """``P = e^{i lam tau}(I + int e^{-i lam x} gamma(x, 0) dx)`` and
    ``P_* = I + int e^{i lam x} gamma(tau - x, tau) dx`` by the trapezoid rule."""
    grid = _as_grid(lam)
    lv = grid.values
    j, tau = gam.j, gam.tau
    x = np.arange(j + 1) * gam.h
    w = trapezoid_weights(j, gam.h)
    eye = np.eye(gam.r)
    first = gam.first_column()
    last = gam.last_column()[::-1]  # gamma(tau - x_m, tau)
    phase_m = np.exp(-1j * np.multiply.outer(lv, x)) * w
    phase_p = np.exp(1j * np.multiply.outer(lv, x)) * w
    P = np.exp(1j * lv * tau)[:, None, None] * (eye + np.einsum("lm,mab->lab", phase_m, first))
    P_star = eye + np.einsum("lm,mab->lab", phase_p, last)
    return OrthoPair(tau, grid, P, P_star)


def _coupling(a_val: np.ndarray, lv: np.ndarray, t: float) -> np.ndarray:
    """Off-diagonal part of the coefficient seen in the frame ``U e^{-D t}``."""
    r = a_val.shape[0]
    ph = np.exp(1j * lv * t)[:, None, None]
    B = np.zeros((lv.size, 2 * r, 2 * r), dtype=complex)
    B[:, :r, r:] = ph * a_val.conj().T
    B[:, r:, :r] = a_val / ph
    return B


def _frame(U: np.ndarray, lv: np.ndarray, t: float, r: int) -> np.ndarray:
    """Right-multiply by ``e^{D t}``, ``D = i lam diag(I, 0)``."""
    out = U.copy()
    out[:, :, :r] *= np.exp(1j * lv * t)[:, None, None]
    return out


def matrizant(
    a: Potential,
    lam,
    substeps: int = 1,
    tau_final: Optional[float] = None,
    keep_trajectory: bool = False,
) -> MatrizantSamples:
    """Fundamental solution ``U(tau, lam)`` of the Krein system, ``U(0) = I``.

    The diagonal part ``D = i lam diag(I, 0)`` is factored out exactly,
    ``U = V e^{D tau}``, and classical fourth-order Runge-Kutta with step
    ``h / substeps`` integrates ``V``; ``a`` at intermediate times by linear
    interpolation.  Every ``lam`` is integrated at once.
    """
    grid = _as_grid(lam)
    lv = grid.values
    r = a.r
    if tau_final is None:
        tau_final = a.grid.T
    n_steps = int(round(tau_final / a.grid.h)) * substeps
    if n_steps < 0 or tau_final > a.grid.T + 1e-12:
        raise ValueError(f"tau_final={tau_final} outside the potential's grid")
    V = np.broadcast_to(np.eye(2 * r, dtype=complex), (lv.size, 2 * r, 2 * r)).copy()
    traj = [V.copy()] if keep_trajectory else None
    if n_steps == 0:
        return MatrizantSamples(0.0, grid, V, np.array(traj) if traj else None)
    dt = tau_final / n_steps
    for n in range(n_steps):
        t0 = n * dt
        q0 = _coupling(a.at(t0), lv, t0)
        q1 = _coupling(a.at(t0 + dt / 2), lv, t0 + dt / 2)
        q2 = _coupling(a.at(t0 + dt), lv, t0 + dt)
        k1 = V @ q0
        k2 = (V + dt / 2 * k1) @ q1
        k3 = (V + dt / 2 * k2) @ q1
        k4 = (V + dt * k3) @ q2
        V = V + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if keep_trajectory and (n + 1) % substeps == 0:
            traj.append(_frame(V, lv, t0 + dt, r))
    U = _frame(V, lv, tau_final, r)
    return MatrizantSamples(tau_final, grid, U, np.array(traj) if keep_trajectory else None)


def ortho_from_matrizant(U: MatrizantSamples) -> OrthoPair:
    """``[P  P_*] = [I  I] U``."""
    r = U.r
    row = U.U[:, :r, :] + U.U[:, r:, :]
    return OrthoPair(U.tau_final, U.lambdas, row[:, :, :r], row[:, :, r:])


def fg_values(U: MatrizantSamples):
    """``F(lam)``, ``G(lam)`` from a matrizant computed on the negated grid.

    ``U.lambdas`` holds ``-lam``; returns ``(lam, F, G)`` sample arrays.
    """
    r = U.r
    lam = -U.lambdas.values
    row = U.U[:, :r, :] + U.U[:, r:, :]
    F = np.exp(1j * lam * U.tau_final)[:, None, None] * row[:, :, :r]
    G = row[:, :, r:]
    return lam, F, G


def collocation_lambdas(T: float, n: int) -> np.ndarray:
    """Default extraction grid ``lam_j = pi j / T``, ``j = -2n..2n``."""
    return np.pi * np.arange(-2 * n, 2 * n + 1) / T


def _resample(kernel: np.ndarray, tau: float, N: int) -> np.ndarray:
    """Linear interpolation of uniform samples onto ``N + 1`` nodes."""
    src = np.linspace(0.0, tau, kernel.shape[0])
    dst = np.linspace(0.0, tau, N + 1)
    flat = kernel.reshape(kernel.shape[0], -1)
    out = np.empty((N + 1, flat.shape[1]), dtype=complex)
    for c in range(flat.shape[1]):
        out[:, c] = np.interp(dst, src, flat[:, c].real) + 1j * np.interp(dst, src, flat[:, c].imag)
    return out.reshape((N + 1,) + kernel.shape[1:])


def fg_from_matrizant(
    U: MatrizantSamples,
    method: str = "fourier_collocation",
    gamma: Optional[ResolventKernel] = None,
    N: Optional[int] = None,
    rel_threshold: float = 1e-10,
):
    """Exponential-type pair ``F`` (kernel ``f`` on ``[0, T]``) and ``G`` (``g`` on ``[-T, 0]``).

    ``method="from_resolvent"`` reads ``f(x) = gamma_T(x, 0)`` and
    ``g(x) = gamma_T(T + x, T)`` off ``gamma`` (level ``N``).
    ``method="fourier_collocation"`` extracts the kernels from the samples
    ``F(lam_j)``, ``G(lam_j)`` carried by ``U`` (computed at ``-lam_j``) with
    the piecewise-linear collocation model; the extraction node count is
    fixed by the number of samples, ``n = (len - 1) / 4``, and the result is
    resampled onto ``N`` panels.

    Returns ``(F, G, info)`` where ``info`` holds extraction reports.
    """
    T = U.tau_final
    if method == "from_resolvent":
        if gamma is None:
            raise ValueError("from_resolvent needs the resolvent kernel at tau = T")
        if not np.isclose(gamma.tau, T):
            raise ValueError(f"resolvent level tau={gamma.tau} does not match T={T}")
        F = ExpTypeFunction(POSITIVE, T, gamma.first_column())
        G = ExpTypeFunction(NEGATIVE, T, gamma.last_column())
        return F, G, {}
    if method != "fourier_collocation":
        raise ValueError(f"unknown method {method!r}")
    lam, Fv, Gv = fg_values(U)
    n = (lam.size - 1) // 4
    if n < 1:
        raise ValueError("too few lambda samples for extraction")
    eye = np.eye(U.r)
    Fk, frep = extract_kernel(lam, Fv - eye, POSITIVE, T, n, rel_threshold, model="linear")
    Gk, grep = extract_kernel(lam, Gv - eye, NEGATIVE, T, n, rel_threshold, model="linear")
    if N is not None and N != n:
        Fk = ExpTypeFunction(POSITIVE, T, _resample(Fk.kernel, T, N))
        Gk = ExpTypeFunction(NEGATIVE, T, _resample(Gk.kernel, T, N))
    return Fk, Gk, {"f": frep, "g": grep}


def fg_from_potential(
    a: Potential,
    n_extract: int = 48,
    max_phase_step: float = 0.05,
    rel_threshold: float = 1e-10,
):
    """F and G from the potential alone: matrizant on ``-lam_j`` then extraction.

    The Runge-Kutta step is refined so that ``|lam| * dt <= max_phase_step``
    on the extraction grid ``lam_j = pi j / T``, ``|j| <= 2 n_extract``.
    """
    T, N = a.grid.T, a.grid.N
    n_extract = min(n_extract, N)
    lam = collocation_lambdas(T, n_extract)
    lam_max = np.abs(lam).max()
    substeps = max(1, int(np.ceil(lam_max * a.grid.h / max_phase_step)))
    U = matrizant(a, LambdaGrid(-lam, "real_axis"), substeps=substeps)
    return fg_from_matrizant(U, "fourier_collocation", N=N, rel_threshold=rel_threshold)


def factorization_residual(pair: OrthoPair, pair_conj: Optional[OrthoPair] = None) -> float:
    """``max |P P^# - P_* P_*^#|`` over the grid.

    On the real axis ``X^#(lam) = X(lam)^*``.  Off the axis pass ``pair_conj``
    evaluated at ``conj(lam)``; its adjoint supplies the sharp values.
    """
    if pair_conj is None:
        if not pair.lambdas.is_real:
            raise ValueError("off-axis grid needs the pair evaluated at conj(lam)")
        src = pair
    else:
        if not np.allclose(pair_conj.lambdas.values, np.conj(pair.lambdas.values)):
            raise ValueError("pair_conj must be evaluated at conj(lam)")
        src = pair_conj
    P_sh = src.P.conj().transpose(0, 2, 1)
    Ps_sh = src.P_star.conj().transpose(0, 2, 1)
    return maxnorm(pair.P @ P_sh - pair.P_star @ Ps_sh)


@dataclass
class ZeroReport:
    function: str
    region: str
    min_abs_det: float
    worst_lambda: complex
    threshold: float = 1e-6
    sampled_only: bool = True

    @property
    def passed(self) -> bool:
        return self.min_abs_det > self.threshold


def zero_location_check(pair: OrthoPair, region: str) -> ZeroReport:
    """Sampled check that ``det P`` (lower half) or ``det P_*`` (upper half) has no zeros.

    ``pair`` must be evaluated on samples lying in the closed half-plane.
    A pass is a necessary condition only.
    """
    lv = pair.lambdas.values
    if region == "lower_half":
        if np.any(lv.imag > 1e-12):
            raise ValueError("samples must lie in the closed lower half-plane")
        vals, name = pair.P, "P"
    elif region == "upper_half":
        if np.any(lv.imag < -1e-12):
            raise ValueError("samples must lie in the closed upper half-plane")
        vals, name = pair.P_star, "P_star"
    else:
        raise ValueError(f"region must be lower_half or upper_half, got {region!r}")
    dets = np.abs(np.linalg.det(vals))
    worst = int(np.argmin(dets))
    return ZeroReport(name, region, float(dets[worst]), complex(lv[worst]))


def liouville_defect(U: MatrizantSamples) -> float:
    """``max |det U(T, lam) - e^{i r lam T}|``."""
    lv = U.lambdas.values
    target = np.exp(1j * U.r * lv * U.tau_final)
    return float(np.max(np.abs(np.linalg.det(U.U) - target)))


def ortho_difference(a: OrthoPair, b: OrthoPair) -> float:
    return max(maxnorm(a.P - b.P), maxnorm(a.P_star - b.P_star))
