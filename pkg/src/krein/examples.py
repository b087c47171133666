"""Closed-form accelerant families used as oracles and CLI fixtures.

Four families are provided:

* ``step_family``: ``k = i`` on ``(0, T]`` and ``-i`` on ``[-T, 0)``;
* ``rational_family``: ``k(t) = iCe^{-itA}(I-P)B`` for ``t > 0`` and
  ``-iCe^{-itA}PB`` for ``t < 0`` built from a triple ``(a, b, c)``;
* ``pexp_family``: pseudo-exponential kernels from an admissible triple;
* ``expk_family``: ``k(t) = Ce^{tA}B`` with ``C = B^*H``.

The step and rational reference formulas are evaluated literally.  They are
not consistent with the resolvent equation they are meant to solve, so they
are compared with the numerical pipeline through :func:`fit_scale` rather
than asserted.  The exponential family has exact formulas throughout and
serves as the reference oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .accelerant import AccelerantKernel
from .lincore import (
    LU,
    SingularMatrix,
    UniformGrid,
    mat_exp,
    maxnorm,
    phi_integral,
    posdef_check,
    sylvester_solve,
    trapezoid_weights,
)

IDENTITY_TOL = 1e-12
SPECTRUM_MARGIN = 1e-10


class InvalidTriple(ValueError):
    """Family parameters violate their defining identities."""


class SingularM(np.linalg.LinAlgError):
    """``M_tau`` is singular at some grid level."""

    def __init__(self, level: int, tau: float, detail: str = ""):
        self.level = level
        self.tau = tau
        super().__init__(f"M_tau singular at level {level} (tau={tau:.6g}) {detail}".rstrip())


def _mat(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=complex))


def _adj(x: np.ndarray) -> np.ndarray:
    return x.conj().swapaxes(-1, -2)


def _exprel(z):
    """``(e^z - 1) / z`` with the removable point handled."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2, np.expm1(safe) / safe)


def _identity_tol(*mats) -> float:
    return IDENTITY_TOL * max([1.0] + [maxnorm(m) for m in mats])


@dataclass
class FamilyBundle:
    """Sampled kernel plus closed-form evaluators.

    Evaluators take scalars and return ``r x r`` arrays; ``P_closed`` and
    ``Pstar_closed`` accept an array of ``lam`` and return ``(L, r, r)``.
    """

    name: str
    kernel: AccelerantKernel
    potential_closed: Callable
    gamma_closed: Optional[Callable] = None
    P_closed: Optional[Callable] = None
    Pstar_closed: Optional[Callable] = None
    extras: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)


# ---------------------------------------------------------------- step


@dataclass(frozen=True)
class StepParams:
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def beyond_threshold(self) -> bool:
        """The kernel stops being an accelerant once ``T >= pi/2``."""
        return self.T >= math.pi / 2


def step_family(p: StepParams, N: int) -> FamilyBundle:
    """Step kernel ``k(0+) = i``, ``k(0-) = -i`` with its reference closed forms.

    The reference resolvent solves the equation with right-hand side ``k/2``;
    the reference ``P_*`` has the opposite sign on its correction term.  See
    :func:`step_discrepancies`.
    """
    if N < 2:
        raise ValueError("step_family needs N >= 2")
    r = np.ones((N + 1, 1, 1), dtype=complex)
    kernel = AccelerantKernel(UniformGrid(p.T, N), 1j * r, -1j * r)

    def gamma_closed(tau, t, s):
        if t > s:
            v = 1j * np.exp(2j * (t - s)) / (1 + np.exp(2j * tau))
        elif t < s:
            v = -1j * np.exp(2j * (t - s)) / (1 + np.exp(-2j * tau))
        else:
            up = 1j / (1 + np.exp(2j * tau))
            v = (up + np.conj(up)) / 2
        return _mat(v)

    def potential_closed(tau):
        return _mat(2j / (1 + np.exp(-2j * tau)))

    def correction(tau, lam):
        # (e^{2i tau} - e^{i lam tau}) / (2 - lam), finite at lam = 2
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        e = np.exp(1j * lam * tau)
        ratio = 1j * tau * np.exp(2j * tau) * _exprel(1j * (lam - 2) * tau)
        return 2 / (1 + np.exp(2j * tau)) * ratio, e

    def P_closed(tau, lam):
        corr, e = correction(tau, lam)
        return (e + corr)[:, None, None]

    def Pstar_closed(tau, lam):
        corr, _ = correction(tau, lam)
        return (1 + corr)[:, None, None]

    flags = ["T >= pi/2: not an accelerant on the whole interval"] if p.beyond_threshold else []
    return FamilyBundle(
        "step", kernel, potential_closed, gamma_closed, P_closed, Pstar_closed, {}, flags
    )


def step_exact(tau: float):
    """Resolvent data of the step kernel derived from the resolvent equation.

    Returns ``(gamma(t, s), P(lam), P_*(lam))`` callables at level ``tau``.
    """
    d = 1 + np.exp(2j * tau)

    def gamma(t, s):
        if t >= s:
            return 2j * np.exp(2j * (t - s)) / d
        return -2j * np.exp(2j * (t - s)) / np.conj(d)

    def ratio(lam):
        lam = np.asarray(lam, dtype=complex)
        return 1j * tau * np.exp(2j * tau) * _exprel(1j * (lam - 2) * tau)

    def P(lam):
        return np.exp(1j * np.asarray(lam) * tau) + 2 / d * ratio(lam)

    def P_star(lam):
        return 1 - 2 / d * ratio(lam)

    return gamma, P, P_star


# ----------------------------------------------------------- discrepancy


@dataclass
class ScaleFit:
    """Best complex ``c`` with ``reference ~ c * candidate`` (or its conjugate)."""

    scale: complex
    conjugated: bool
    rel_residual: float

    def as_dict(self) -> dict:
        return {
            "scale": [self.scale.real, self.scale.imag],
            "conjugated": self.conjugated,
            "rel_residual": self.rel_residual,
        }


def fit_scale(reference, candidate) -> ScaleFit:
    """Least-squares scale between two sampled curves, trying conjugation too."""
    ref = np.asarray(reference, dtype=complex).ravel()
    best = None
    for conj in (False, True):
        cand = np.asarray(candidate, dtype=complex).ravel()
        if conj:
            cand = cand.conj()
        denom = np.vdot(cand, cand).real
        c = np.vdot(cand, ref) / denom if denom > 0 else 0.0
        rel = float(np.linalg.norm(ref - c * cand) / max(np.linalg.norm(ref), 1e-300))
        if best is None or rel < best.rel_residual - 1e-12:
            best = ScaleFit(complex(c), conj, rel)
    return best


def step_discrepancies(T: float = 1.0, N: int = 200, tau: Optional[float] = None, lam=None) -> dict:
    """Fit the reference step-family formulas against the numerical pipeline.

    Returns a dict of :class:`ScaleFit` for ``gamma``, ``potential``, and the
    correction terms ``P - e^{i lam tau}`` and ``P_* - 1``.
    """
    from .accelerant import potential_of, solve_resolvent
    from .kreinsys import ortho_from_resolvent

    bundle = step_family(StepParams(T), N)
    k = bundle.kernel
    grid = k.grid
    j = grid.level(T / 2 if tau is None else tau)
    tau = grid.nodes[j]
    lam = np.linspace(-5.0, 5.0, 21) if lam is None else np.asarray(lam, dtype=float)

    gam = solve_resolvent(k, j)
    t = grid.nodes[: j + 1]
    off = [(i, l) for i in range(j + 1) for l in range(j + 1) if i != l]
    num_g = np.array([gam.gamma[i, l, 0, 0] for i, l in off])
    cl_g = np.array([bundle.gamma_closed(tau, t[i], t[l])[0, 0] for i, l in off])

    pot = potential_of(k)
    num_a = pot.a[1:, 0, 0]
    cl_a = np.array([bundle.potential_closed(x)[0, 0] for x in grid.nodes[1:]])

    pair = ortho_from_resolvent(gam, lam)
    e = np.exp(1j * lam * tau)
    num_p = pair.P[:, 0, 0] - e
    num_ps = pair.P_star[:, 0, 0] - 1
    cl_p = bundle.P_closed(tau, lam)[:, 0, 0] - e
    cl_ps = bundle.Pstar_closed(tau, lam)[:, 0, 0] - 1
    return {
        "tau": float(tau),
        "gamma": fit_scale(num_g, cl_g),
        "potential": fit_scale(num_a, cl_a),
        "P_correction": fit_scale(num_p, cl_p),
        "Pstar_correction": fit_scale(num_ps, cl_ps),
    }


# ------------------------------------------------------------- rational


@dataclass
class RationalTriple:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.a, self.b, self.c = _mat(self.a), _mat(self.b), _mat(self.c)
        n = self.a.shape[0]
        if self.a.shape != (n, n) or self.b.shape[0] != n or self.c.shape[1] != n:
            raise InvalidTriple(
                f"shapes a{self.a.shape}, b{self.b.shape}, c{self.c.shape} are incompatible"
            )
        if self.b.shape[1] != self.c.shape[0]:
            raise InvalidTriple("b must be n x k and c must be k x n")
        for name, m in (("a", self.a), ("a - bc", self.a_cross)):
            worst = float(np.linalg.eigvals(m).imag.min())
            if worst <= SPECTRUM_MARGIN:
                raise InvalidTriple(f"spectrum of {name} not in the open upper half-plane")

    @property
    def a_cross(self) -> np.ndarray:
        return self.a - self.b @ self.c

    def realization(self):
        """``(A, B, C, P, Omega)`` of the block realization."""
        a, b, c = self.a, self.b, self.c
        n = a.shape[0]
        ax = self.a_cross
        omega = sylvester_solve(-ax, ax.conj().T, -1j * (b @ b.conj().T))
        A = np.block([[ax, -b @ b.conj().T], [np.zeros((n, n)), ax.conj().T]])
        B = np.vstack([b, c.conj().T])
        C = np.hstack([-c, -b.conj().T])
        P = np.block([[np.eye(n), 1j * omega], [np.zeros((n, n)), np.zeros((n, n))]])
        return A, B, C, P, omega


def _rational_samples(A, B, C, P, t: np.ndarray, sign: int) -> np.ndarray:
    I = np.eye(A.shape[0])
    proj = (I - P) @ B if sign > 0 else -P @ B
    return np.array([1j * C @ mat_exp(A, -sign * 1j * x) @ proj for x in t])


def rational_family(t: RationalTriple, T: float, N: int) -> FamilyBundle:
    """Rational accelerant with its potential.

    ``potential_closed`` is the reference formula built from ``Omega``, ``Y``
    and ``Y e^{i tau a}``; ``extras["potential_realization"]`` evaluates
    ``gamma_tau(0, tau)^*`` from the realization directly and matches the
    numerical pipeline.
    """
    A, B, C, P, omega = t.realization()
    a, b, c = t.a, t.b, t.c
    y = sylvester_solve(-a.conj().T, a, 1j * (c.conj().T @ c))
    grid = UniformGrid(T, N)
    nodes = grid.nodes
    k_plus = _rational_samples(A, B, C, P, nodes, +1)
    # k(-t) for t >= 0: -iCe^{itA}PB
    k_minus = np.array([-1j * C @ mat_exp(A, 1j * x) @ P @ B for x in nodes])
    kernel = AccelerantKernel(grid, k_plus, k_minus)

    n = a.shape[0]
    rhs = b + 1j * omega @ c.conj().T

    def potential_closed(tau):
        inner = y - mat_exp(a.conj().T, -1j * tau) @ y @ mat_exp(a, 1j * tau)
        core = np.linalg.solve(np.eye(n) + omega @ inner, rhs)
        return 1j * core.conj().T

    ax = t.a_cross
    Ax = A - B @ C

    def potential_realization(tau):
        E = mat_exp(Ax, -1j * tau)
        comp = E[:n, :n] + 1j * omega @ E[n:, :n]
        gamma0 = 1j * c @ np.linalg.solve(comp, rhs)
        return gamma0.conj().T

    extras = {
        "A": A,
        "B": B,
        "C": C,
        "P": P,
        "omega": omega,
        "y": y,
        "a_cross": ax,
        "potential_realization": potential_realization,
    }
    return FamilyBundle("rational", kernel, potential_closed, extras=extras)


# -------------------------------------------------- pseudo-exponential


@dataclass
class AdmissibleTriple:
    beta: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray

    def __post_init__(self):
        self.beta, self.gamma1, self.gamma2 = _mat(self.beta), _mat(self.gamma1), _mat(self.gamma2)
        n = self.beta.shape[0]
        if self.beta.shape != (n, n):
            raise InvalidTriple(f"beta must be square, got {self.beta.shape}")
        if self.gamma1.shape[0] != n or self.gamma1.shape != self.gamma2.shape:
            raise InvalidTriple("gamma1 and gamma2 must both be n x r")
        defect = self.defect()
        if defect > _identity_tol(self.beta, self.gamma2 @ _adj(self.gamma2)):
            raise InvalidTriple(f"beta^* - beta != i gamma2 gamma2^* (defect {defect:.3e})")

    def defect(self) -> float:
        b, g2 = self.beta, self.gamma2
        return maxnorm(_adj(b) - b - 1j * g2 @ _adj(g2))

    @property
    def alpha(self) -> np.ndarray:
        return self.beta - self.gamma1 @ _adj(self.gamma2)

    def Lambda(self, t: float) -> np.ndarray:
        al, g1, g2 = self.alpha, self.gamma1, self.gamma2
        return np.hstack([mat_exp(al, -1j * t) @ g1, -mat_exp(al, 1j * t) @ (g1 + 1j * g2)])


def pexp_family(t: AdmissibleTriple, T: float, N: int) -> FamilyBundle:
    """Pseudo-exponential accelerant and its potential.

    ``sigma(tau)`` is the trapezoid accumulation of ``Lambda Lambda^*`` with
    step close to the grid step.
    """
    g1, g2, beta = t.gamma1, t.gamma2, t.beta
    lead = -2 * _adj(g1 + 1j * g2)
    grid = UniformGrid(T, N)
    k_plus = np.array([lead @ mat_exp(beta, -2j * x) @ g1 for x in grid.nodes])
    kernel = AccelerantKernel(grid, k_plus, _adj(k_plus))
    n = beta.shape[0]
    al = t.alpha

    def sigma(tau):
        if tau == 0:
            return np.eye(n, dtype=complex)
        m = max(1, int(round(tau / grid.h)))
        s = np.linspace(0.0, tau, m + 1)
        w = trapezoid_weights(m, tau / m)
        acc = np.eye(n, dtype=complex)
        for wi, si in zip(w, s):
            L = t.Lambda(si)
            acc = acc + wi * (L @ _adj(L))
        return acc

    def potential_closed(tau):
        mid = np.linalg.solve(sigma(tau), mat_exp(al, -1j * tau) @ g1)
        return lead @ mat_exp(_adj(al), -1j * tau) @ mid

    return FamilyBundle("pexp", kernel, potential_closed, extras={"sigma": sigma, "alpha": al})


# --------------------------------------------------------- exponential


@dataclass
class ExpRealization:
    """``k(t) = C e^{tA} B`` with ``C = B^* H``, ``H = H^*`` and ``HA + A^*H = 0``."""

    A: np.ndarray
    B: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        self.A, self.B, self.H = _mat(self.A), _mat(self.B), _mat(self.H)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.H.shape != (n, n) or self.B.shape[0] != n:
            raise InvalidTriple(
                f"shapes A{self.A.shape}, B{self.B.shape}, H{self.H.shape} are incompatible"
            )
        tol = _identity_tol(self.A, self.H)
        herm = maxnorm(self.H - _adj(self.H))
        if herm > tol:
            raise InvalidTriple(f"H is not hermitian (defect {herm:.3e})")
        lyap = maxnorm(self.H @ self.A + _adj(self.A) @ self.H)
        if lyap > tol * max(1.0, maxnorm(self.A) * maxnorm(self.H)):
            raise InvalidTriple(f"HA + A^*H != 0 (defect {lyap:.3e})")

    @property
    def C(self) -> np.ndarray:
        return _adj(self.B) @ self.H

    @property
    def r(self) -> int:
        return self.B.shape[1]

    def k(self, t: float) -> np.ndarray:
        return self.C @ mat_exp(self.A, t) @ self.B

    def M(self, tau: float) -> np.ndarray:
        """``I - int_0^tau e^{-sA} BC e^{sA} ds`` from one block exponential."""
        n = self.A.shape[0]
        blk = np.zeros((2 * n, 2 * n), dtype=complex)
        blk[:n, :n] = self.A
        blk[n:, n:] = self.A
        blk[:n, n:] = self.B @ self.C
        conv = scipy.linalg.expm(tau * blk)[:n, n:]
        return np.eye(n) - mat_exp(self.A, -tau) @ conv


def _solve_M(rz: ExpRealization, tau: float, rhs: np.ndarray) -> np.ndarray:
    return LU(rz.M(tau)).solve(rhs)


def expk_family(rz: ExpRealization, T: float, N: int) -> FamilyBundle:
    """Exponential-kernel family with exact resolvent, potential and ``P, P_*``.

    Raises :class:`SingularM` at the first grid level where ``M_tau`` is
    singular.
    """
    grid = UniformGrid(T, N)
    for j, tau in enumerate(grid.nodes):
        try:
            LU(rz.M(tau))
        except SingularMatrix as exc:
            raise SingularM(j, tau, str(exc)) from None
    A, B, C = rz.A, rz.B, rz.C
    k_plus = np.array([rz.k(x) for x in grid.nodes])
    k_minus = np.array([rz.k(-x) for x in grid.nodes])
    kernel = AccelerantKernel(grid, k_plus, k_minus)
    n = A.shape[0]

    def gamma_closed(tau, t, s):
        return C @ mat_exp(A, t) @ _solve_M(rz, tau, mat_exp(A, -s) @ B)

    def potential_closed(tau):
        return C @ mat_exp(A, tau) @ _solve_M(rz, tau, B)

    def P_closed(tau, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        mb = _solve_M(rz, tau, B)
        out = []
        for lv in lam:
            # e^{i lam tau} (I + C int_0^tau e^{x(A - i lam)} dx M^{-1} B)
            phi = phi_integral(A - 1j * lv * np.eye(n), tau)
            out.append(np.exp(1j * lv * tau) * (np.eye(rz.r) + C @ phi @ mb))
        return np.array(out)

    def Pstar_closed(tau, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        mb = _solve_M(rz, tau, mat_exp(A, -tau) @ B)
        left = C @ mat_exp(A, tau)
        out = []
        for lv in lam:
            phi = phi_integral(1j * lv * np.eye(n) - A, tau)
            out.append(np.eye(rz.r) + left @ phi @ mb)
        return np.array(out)

    return FamilyBundle(
        "expk",
        kernel,
        potential_closed,
        gamma_closed,
        P_closed,
        Pstar_closed,
        extras={"M": rz.M, "realization": rz},
    )


def exk_build(rates, freqs, T: Optional[float] = None, N: Optional[int] = None) -> ExpRealization:
    """Realization of ``k(t) = -sum r_nu e^{i beta_nu t}``.

    ``A = diag(i beta)``, ``C = [sqrt r_1 ... sqrt r_n]``, ``B = -C^*`` and
    ``H = -I``.  With ``T`` and ``N`` given, ``M_tau`` is also certified
    positive definite at every grid level.
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if rates.shape != freqs.shape or rates.ndim != 1 or rates.size == 0:
        raise ValueError("rates and freqs must be equal-length nonempty 1-d arrays")
    if np.any(rates <= 0) or not np.all(np.isfinite(rates)):
        raise ValueError("every rate must be positive and finite")
    if not np.all(np.isfinite(freqs)):
        raise ValueError("frequencies must be finite")
    n = rates.size
    C = np.sqrt(rates)[None, :].astype(complex)
    rz = ExpRealization(np.diag(1j * freqs), -C.conj().T, -np.eye(n))
    if T is not None and N is not None:
        for j, tau in enumerate(UniformGrid(T, N).nodes):
            M = rz.M(tau)
            if not posdef_check((M + _adj(M)) / 2) or maxnorm(M - _adj(M)) > 1e-10 * maxnorm(M):
                raise SingularM(j, tau, "M_tau is not positive definite")
    return rz


def exk_fixture(T: float = 1.0, N: int = 200) -> FamilyBundle:
    """``k(t) = -e^{it}``: the reference instance (``M_tau = 1 + tau``)."""
    return expk_family(exk_build([1.0], [1.0]), T, N)


def random_exk(seed: int, n: int = 2, r: int = 2, scale: float = 1.0, b_norm: float = 1.0) -> ExpRealization:
    """Matrix-valued ``k`` with a non-commuting realization and ``H = -I``.

    ``A`` is skew-hermitian so ``HA + A^*H = 0`` holds with ``H = -I``;
    ``B`` is normalized to Frobenius norm ``b_norm``.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = scale * (X - _adj(X)) / 2
    B = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    B *= b_norm / np.linalg.norm(B)
    return ExpRealization(A, B, -np.eye(n))
