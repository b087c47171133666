import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krein.accelerant import is_accelerant, potential_of, solve_resolvent
from krein.examples import (
    AdmissibleTriple,
    ExpRealization,
    InvalidTriple,
    RationalTriple,
    SingularM,
    StepParams,
    exk_build,
    exk_fixture,
    expk_family,
    fit_scale,
    pexp_family,
    random_exk,
    rational_family,
    step_discrepancies,
    step_exact,
    step_family,
)
from krein.kreinsys import ortho_from_resolvent
from krein.lincore import UniformGrid, maxnorm, posdef_check

SCALAR_RATIONAL = RationalTriple([[1j]], [[1]], [[1]])
# a = i, a - bc = i - 1: both spectra in the upper half-plane


# ---- step


def test_step_rows():
    b = step_family(StepParams(1.0), 100)
    assert b.kernel.k_plus[0, 0, 0] == 1j and b.kernel.k_minus[0, 0, 0] == -1j
    assert abs(b.potential_closed(1.0)[0, 0] - (-1.5574 + 1.0000j)) < 1e-4
    assert abs(b.potential_closed(1.0)[0, 0] - (1j - math.tan(1))) < 1e-12
    assert abs(b.gamma_closed(1.0, 0.5, 0.25)[0, 0] - (0.444 + 0.812j)) < 1e-3


def test_step_params():
    assert not StepParams(1.0).beyond_threshold
    assert StepParams(2.0).beyond_threshold
    with pytest.raises(ValueError):
        StepParams(0.0)
    with pytest.raises(ValueError):
        step_family(StepParams(1.0), 1)


def test_step_gate():
    assert is_accelerant(step_family(StepParams(1.0), 200).kernel).ok
    rep = is_accelerant(step_family(StepParams(2.0), 200).kernel)
    assert not rep.ok
    bad_tau = rep.first_bad_level * 2.0 / 200
    assert abs(bad_tau - math.pi / 2) < 0.05


def test_step_closed_forms_at_lambda_two():
    b = step_family(StepParams(1.0), 10)
    near = b.P_closed(0.7, np.array([2.0 + 1e-7]))
    at = b.P_closed(0.7, np.array([2.0]))
    assert np.all(np.isfinite(at)) and maxnorm(near - at) < 1e-6


def test_step_discrepancy_factors():
    d = step_discrepancies(1.0, 200, tau=0.5)
    assert abs(d["gamma"].scale - 2) < 1e-2
    assert abs(d["potential"].scale - 1) < 1e-2
    assert abs(d["P_correction"].scale - 1) < 1e-2
    assert abs(d["Pstar_correction"].scale + 1) < 1e-2
    for fit in (d["gamma"], d["potential"], d["P_correction"], d["Pstar_correction"]):
        assert fit.rel_residual < 1e-2


def test_step_exact_matches_pipeline():
    N, j = 200, 100
    k = step_family(StepParams(1.0), N).kernel
    gam = solve_resolvent(k, j)
    tau = k.grid.nodes[j]
    g, P, Ps = step_exact(tau)
    t = k.grid.nodes
    assert abs(gam.gamma[60, 20, 0, 0] - g(t[60], t[20])) < 1e-3
    lam = np.linspace(-4, 4, 9)
    pair = ortho_from_resolvent(gam, lam)
    assert maxnorm(pair.P[:, 0, 0] - P(lam)) < 1e-3
    assert maxnorm(pair.P_star[:, 0, 0] - Ps(lam)) < 1e-3


def test_fit_scale_detects_conjugation():
    x = np.exp(1j * np.linspace(0, 2, 30))
    fit = fit_scale(3 * x.conj(), x)
    assert fit.conjugated and abs(fit.scale - 3) < 1e-12 and fit.rel_residual < 1e-12


# ---- rational


def test_rational_scalar_rows():
    b = rational_family(SCALAR_RATIONAL, 1.0, 50)
    assert abs(b.extras["omega"][0, 0] - 0.5) < 1e-12
    assert abs(b.extras["y"][0, 0] - 0.5) < 1e-12
    assert abs(b.kernel.k_plus[0, 0, 0] - (-0.5 - 1j)) < 1e-12
    assert abs(b.potential_closed(0.0)[0, 0] - (0.5 + 1j)) < 1e-12


def test_rational_realization_matches_pipeline():
    b = rational_family(SCALAR_RATIONAL, 1.0, 200)
    pot = potential_of(b.kernel, origin="limit")
    ref = np.array([b.extras["potential_realization"](x) for x in b.kernel.grid.nodes])
    assert maxnorm(pot.a - ref) < 1e-3
    assert abs(ref[0, 0, 0] - b.kernel.k_plus[0, 0, 0]) < 1e-12


def test_rational_reference_potential_is_off():
    b = rational_family(SCALAR_RATIONAL, 1.0, 200)
    pot = potential_of(b.kernel)
    cl = np.array([b.potential_closed(x)[0, 0] for x in b.kernel.grid.nodes])
    assert fit_scale(pot.a[:, 0, 0], cl).rel_residual > 0.1


def test_rational_rejects_bad_spectrum():
    with pytest.raises(InvalidTriple):
        RationalTriple([[-1j]], [[1]], [[1]])
    with pytest.raises(InvalidTriple):
        RationalTriple([[1j]], [[1j * 2]], [[1]])  # a - bc = -i
    with pytest.raises(InvalidTriple):
        RationalTriple(np.eye(2) * 1j, [[1]], [[1]])


@st.composite
def rational_triples(draw):
    n = draw(st.integers(1, 3))
    k = draw(st.integers(1, 2))
    rng = np.random.default_rng(draw(st.integers(0, 2**31 - 1)))
    b = 0.3 * (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k)))
    c = 0.3 * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a = (X + X.conj().T) / 4 + 1j * (2 + np.eye(n))
    return a, b, c


@settings(max_examples=15)
@given(rational_triples())
def test_rational_kernel_hermitian(abc):
    try:
        tr = RationalTriple(*abc)
    except InvalidTriple:
        return
    k = rational_family(tr, 1.0, 20).kernel
    assert maxnorm(k.k_minus - k.k_plus.conj().transpose(0, 2, 1)) <= 1e-12 * max(1, maxnorm(k.k_plus))


# ---- pexp

PEXP = AdmissibleTriple([[1 - 0.5j]], [[1]], [[1]])


def test_pexp_rows():
    b = pexp_family(PEXP, 1.0, 50)
    assert maxnorm(b.extras["sigma"](0.0) - np.eye(1)) == 0.0
    assert abs(b.kernel.k_plus[0, 0, 0] - (-2 + 2j)) < 1e-12
    assert abs(b.potential_closed(0.0)[0, 0] - (-2 + 2j)) < 1e-12


def test_pexp_matches_pipeline():
    b = pexp_family(PEXP, 1.0, 200)
    pot = potential_of(b.kernel)
    cl = np.array([b.potential_closed(x) for x in b.kernel.grid.nodes])
    assert maxnorm(pot.a - cl) < 1e-3


def test_admissible_rejects_perturbation():
    # each bump breaks beta^* - beta = i gamma2 gamma2^* by about 1e-6
    with pytest.raises(InvalidTriple):
        AdmissibleTriple([[1 - 0.5j - 0.5e-6j]], [[1]], [[1]])
    with pytest.raises(InvalidTriple):
        AdmissibleTriple([[1 - 0.5j]], [[1]], [[1 + 0.5e-6]])
    # a hermitian change of beta leaves the identity intact
    AdmissibleTriple([[1 + 1e-6 - 0.5j]], [[1]], [[1]])


def test_admissible_accepts_matrix_triple():
    rng = np.random.default_rng(3)
    g2 = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    S = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    beta = (S + S.conj().T) / 2 - 0.5j * g2 @ g2.conj().T
    tr = AdmissibleTriple(beta, rng.standard_normal((3, 2)), g2)
    assert tr.defect() < 1e-12


# ---- exponential


def test_expk_scalar_rows():
    rz = ExpRealization([[1j]], [[1]], [[-1]])
    assert maxnorm(rz.H @ rz.A + rz.A.conj().T @ rz.H) == 0.0
    assert rz.C[0, 0] == -1
    b = expk_family(rz, 1.0, 100)
    for x in (0.0, 0.3, 1.0):
        assert abs(rz.k(x)[0, 0] + np.exp(1j * x)) < 1e-14
        assert abs(b.extras["M"](x)[0, 0] - (1 + x)) < 1e-12
    assert abs(b.potential_closed(1.0)[0, 0] - (-0.2702 - 0.4207j)) < 1e-4
    assert abs(b.gamma_closed(1.0, 0.5, 0.0)[0, 0] - (-0.4388 - 0.2397j)) < 1e-4


def test_expk_closed_forms_match_pipeline(exk200):
    gam = solve_resolvent(exk200.kernel, 200)
    lam = np.linspace(-10, 10, 11)
    pair = ortho_from_resolvent(gam, lam)
    assert maxnorm(pair.P - exk200.P_closed(1.0, lam)) < 1e-3
    assert maxnorm(pair.P_star - exk200.Pstar_closed(1.0, lam)) < 1e-3


def test_expk_M_matches_quadrature():
    rz = random_exk(11)
    s = np.linspace(0, 0.8, 801)
    from scipy.linalg import expm

    vals = np.array([expm(-x * rz.A) @ rz.B @ rz.C @ expm(x * rz.A) for x in s])
    M = np.eye(2) - np.trapezoid(vals, s, axis=0)
    assert maxnorm(M - rz.M(0.8)) < 1e-6


def test_expk_singular_M():
    # k = e^{it} (H = +I): M_tau = 1 - tau vanishes at tau = 1
    rz = ExpRealization([[1j]], [[1]], [[1]])
    with pytest.raises(SingularM) as info:
        expk_family(rz, 2.0, 20)
    assert info.value.level == 10
    assert "level 10" in str(info.value)


@pytest.mark.parametrize("which", ["H", "lyap"])
def test_exprealization_rejects_perturbation(which):
    A, B, H = np.array([[1j]]), np.array([[1.0]]), np.array([[-1.0]])
    if which == "H":
        H = np.array([[-1.0 + 1e-6j]])
    else:
        A = A + 1e-6
    with pytest.raises(InvalidTriple):
        ExpRealization(A, B, H)
    ExpRealization(np.array([[1j]]), B, np.array([[-1.0]]))


def test_exk_rows():
    rz = exk_build([1.0], [1.0])
    assert abs(rz.k(0.4)[0, 0] + np.exp(0.4j)) < 1e-14
    rz2 = exk_build([0.5, 2.0], [1.0, -3.0])
    k = expk_family(rz2, 1.0, 50).kernel
    assert maxnorm(k.k_minus - k.k_plus.conj().transpose(0, 2, 1)) < 1e-14
    with pytest.raises(ValueError):
        exk_build([1.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        exk_build([1.0], [1.0, 2.0])


@settings(max_examples=10)
@given(
    st.lists(st.floats(0.05, 3.0), min_size=1, max_size=4).flatmap(
        lambda r: st.tuples(st.just(r), st.lists(st.floats(-5, 5), min_size=len(r), max_size=len(r)))
    )
)
def test_exk_posdef_up_to_five(rf):
    rates, freqs = rf
    rz = exk_build(rates, freqs, T=5.0, N=50)
    for tau in UniformGrid(5.0, 50).nodes[::10]:
        M = rz.M(tau)
        assert posdef_check((M + M.conj().T) / 2)


@pytest.mark.parametrize("T", [1.0, 3.0, 5.0])
def test_exk_is_accelerant(T):
    rz = exk_build([1.0, 0.5], [1.0, -2.0], T=T, N=100)
    assert is_accelerant(expk_family(rz, T, 100).kernel).ok


def test_random_exk_invariants():
    rz = random_exk(5)
    assert maxnorm(rz.H @ rz.A + rz.A.conj().T @ rz.H) < 1e-12
    assert abs(np.linalg.norm(rz.B) - 1) < 1e-12
