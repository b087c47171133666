import numpy as np
import pytest
from hypothesis import given, strategies as st

from krein.accelerant import solve_resolvent
from krein.kreinsys import LambdaGrid, fg_from_matrizant, fg_from_potential, matrizant
from krein.accelerant import potential_of
from krein.lincore import UniformGrid, maxnorm
from krein.resultant import (
    NEGATIVE,
    POSITIVE,
    ExpTypeFunction,
    ExtractionFailed,
    SingularResultant,
    TwoSidedKernel,
    apply_resultant,
    assemble_resultant,
    conditions_check,
    eval_exptype,
    extract_kernel,
    recover_accelerant,
    sharp,
    weight_residual,
)
from krein.kreinsys import collocation_lambdas

seeds = st.integers(0, 2**31 - 1)


def random_fn(rng, r, N, orientation=POSITIVE, tau=1.0):
    kern = rng.standard_normal((N + 1, r, r)) + 1j * rng.standard_normal((N + 1, r, r))
    return ExpTypeFunction(orientation, tau, kern)


@pytest.fixture(scope="module")
def exk_pair():
    from krein.examples import exk_fixture

    b = exk_fixture(1.0, 200)
    gam = solve_resolvent(b.kernel, 200)
    U = matrizant(potential_of(b.kernel), LambdaGrid.real(-1, 1, 3))
    F, G, _ = fg_from_matrizant(U, "from_resolvent", gamma=gam)
    return b, F, G


def test_exptype_validation():
    with pytest.raises(ValueError):
        ExpTypeFunction("sideways", 1.0, np.zeros((3, 1, 1)))
    with pytest.raises(ValueError):
        ExpTypeFunction(POSITIVE, 1.0, np.full((3, 1, 1), np.nan))


def test_eval_zero_kernel_identity():
    F = ExpTypeFunction.identity(2, 1.0, 10)
    np.testing.assert_array_equal(eval_exptype(F, 3.7), np.eye(2))


def test_eval_at_zero_is_trapezoid_integral(rng):
    F = random_fn(rng, 2, 8)
    w = np.full(9, 1 / 8)
    w[[0, -1]] /= 2
    np.testing.assert_allclose(eval_exptype(F, 0.0), np.eye(2) + np.einsum("m,mab->ab", w, F.kernel))


def test_eval_exponential_kernel_analytic():
    errs = []
    for N in (50, 100):
        x = np.linspace(0, 1, N + 1)
        F = ExpTypeFunction(POSITIVE, 1.0, np.exp(1j * x)[:, None, None])
        errs.append(abs(eval_exptype(F, 0.0)[0, 0] - (1 + (np.exp(1j) - 1) / 1j)))
    assert errs[1] < 1e-5
    assert 3.9 < errs[0] / errs[1] < 4.1


def test_sharp_involution_and_identity(rng):
    F = random_fn(rng, 3, 7)
    S = sharp(F)
    assert S.orientation == NEGATIVE
    assert maxnorm(S.kernel) == maxnorm(F.kernel)
    assert np.array_equal(sharp(S).kernel, F.kernel)
    assert maxnorm(sharp(ExpTypeFunction.identity(2, 1.0, 4)).kernel) == 0.0


def test_sharp_sample_map(exk_pair):
    _, F, _ = exk_pair
    S = sharp(F)
    # S.kernel is listed from -T: S(-x_m) = f(x_m)^*
    np.testing.assert_array_equal(S.kernel[::-1], F.kernel.conj().transpose(0, 2, 1))


@given(seeds)
def test_eval_sharp_compatibility(seed):
    rng = np.random.default_rng(seed)
    F = random_fn(rng, 2, 12, orientation=POSITIVE if seed % 2 else NEGATIVE)
    lam = rng.uniform(-8, 8, 20) + 1j * rng.uniform(-2, 2, 20)
    lhs = eval_exptype(sharp(F), lam)
    rhs = eval_exptype(F, lam.conj()).conj().transpose(0, 2, 1)
    assert maxnorm(lhs - rhs) <= 1e-12 * max(1.0, maxnorm(rhs))


def test_extract_zero_samples():
    lam = collocation_lambdas(1.0, 10)
    fn, rep = extract_kernel(lam, np.zeros((lam.size, 1, 1)), POSITIVE, 1.0, 10)
    assert maxnorm(fn.kernel) == 0.0
    assert rep.rank == 11


@given(seeds, st.sampled_from([POSITIVE, NEGATIVE]))
def test_extract_self_consistency(seed, orientation):
    rng = np.random.default_rng(seed)
    N = 16
    F = random_fn(rng, 2, N, orientation)
    lam = collocation_lambdas(1.0, N)
    fn, rep = extract_kernel(lam, eval_exptype(F, lam) - np.eye(2), orientation, 1.0, N)
    assert maxnorm(fn.kernel - F.kernel) <= 1e-6
    assert rep.residual < 1e-10


def test_extract_noise_degrades_gracefully(rng):
    N = 20
    F = random_fn(rng, 1, N)
    lam = collocation_lambdas(1.0, N)
    samples = eval_exptype(F, lam) - np.eye(1)
    noise = 1e-8 * (rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape))
    fn, _ = extract_kernel(lam, samples + noise, POSITIVE, 1.0, N)
    assert maxnorm(fn.kernel - F.kernel) < 1e-5


def test_extract_linear_model_matches_continuous_transform():
    # f(x) = x on [0, 1]; the linear model is exact for piecewise-linear kernels
    lam = collocation_lambdas(1.0, 12)
    vals = np.where(lam == 0, 0.5, (np.exp(1j * lam) * (1 - 1j * lam) - 1) / np.where(lam == 0, 1, lam) ** 2)
    fn, _ = extract_kernel(lam, vals[:, None, None], POSITIVE, 1.0, 12, model="linear")
    assert maxnorm(fn.kernel[:, 0, 0] - np.linspace(0, 1, 13)) < 1e-10


def test_extract_preconditions():
    lam = collocation_lambdas(1.0, 4)
    with pytest.raises(ValueError):
        extract_kernel(lam[:5], np.zeros((5, 1, 1)), POSITIVE, 1.0, 4)
    with pytest.raises(ValueError):
        extract_kernel(lam + 0.1j, np.zeros((lam.size, 1, 1)), POSITIVE, 1.0, 4)


def test_extract_rank_collapse():
    # all samples at one repeated phase pattern: lam multiples of 2 pi / h alias
    N = 10
    lam = 2 * np.pi * N * np.arange(1, 2 * (N + 1) + 1)
    with pytest.raises(ExtractionFailed):
        extract_kernel(lam, np.zeros((lam.size, 1, 1)), POSITIVE, 1.0, N)


def test_resultant_identity_and_dimension():
    z = ExpTypeFunction.identity(2, 1.0, 6)
    R = assemble_resultant(sharp(z), z)
    assert R.dim == 2 * 2 * 7
    np.testing.assert_array_equal(R.matrix, np.eye(R.dim))


def test_resultant_constant_kernel():
    N, c = 40, 0.7 - 0.2j
    D = ExpTypeFunction(POSITIVE, 1.0, np.full((N + 1, 1, 1), c))
    B = ExpTypeFunction.identity(1, 1.0, N, NEGATIVE)
    R = assemble_resultant(B, D)
    u = np.linspace(0, 1, N + 1)
    zeros = np.zeros((N + 1, 1, 1))
    ones = np.ones((N + 1, 1, 1))
    # q = 1 on [0, T] only: (Rq)(u) = 1 + c min(u, tau)
    minus, plus = apply_resultant(R, zeros, ones)
    assert maxnorm(plus[:, 0, 0] - (1 + c * np.minimum(u, 1.0))) < 1e-12
    assert maxnorm(minus) == 0.0
    # q = 1 on both halves: the window [u - tau, u] is always full
    minus, plus = apply_resultant(R, ones, ones)
    assert maxnorm(plus[:, 0, 0] - (1 + c)) < 1e-12
    assert maxnorm(minus - 1) == 0.0


def test_resultant_shape_mismatch():
    with pytest.raises(ValueError):
        assemble_resultant(ExpTypeFunction.identity(1, 1.0, 4, NEGATIVE), ExpTypeFunction.identity(1, 1.0, 5))
    with pytest.raises(ValueError):
        assemble_resultant(ExpTypeFunction.identity(1, 1.0, 4), ExpTypeFunction.identity(1, 1.0, 4))


def test_recover_identity_pair():
    F = ExpTypeFunction.identity(2, 1.0, 8)
    G = ExpTypeFunction.identity(2, 1.0, 8, NEGATIVE)
    k, rep = recover_accelerant(F, G)
    assert maxnorm(k.plus) == 0.0 and maxnorm(k.minus) == 0.0
    assert rep.hermitian_defect == 0.0


def test_recover_from_resolvent_pair_is_exact(exk_pair):
    b, F, G = exk_pair
    k, rep = recover_accelerant(F, G)
    assert maxnorm(k.plus - b.kernel.k_plus) < 1e-10
    assert maxnorm(k.minus - b.kernel.k_minus) < 1e-10
    assert rep.hermitian_defect < 1e-10


def test_recover_full_pipeline(exk200):
    F, G, _ = fg_from_potential(potential_of(exk200.kernel))
    k, rep = recover_accelerant(F, G)
    err = max(maxnorm(k.plus - exk200.kernel.k_plus), maxnorm(k.minus - exk200.kernel.k_minus))
    assert err <= 5e-3
    assert rep.hermitian_defect <= 5e-3


def test_recover_degenerate_input():
    # G built from F's kernel with the orientation forced: a singular resultant
    N = 20
    F = ExpTypeFunction(POSITIVE, 1.0, np.full((N + 1, 1, 1), -1.0 + 0j))
    G = ExpTypeFunction(NEGATIVE, 1.0, F.kernel.copy())
    try:
        _, rep = recover_accelerant(F, G)
    except SingularResultant:
        return
    assert rep.hermitian_defect > 1e-3


def test_recover_orientation_checked():
    F = ExpTypeFunction.identity(1, 1.0, 4)
    with pytest.raises(ValueError):
        recover_accelerant(F, F)


def test_conditions_identity_pair():
    I = ExpTypeFunction.identity(1, 1.0, 10)
    rep = conditions_check(I, I, np.linspace(-5, 5, 11))
    assert rep.identity_residual == 0.0
    assert abs(rep.min_singular_value - np.sqrt(2)) < 1e-14
    assert rep.passed and rep.sampled_only


def test_conditions_exponential_pair(exk_pair):
    _, F, G = exk_pair
    rep = conditions_check(F, sharp(G), np.linspace(-20, 20, 41))
    assert rep.passed


def test_conditions_common_zero():
    # L(lam) = 1 - int_0^1 e^{i lam x} dx vanishes at lam = 0 on the grid
    L = ExpTypeFunction(POSITIVE, 1.0, np.full((11, 1, 1), -1.0 + 0j))
    rep = conditions_check(L, L, np.linspace(-4, 4, 9))
    assert rep.min_singular_value < 1e-6
    assert not rep.passed
    assert rep.worst_lambda == 0


def test_conditions_needs_real_grid():
    I = ExpTypeFunction.identity(1, 1.0, 4)
    with pytest.raises(ValueError):
        conditions_check(I, I, [1j])


def test_weight_residual_zero():
    z = ExpTypeFunction.identity(1, 1.0, 6)
    k = TwoSidedKernel(UniformGrid(1.0, 6), np.zeros((7, 1, 1)), np.zeros((7, 1, 1)))
    assert weight_residual(z, z, k) == (0.0, 0.0)


def test_weight_residual_exponential(exk200):
    F, G, _ = fg_from_potential(potential_of(exk200.kernel))
    k, _ = recover_accelerant(F, G)
    wl, wm = weight_residual(F, sharp(G), k)
    assert wl <= 5e-3 and wm <= 5e-3
    wl2, wm2 = weight_residual(F, sharp(G), k.scaled(2.0))
    assert min(wl2, wm2) >= 1e-1
