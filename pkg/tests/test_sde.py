import numpy as np
import pytest

from irregmc.errors import InvalidArgumentError, NumericFailureError
from irregmc.randomkit import SeedSpec, generate_increments, increment_batch
from irregmc.sde import (
    CoefficientMeta,
    SdeModel,
    coupled_pair,
    coupled_terminal_batch,
    em_path,
    em_terminal_batch,
    euler_maruyama,
    make_model,
    reference_terminal,
    verify_model,
)
from irregmc.stats import loglog_fit


@pytest.mark.parametrize("n", [1, 7, 64, 1024])
def test_constant_coefficients_collapse_to_closed_form(n):
    model = make_model("constant", mu=0.1, sigma=0.2)
    grid = generate_increments(SeedSpec(3, n), 1, 1.0, n)
    term = euler_maruyama(model, n, grid)
    closed = 0.1 * 1.0 + 0.2 * grid.increments.sum()
    assert abs(term.value[0] - closed) <= 1e-12 * max(1.0, abs(closed))


def test_zero_dynamics_returns_x0():
    model = make_model("zero", x0=1.5)
    grid = generate_increments(SeedSpec(1, 0), 1, 1.0, 16)
    assert euler_maruyama(model, 16, grid).value[0] == 1.5


def test_dimension_and_step_mismatch():
    model = make_model("constant", d=2)
    grid = generate_increments(SeedSpec(1, 0), 1, 1.0, 8)
    with pytest.raises(InvalidArgumentError):
        euler_maruyama(model, 8, grid)
    grid2 = generate_increments(SeedSpec(1, 0), 2, 1.0, 8)
    with pytest.raises(InvalidArgumentError):
        euler_maruyama(model, 4, grid2)


def test_nonfinite_state_names_step():
    bad = SdeModel(
        name="bad", d=1, T=1.0, x0=np.array([0.0]),
        drift=lambda t, x: np.full_like(x, np.nan),
        diffusion=lambda t, x: np.zeros(x.shape + (1,)),
        meta=CoefficientMeta(0, 0, 0, 0, 0),
    )
    grid = generate_increments(SeedSpec(1, 0), 1, 1.0, 4)
    with pytest.raises(NumericFailureError, match="step 0"):
        euler_maruyama(bad, 4, grid)


@pytest.mark.parametrize("M", [1, 2, 8])
def test_coupling_exact_for_constant_coefficients(M):
    model = make_model("constant", mu=0.3, sigma=0.5)
    grid = generate_increments(SeedSpec(9, 1), 1, 1.0, 16)
    fine, coarse = coupled_pair(model, grid, M)
    assert abs(fine.value[0] - coarse.value[0]) <= 1e-12 * max(1.0, abs(fine.value[0]))


def test_coupled_batch_m1_identity():
    model = make_model("sincos")
    inc = increment_batch(5, 1, 1.0, 8, 0, 16)
    fine, coarse = coupled_terminal_batch(model, inc, 1)
    assert np.array_equal(fine, coarse)


def test_determinism_bitwise():
    model = make_model("sincos")
    grid = generate_increments(SeedSpec(77, 0), 1, 1.0, 32)
    a = euler_maruyama(model, 32, grid).value
    b = euler_maruyama(model, 32, grid).value
    assert np.array_equal(a, b)


def test_markov_step_locality():
    # changing increment k only affects states at steps > k
    model = make_model("sincos")
    grid = generate_increments(SeedSpec(4, 0), 1, 1.0, 16)
    base = em_path(model, grid)
    bumped = generate_increments(SeedSpec(4, 0), 1, 1.0, 16)
    k = 9
    bumped.increments[k, 0] += 0.5
    path = em_path(model, bumped)
    assert np.array_equal(base[: k + 1], path[: k + 1])
    assert not np.allclose(base[k + 1 :], path[k + 1 :])


def test_reference_terminal_kurtosis():
    # zero drift, unit diffusion: terminal is exactly N(0, T); kurtosis ~ 3
    model = make_model("constant", mu=0.0, sigma=1.0)
    N = 50_000
    inc = increment_batch(21, 1, 1.0, 4, 0, N)
    x = em_terminal_batch(model, inc)[:, 0]
    z = (x - x.mean()) / x.std()
    kurt = np.mean(z**4)
    assert abs(kurt - 3.0) < 4 * np.sqrt(24.0 / N)


def test_reference_refinement_monotone():
    # coupled gap to a 2x finer reference is below the coarse-level gaps
    model = make_model("sincos")
    N, n_ref = 4000, 1024
    inc = increment_batch(31, 1, 1.0, 2 * n_ref, 0, N)
    ref2 = em_terminal_batch(model, inc)
    ref1 = em_terminal_batch(model, inc.reshape(N, n_ref, 2, 1).sum(axis=2))
    coarse = em_terminal_batch(model, inc.reshape(N, 8, 2 * n_ref // 8, 1).sum(axis=2))
    gap_ref = np.mean((ref2 - ref1) ** 2)
    gap_coarse = np.mean((ref2 - coarse) ** 2)
    assert gap_ref < gap_coarse


def test_strong_rate_of_l2_distance():
    # L2 distance to the coupled fine reference decays at the strong rate 1/2
    model = make_model("sincos")
    N, n_ref = 20_000, 2048
    n_list = [8, 16, 32, 64, 128]
    inc = increment_batch(41, 1, 1.0, n_ref, 0, N)
    ref = em_terminal_batch(model, inc)
    dists = []
    for n in n_list:
        xn = em_terminal_batch(model, inc.reshape(N, n, n_ref // n, 1).sum(axis=2))
        dists.append(np.sqrt(np.mean((xn - ref) ** 2)))
    fit = loglog_fit(n_list, dists)
    assert -0.65 <= fit.slope <= -0.35


def test_coupled_variance_scaling_in_n_fine():
    # E|fine - coarse|^2 at fixed M=2 scales like 1/n_fine
    model = make_model("sincos")
    N = 20_000
    n_fines = [16, 32, 64, 128]
    gaps = []
    for i, nf in enumerate(n_fines):
        inc = increment_batch(51 + i, 1, 1.0, nf, 0, N)
        fine, coarse = coupled_terminal_batch(model, inc, 2)
        gaps.append(np.mean((fine - coarse) ** 2))
    fit = loglog_fit(n_fines, gaps)
    assert -1.3 <= fit.slope <= -0.7


def test_reference_terminal_matches_euler():
    model = make_model("constant", mu=0.1, sigma=0.2)
    grid = generate_increments(SeedSpec(2, 0), 1, 1.0, 32)
    assert np.array_equal(
        reference_terminal(model, grid).value, euler_maruyama(model, 32, grid).value
    )


def test_registry_and_verification():
    with pytest.raises(InvalidArgumentError):
        make_model("no_such_model")
    for name in ("constant", "sincos", "sincos2d"):
        verify_model(make_model(name))
    lying = SdeModel(
        name="lying", d=1, T=1.0, x0=np.array([0.0]),
        drift=lambda t, x: np.full_like(x, 5.0),
        diffusion=lambda t, x: np.ones(x.shape + (1,)),
        meta=CoefficientMeta(sup_b=1.0, lip_space=0.0, holder_time=0.0,
                             a_lower=1.0, a_upper=1.0),
    )
    with pytest.raises(InvalidArgumentError):
        verify_model(lying)


def test_sincos2d_diagonal_consistency():
    model = make_model("sincos2d")
    x = np.random.default_rng(0).normal(size=(5, 2))
    full = model.diffusion(0.3, x)
    diag = model.diffusion_diag(0.3, x)
    assert np.allclose(full[:, 0, 0], diag[:, 0])
    assert np.allclose(full[:, 1, 1], diag[:, 1])
    assert np.allclose(full[:, 0, 1], 0.0)
