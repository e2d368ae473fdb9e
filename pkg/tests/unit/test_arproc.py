import cmath
import math

import numpy as np
import pytest

from ar_persistence.arproc import (
    PathState,
    advance_paths,
    conditional_gaussian,
    convolution_bound_constant,
    covariance_window,
    eval_modal,
    impulse_response,
    modal_decomposition,
    oscillatory_partial_sums,
    path_correlation,
    path_covariance,
    propagate_components,
    rotated_components,
    rotation_negativity_witness,
    rotation_step,
    simulate,
    triangle_closed_form,
    triangle_coeff,
)
from ar_persistence.errors import NumericalError, PreconditionError
from ar_persistence.polyalg import GeneratingPolynomial, ZeroSet, from_zero_set


# -------------------------------------   HELPER FUNCTIONS  -----------------------------------
def recurrence(coeffs, init, n):
    q = list(init)
    while len(q) < n:
        q.append(sum(a * q[-j] for j, a in enumerate(coeffs, start=1)))
    return np.array(q[:n])


def exact_zeros(*pairs):
    return ZeroSet(tuple((complex(root), mult) for root, mult in pairs), exact=True)


def random_modal_zeros(rng, max_degree=6, separation=0.4):
    """Exact zero set inside the closed unit disk with pairwise separated roots; real roots may be double."""
    target = int(rng.integers(1, max_degree + 1))
    pairs, degree = [], 0
    for _ in range(1000):
        if degree >= target:
            break
        radius = rng.uniform(0.6, 1.0)
        if target - degree < 2 or rng.random() < 0.5:
            root = complex(radius * rng.choice([-1.0, 1.0]))
            mult = int(rng.integers(1, min(2, target - degree) + 1))
            size = mult
        else:
            root = radius * cmath.exp(1j * rng.uniform(0.4, math.pi - 0.4))
            mult, size = 1, 2
        if all(abs(root - other) >= separation and abs(root - other.conjugate()) >= separation for other, _ in pairs):
            pairs.append((root, mult))
            degree += size
    return ZeroSet.from_pairs(pairs)


# ----------------------------------------------------------------------------------
# ---------------------------------    T E S T S   ---------------------------------
# ----------------------------------------------------------------------------------
# ---- Simulation
def test_simulate_is_deterministic():
    poly = GeneratingPolynomial((0.3, -0.2))
    first = simulate(poly, 200, seed=42)
    second = simulate(poly, 200, seed=42)
    np.testing.assert_array_equal(first.xs, second.xs)
    assert not first.saturated
    assert len(first.xs) == 200


def test_simulate_with_injected_unit_impulse():
    noise = np.zeros(10)
    noise[0] = 1.0
    sample = simulate(GeneratingPolynomial((2, -1)), 10, noise=noise)
    np.testing.assert_allclose(sample.xs, np.arange(1, 11))


def test_simulate_matches_impulse_convolution():
    rng = np.random.default_rng(8)
    noise = rng.standard_normal(300)
    for coeffs in [(0.5,), (1,), (-1, 1, 1), (1.1, 0.2)]:
        poly = GeneratingPolynomial(coeffs)
        xs = simulate(poly, 300, noise=noise).xs
        h = impulse_response(poly, 299).h
        expected = np.convolve(h, noise)[:300]
        scale = np.maximum(1.0, np.abs(expected))
        np.testing.assert_allclose(xs / scale, expected / scale, atol=1e-8)


def test_simulate_explosive_path_saturates_with_sign():
    noise = np.zeros(2000)
    noise[0] = 1.0
    sample = simulate(GeneratingPolynomial((3.0,)), 2000, noise=noise)
    assert sample.saturated
    assert np.all(sample.xs > 0)
    assert np.isinf(sample.xs[-1])


def test_advance_paths_keeps_sign_of_rescaled_explosive_paths():
    poly = GeneratingPolynomial((4.0,))
    state = PathState.zeros(3, 1)
    noise = np.zeros((3, 600))
    noise[:, 0] = [1.0, -1.0, 0.5]
    _, first_negative, _ = advance_paths(poly, state, noise)
    np.testing.assert_array_equal(first_negative, [600, 0, 600])
    assert np.all(np.isfinite(state.window))
    assert np.all(state.exponent > 0)


def test_simulate_rejects_short_noise():
    with pytest.raises(PreconditionError):
        simulate(GeneratingPolynomial((1,)), 10, noise=np.zeros(5))


def test_path_sample_frame():
    frame = simulate(GeneratingPolynomial((0.5,)), 5, seed=1).to_frame()
    assert list(frame.columns) == ["n", "value"]
    assert frame["n"].tolist() == [0, 1, 2, 3, 4]


# ---- Impulse response and covariances
def test_impulse_random_walk():
    np.testing.assert_allclose(impulse_response(GeneratingPolynomial((1,)), 20).h, np.ones(21))


def test_impulse_integrated_random_walk():
    np.testing.assert_allclose(impulse_response(GeneratingPolynomial((2, -1)), 30).h, np.arange(1, 32))


def test_impulse_geometric():
    np.testing.assert_allclose(impulse_response(GeneratingPolynomial((0.7,)), 25).h, 0.7 ** np.arange(26))


def test_covariance_window_random_walk():
    assert covariance_window(GeneratingPolynomial((1,)), 9)[0, 0] == pytest.approx(10.0)


def test_covariance_window_stationary_limit():
    assert covariance_window(GeneratingPolynomial((0.5,)), 200)[0, 0] == pytest.approx(4.0 / 3.0)


def test_covariance_window_integrated_walk_eigenvalues_grow_polynomially():
    poly = GeneratingPolynomial((2, -1))
    small = np.linalg.eigvalsh(covariance_window(poly, 50))
    large = np.linalg.eigvalsh(covariance_window(poly, 400))
    # Largest eigenvalue grows like n^3, smallest like n.
    assert large[-1] / small[-1] == pytest.approx(8.0**3, rel=0.1)
    assert 4.0 < large[0] / small[0] < 16.0


def test_covariance_window_needs_n_at_least_degree():
    with pytest.raises(PreconditionError):
        covariance_window(GeneratingPolynomial((1, 1, -1)), 2)


def test_path_covariance_and_correlation():
    poly = GeneratingPolynomial((1,))
    np.testing.assert_allclose(path_covariance(poly, 3), [[1, 1, 1], [1, 2, 2], [1, 2, 3]])
    assert path_correlation(poly, 0, 1) == pytest.approx(1 / math.sqrt(2))


@pytest.mark.parametrize("order", [1, 2, 3])
def test_dyadic_correlations_of_integrated_walks(order):
    # (z - 1)^order
    poly = from_zero_set(exact_zeros((1, order)))
    for i in range(8, 12):
        for j in range(8, 12):
            bound = 2.0 ** (1 - abs(i - j) / 2) * 1.1
            assert path_correlation(poly, 2**i, 2**j) <= bound



# ---- Modal decomposition
def test_modal_single_unit_root():
    decomposition = modal_decomposition(exact_zeros((1, 1)), [5.0])
    assert decomposition.terms[0][1][0] == pytest.approx(5.0)
    np.testing.assert_allclose(eval_modal(decomposition, np.arange(11)), np.full(11, 5.0))


def test_modal_double_unit_root():
    decomposition = modal_decomposition(exact_zeros((1, 2)), [1.0, 2.0])
    np.testing.assert_allclose(eval_modal(decomposition, np.arange(11)), 1.0 + np.arange(11), atol=1e-12)


def test_modal_complex_pair():
    decomposition = modal_decomposition(exact_zeros((1j, 1), (-1j, 1)), [0.0, 1.0])
    expected = np.sin(np.arange(11) * math.pi / 2)
    np.testing.assert_allclose(eval_modal(decomposition, np.arange(11)), expected, atol=1e-12)
    assert eval_modal(decomposition, 1) == pytest.approx(1.0)


def test_modal_matches_recurrence_for_mixed_roots():
    zeros = exact_zeros((1, 1), (-1, 2), (0.5 + 0.5j, 1), (0.5 - 0.5j, 1))
    poly = from_zero_set(zeros)
    init = [1.0, -2.0, 0.5, 3.0, 1.0]
    decomposition = modal_decomposition(zeros, init)
    expected = recurrence(poly.coeffs, init, 30)
    np.testing.assert_allclose(eval_modal(decomposition, np.arange(30)), expected, rtol=1e-8, atol=1e-8)


def test_modal_matches_recurrence_on_random_zero_sets():
    rng = np.random.default_rng(36)
    ell = np.arange(201)
    for _ in range(300):
        zeros = random_modal_zeros(rng)
        poly = from_zero_set(zeros)
        init = rng.standard_normal(poly.degree)
        expected = recurrence(poly.coeffs, init, ell.size)
        scale = np.maximum(1.0, np.maximum.accumulate(np.abs(expected)))
        error = np.abs(eval_modal(modal_decomposition(zeros, init), ell) - expected)
        assert np.all(error <= 1e-8 * scale), zeros.entries



def test_modal_amplitude_phase_real_form():
    decomposition = modal_decomposition(exact_zeros((1j, 1), (-1j, 1)), [0.0, 1.0])
    rows = decomposition.amplitude_phase()
    assert len(rows) == 1
    root, j, amplitude, phase = rows[0]
    ell = np.arange(8)
    np.testing.assert_allclose(amplitude * np.cos(ell * math.pi / 2 + phase), np.sin(ell * math.pi / 2), atol=1e-12)


def test_modal_rejects_ill_conditioned_system():
    with pytest.raises(NumericalError):
        modal_decomposition(exact_zeros((1.0, 1), (1.0 + 1e-14, 1)), [1.0, 1.0])


def test_modal_rejects_wrong_init_length():
    with pytest.raises(PreconditionError):
        modal_decomposition(exact_zeros((1, 1)), [1.0, 2.0])


# ---- Triangle coefficients and rotated components
def test_triangle_coefficients():
    assert triangle_coeff(7, 3, 0) == 1
    assert triangle_coeff(5, 2, 1) == 4
    assert triangle_coeff(6, 1, 2) == 21


def test_triangle_recursion_matches_closed_form():
    for n in range(1, 15):
        for i in range(1, n + 1):
            for M in range(5):
                assert triangle_coeff(n, i, M) == triangle_closed_form(n, i, M)


def test_rotated_components_zero_angle_is_cumulative_sum():
    noise = np.random.default_rng(1).standard_normal(20)
    component = rotated_components(noise, 0.0, 0.0, 0, 20)
    np.testing.assert_allclose(component.t[1:], np.cumsum(noise))
    np.testing.assert_allclose(component.t_prime, 0.0, atol=1e-14)


def test_rotated_components_angle_pi_alternates():
    noise = np.random.default_rng(2).standard_normal(15)
    component = rotated_components(noise, math.pi, 0.0, 0, 15)
    for n in range(1, 16):
        signs = (-1.0) ** (n - np.arange(1, n + 1))
        assert component.t[n] == pytest.approx(np.sum(signs * noise[:n]), abs=1e-10)


def test_rotation_step_identity():
    rng = np.random.default_rng(4)
    noise = rng.standard_normal(50)
    theta, phase = rng.uniform(0.1, 3.0), rng.uniform(-1, 1)
    lower = rotated_components(noise, theta, phase, 0, 50).states
    upper = rotated_components(noise, theta, phase, 1, 50).states
    for n in range(50):
        np.testing.assert_allclose(rotation_step(upper[n], theta, lower[n + 1]), upper[n + 1], atol=1e-9)


def test_rotation_step_quarter_turn():
    np.testing.assert_allclose(rotation_step([1.0, 0.0], math.pi / 2, [0.0, 0.0]), [0.0, 1.0], atol=1e-15)


def test_propagate_components_matches_direct_sums():
    rng = np.random.default_rng(6)
    n, k, theta, phase = 12, 2, 0.7, 0.3
    for s in range(1, 11):
        noise = np.concatenate([rng.standard_normal(n), np.zeros(s)])
        states = np.array([rotated_components(noise, theta, phase, r, n + s).states for r in range(k + 1)])
        propagated = propagate_components(states[:, n], theta, s)
        np.testing.assert_allclose(propagated, states[:, n + s], rtol=1e-9, atol=1e-9)


# ---- Oscillatory bounds and witnesses
def test_oscillatory_partial_sums_are_bounded():
    for theta in (0.3, 1.0, 2.5, math.pi):
        ratios = oscillatory_partial_sums(theta, 0.4, 2, 2000)
        assert np.max(ratios) <= 2.0 / abs(math.sin(theta / 2)) + 1e-9


def test_convolution_bound_constant_single_angle():
    assert convolution_bound_constant([math.pi / 2]) == pytest.approx(math.sqrt(2))


def test_negativity_witness_examples():
    assert rotation_negativity_witness([math.pi], [1.0], [0.0]) == 1
    assert rotation_negativity_witness([math.pi / 2], [1.0], [0.0]) == 2


def test_negativity_witness_random_instances():
    rng = np.random.default_rng(9)
    for _ in range(100):
        ell = int(rng.integers(1, 4))
        thetas = rng.uniform(0.2, 3.0, size=ell)
        rs = rng.uniform(-1, 1, size=ell)
        gammas = rng.uniform(-math.pi, math.pi, size=ell)
        i = rotation_negativity_witness(thetas, rs, gammas)
        assert np.sum(rs * np.cos(i * thetas + gammas)) <= -np.max(np.abs(rs)) / 4 + 1e-12


def test_negativity_witness_rejects_bad_phase_at_pi():
    with pytest.raises(PreconditionError):
        rotation_negativity_witness([math.pi], [1.0], [0.5])


def test_negativity_witness_rejects_repeated_angles():
    with pytest.raises(PreconditionError):
        rotation_negativity_witness([1.0, 1.0], [1.0, 1.0], [0.0, 0.0])


# ---- Conditional Gaussian
def test_conditional_gaussian_independent_block_unchanged():
    mean, cov = conditional_gaussian([0, 0, 0], np.diag([1.0, 2.0, 3.0]), [1], [5.0])
    np.testing.assert_allclose(mean, [0, 0])
    np.testing.assert_allclose(cov, np.diag([1.0, 3.0]))


def test_conditional_gaussian_bivariate():
    mean, cov = conditional_gaussian([0, 0], [[1.0, 0.5], [0.5, 1.0]], [1], [2.0])
    assert mean[0] == pytest.approx(1.0)
    assert cov[0, 0] == pytest.approx(0.75)


def test_conditional_variance_does_not_exceed_marginal():
    cov = path_covariance(GeneratingPolynomial((0.6, 0.2)), 8)
    _, conditional = conditional_gaussian(np.zeros(8), cov, [0, 3, 7], [1.0, -1.0, 0.5])
    free = [1, 2, 4, 5, 6]
    assert np.all(np.diag(conditional) <= np.diag(cov)[free] + 1e-12)


def test_conditional_gaussian_rejects_indefinite_covariance():
    with pytest.raises(PreconditionError):
        conditional_gaussian([0, 0], [[1.0, 2.0], [2.0, 1.0]], [0], [1.0])
