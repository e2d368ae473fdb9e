import cmath
import math

import numpy as np
import pytest

from ar_persistence.errors import NumericalError, PreconditionError
from ar_persistence.polyalg import (
    GeneratingPolynomial,
    ZeroSet,
    binom_shift,
    companion_matrix,
    direct_power_apply,
    find_roots,
    from_zero_set,
    grid_witness,
    grid_witness_constant,
    jordan_power_apply,
    multiplied_coefficients,
    nonneg_multiplier,
    nonneg_multiplier_quadratic,
    spectral_summary,
)


# -------------------------------------   HELPER FUNCTIONS  -----------------------------------
def exact_zeros(*pairs):
    return ZeroSet(tuple((complex(root), mult) for root, mult in pairs), exact=True)


def assert_same_zero_set(actual: ZeroSet, expected, tol=1e-6):
    assert len(actual.entries) == len(expected)
    for root, mult in expected:
        matches = [m for r, m in actual.entries if abs(r - root) <= tol]
        assert matches == [mult], f"{root} (x{mult}) not found in {actual.entries}"


def random_separated_zeros(rng, max_degree, max_mult=1, modulus=(0.5, 1.3), separation=0.3):
    """Exact zero set of degree <= max_degree whose roots are pairwise `separation` apart."""
    target = int(rng.integers(1, max_degree + 1))
    pairs, degree = [], 0
    for _ in range(1000):
        if degree >= target:
            break
        radius = rng.uniform(*modulus)
        if target - degree < 2 or rng.random() < 0.5:
            root = complex(radius * rng.choice([-1.0, 1.0]))
            mult = int(rng.integers(1, min(max_mult, target - degree) + 1))
            size = mult
        else:
            root = radius * cmath.exp(1j * rng.uniform(0.3, math.pi - 0.3))
            mult, size = 1, 2
        if all(abs(root - other) >= separation and abs(root - other.conjugate()) >= separation for other, _ in pairs):
            pairs.append((root, mult))
            degree += size
    return ZeroSet.from_pairs(pairs)


# ----------------------------------------------------------------------------------
# ---------------------------------    T E S T S   ---------------------------------
# ----------------------------------------------------------------------------------
# ---- Generating polynomial and zero sets
def test_polynomial_rejects_bad_coefficients():
    with pytest.raises(PreconditionError):
        GeneratingPolynomial(())
    with pytest.raises(PreconditionError):
        GeneratingPolynomial((1.0, math.nan))
    with pytest.raises(PreconditionError):
        GeneratingPolynomial((1.0, 0.0))
    with pytest.raises(PreconditionError):
        GeneratingPolynomial(tuple([0.1] * 33))


def test_polynomial_monic_form():
    poly = GeneratingPolynomial((-1, 1, 1))
    np.testing.assert_allclose(poly.monic, [1, 1, -1, -1])
    np.testing.assert_allclose(poly.ascending, [-1, -1, 1, 1])
    assert poly.degree == 3


def test_zero_set_requires_conjugate_closure():
    with pytest.raises(PreconditionError):
        exact_zeros((1j, 1))
    with pytest.raises(PreconditionError):
        exact_zeros((1j, 1), (-1j, 2))


def test_zero_set_rejects_zero_root_and_bad_multiplicity():
    with pytest.raises(PreconditionError):
        exact_zeros((0, 1))
    with pytest.raises(PreconditionError):
        exact_zeros((1, 0))


def test_zero_set_from_pairs_completes_conjugates():
    zeros = ZeroSet.from_pairs([(1, 1), (0.5 + 0.5j, 2)])
    assert zeros.exact
    assert zeros.degree == 5
    assert (0.5 - 0.5j, 2) in zeros.entries


# ---- Root finding
def test_find_roots_linear():
    zeros = find_roots(GeneratingPolynomial((1,)))
    assert_same_zero_set(zeros, [(1, 1)], tol=1e-12)


def test_find_roots_double_root_is_merged():
    zeros = find_roots(GeneratingPolynomial((-1, 1, 1)))
    assert_same_zero_set(zeros, [(1, 1), (-1, 2)])
    assert not zeros.exact
    # Sorted by modulus then real part.
    assert zeros.entries[0][0].real > 0


def test_find_roots_complex_pair():
    zeros = find_roots(GeneratingPolynomial((0, -1)))
    assert_same_zero_set(zeros, [(1j, 1), (-1j, 1)])
    assert zeros.entries[0][0] == pytest.approx(zeros.entries[1][0].conjugate())


def test_find_roots_reproduces_coefficients():
    rng = np.random.default_rng(3)
    for _ in range(20):
        coeffs = tuple(rng.uniform(-1, 1, size=6))
        poly = GeneratingPolynomial(coeffs)
        zeros = find_roots(poly)
        assert zeros.degree == 6
        np.testing.assert_allclose(from_zero_set(zeros).coeffs, coeffs, atol=1e-8)


def test_companion_eigenvalues_are_the_found_roots():
    rng = np.random.default_rng(31)
    for _ in range(50):
        poly = from_zero_set(random_separated_zeros(rng, 6))
        found = find_roots(poly)
        eigenvalues = np.linalg.eigvals(companion_matrix(poly))
        assert sum(mult for _, mult in found.entries) == len(eigenvalues)
        for value in eigenvalues:
            assert min(abs(value - root) for root, _ in found.entries) <= 1e-6 * max(1.0, abs(value))


def test_find_roots_recovers_random_zero_sets():
    rng = np.random.default_rng(32)
    for _ in range(100):
        zeros = random_separated_zeros(rng, 8)
        assert_same_zero_set(find_roots(from_zero_set(zeros)), zeros.entries, tol=1e-6)



# ---- Expansion and summary
@pytest.mark.parametrize(
    "pairs, coeffs",
    [
        ([(1, 1), (-1, 2)], [-1, 1, 1]),
        ([(0.5, 1)], [0.5]),
        ([(1j, 1), (-1j, 1), (1, 1)], [1, -1, 1]),
    ],
)
def test_from_zero_set(pairs, coeffs):
    np.testing.assert_allclose(from_zero_set(exact_zeros(*pairs)).coeffs, coeffs, atol=1e-14)


def test_spectral_summary_mixed_multiplicities():
    summary = spectral_summary(exact_zeros((1, 1), (-1, 2)))
    assert summary.r_star == pytest.approx(1.0)
    assert {root for root, _ in summary.lambda_star} == {1, -1}
    assert summary.m_star == 2
    assert summary.m_rstar == 1


def test_spectral_summary_single_root():
    summary = spectral_summary(exact_zeros((0.5, 1)))
    assert (summary.r_star, summary.m_star, summary.m_rstar) == (0.5, 1, 1)


def test_spectral_summary_explosive():
    summary = spectral_summary(exact_zeros((2, 1), (-2, 2)))
    assert (summary.r_star, summary.m_star, summary.m_rstar) == (2.0, 2, 1)


def test_spectral_summary_without_positive_real_root():
    summary = spectral_summary(exact_zeros((-1, 1)))
    assert summary.m_rstar == 0


# ---- Companion machinery
def test_companion_matrix_layout():
    np.testing.assert_array_equal(companion_matrix(GeneratingPolynomial((1,))), [[1]])
    np.testing.assert_array_equal(companion_matrix(GeneratingPolynomial((2, -1))), [[2, -1], [1, 0]])
    np.testing.assert_array_equal(
        companion_matrix(GeneratingPolynomial((1, -1, 1))), [[1, -1, 1], [1, 0, 0], [0, 1, 0]]
    )


def test_jordan_power_unit_root():
    poly = GeneratingPolynomial((1,))
    np.testing.assert_allclose(jordan_power_apply(poly, [3.0], 7), [3.0])


def test_jordan_power_double_root_matches_direct():
    poly = GeneratingPolynomial((2, -1))
    np.testing.assert_allclose(
        jordan_power_apply(poly, [1.0, 0.0], 5), direct_power_apply(poly, [1.0, 0.0], 5), rtol=1e-6
    )


def test_jordan_power_distinct_roots_matches_direct():
    zeros = exact_zeros((0.9, 1), (-0.5, 1), (0.3 + 0.6j, 1), (0.3 - 0.6j, 1))
    poly = from_zero_set(zeros)
    x = np.random.default_rng(11).standard_normal(4)
    np.testing.assert_allclose(
        jordan_power_apply(poly, x, 12, zeros), direct_power_apply(poly, x, 12), rtol=1e-9, atol=1e-12
    )


def test_jordan_power_matches_direct_on_random_zero_sets():
    rng = np.random.default_rng(33)
    for _ in range(100):
        zeros = random_separated_zeros(rng, 6, max_mult=2, modulus=(0.5, 1.2))
        poly = from_zero_set(zeros)
        x = rng.standard_normal(poly.degree)
        n = int(rng.integers(0, 31))
        direct = direct_power_apply(poly, x, n)
        scale = max(1.0, float(np.max(np.abs(direct))))
        np.testing.assert_allclose(jordan_power_apply(poly, x, n, zeros), direct, rtol=1e-6, atol=1e-8 * scale)



def test_jordan_power_rejects_nearly_merged_roots():
    zeros = exact_zeros((1.0, 1), (1.0 + 1e-12, 1))
    poly = from_zero_set(zeros)
    with pytest.raises(NumericalError) as e:
        jordan_power_apply(poly, [1.0, 0.0], 3, zeros)
    assert e.value.condition is not None


def test_power_apply_rejects_negative_n():
    with pytest.raises(PreconditionError):
        direct_power_apply(GeneratingPolynomial((1,)), [1.0], -1)


# ---- Non-negative multipliers
@pytest.mark.parametrize("b, c", [(0.0, 1.0), (-1.0, 1.0), (1.9, 1.0), (-1.9, 1.0), (-1.2, 0.5)])
def test_quadratic_multiplier_gives_nonnegative_product(b, c):
    multiplier = nonneg_multiplier_quadratic(b, c)
    assert multiplier[0] == 1.0
    assert np.all(multiplier > 0)
    assert np.all(np.convolve([c, b, 1.0], multiplier) >= -1e-12)


def test_quadratic_multiplier_rejects_real_roots():
    with pytest.raises(PreconditionError):
        nonneg_multiplier_quadratic(3.0, 1.0)


def test_multiplier_for_negative_linear_factor_is_one():
    np.testing.assert_array_equal(nonneg_multiplier(GeneratingPolynomial((-1,))), [1.0])


@pytest.mark.parametrize("coeffs", [(0, -1), (0, 0, -1), (0.5, -0.5, -0.5)])
def test_multiplier_makes_product_nonnegative(coeffs):
    poly = GeneratingPolynomial(coeffs)
    product = multiplied_coefficients(poly, nonneg_multiplier(poly))
    assert np.all(product >= -1e-9)


def test_multiplier_rejects_positive_real_zero():
    with pytest.raises(PreconditionError):
        nonneg_multiplier(GeneratingPolynomial((0.5,)))


def test_multiplier_makes_random_products_nonnegative():
    rng = np.random.default_rng(34)
    for _ in range(200):
        pairs = []
        for _ in range(int(rng.integers(1, 4))):
            if rng.random() < 0.3:
                pairs.append((-rng.uniform(0.2, 2.0), int(rng.integers(1, 3))))
            else:
                root = rng.uniform(0.5, 2.0) * cmath.exp(1j * rng.uniform(0.3, math.pi - 0.1))
                pairs.append((root, int(rng.integers(1, 3))))
        zeros = ZeroSet.from_pairs(pairs)
        poly = from_zero_set(zeros)
        multiplier = nonneg_multiplier(poly, zeros)
        assert np.all(multiplier > 0)
        product = multiplied_coefficients(poly, multiplier)
        rounding = np.convolve(np.abs(poly.ascending), multiplier)
        assert np.all(product >= -1e-8 * rounding.max()), pairs



# ---- Small helpers
@pytest.mark.parametrize("s, x, expected", [(1, 5, 1), (3, 2, 6), (5, 3, 35)])
def test_binom_shift(s, x, expected):
    assert binom_shift(s, x) == expected


def test_binom_shift_is_exact_for_large_arguments():
    assert binom_shift(200, 200) == math.comb(399, 200)


def test_grid_witness_examples():
    assert grid_witness([1.0], 3)[1] == pytest.approx(1.0)
    assert grid_witness([0.0, 1.0], 4) == pytest.approx((1.0, 1.0))
    assert grid_witness([1.0, -2.0], 4) == pytest.approx((1.0, 1.0))


def test_grid_witness_constant_bounds_random_polynomials():
    rng = np.random.default_rng(5)
    m, L = 3, 6
    constant = grid_witness_constant(m, L)
    assert constant > 0
    for _ in range(100):
        g = rng.standard_normal(m)
        assert grid_witness(g, L)[1] >= constant * np.max(np.abs(g)) - 1e-12


def test_grid_witness_constant_for_random_degrees():
    rng = np.random.default_rng(35)
    for _ in range(200):
        m = int(rng.integers(1, 6))
        L = int(rng.integers(m, 13))
        g = rng.standard_normal(m)
        y, value = grid_witness(g, L)
        assert y in np.arange(1, L + 1) / L
        assert value >= grid_witness_constant(m, L) * np.max(np.abs(g)) * (1 - 1e-9)



def test_grid_witness_needs_enough_points():
    with pytest.raises(PreconditionError):
        grid_witness([1.0, 2.0, 3.0], 2)
