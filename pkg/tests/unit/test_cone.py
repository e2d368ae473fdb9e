import math

import numpy as np
import pytest

from ar_persistence.arproc import impulse_response
from ar_persistence.cone import (
    EigenResult,
    PhiSpec,
    Rationality,
    ar3_polynomial,
    build_domain,
    cap_domain,
    cap_eigenvalue,
    cell_centres,
    classify_rationality,
    cone_survival_mc,
    dirichlet_operator,
    discontinuity_sweep,
    exponent_ar3,
    modal_constants_ar3,
    phi_K,
    phi_limit,
    principal_eigenvalue,
    quarter_space_domain,
    rotate_about_axis,
)
from ar_persistence.errors import PreconditionError

# ----------------------------------------   CONSTANTS    -------------------------------------
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
COARSE = (32, 64)
MEDIUM = (64, 128)


# -------------------------------------   HELPER FUNCTIONS  -----------------------------------
def spec(theta, c1=1.0, phase=0.0, c0=1.0, rationality=None):
    return PhiSpec(theta, c0, c1, phase, rationality or classify_rationality(theta))


# ----------------------------------------------------------------------------------
# ---------------------------------    T E S T S   ---------------------------------
# ----------------------------------------------------------------------------------
# ---- Rationality and phi
def test_rational_angles():
    rationality = classify_rationality(math.pi / 2)
    assert (rationality.p, rationality.q) == (1, 4)
    assert classify_rationality(2 * math.pi / 3).q == 3
    assert classify_rationality(1.5707963).q == 4


def test_irrational_angles():
    assert not classify_rationality(GOLDEN_ANGLE).rational
    assert not classify_rationality(math.pi / 2 + 1e-2 * math.sqrt(2)).rational


def test_rationality_respects_cap():
    assert not classify_rationality(2 * math.pi / 7, cap=5).rational


def test_phi_quarter_turn_is_max_norm():
    quarter = spec(math.pi / 2)
    rng = np.random.default_rng(0)
    for t in rng.standard_normal((20, 2)):
        assert phi_K(t, quarter, 3) == pytest.approx(-np.max(np.abs(t)))
        assert phi_K(t, quarter, 10) == pytest.approx(-np.max(np.abs(t)))


def test_phi_single_term():
    assert phi_K([0.7, 0.2], spec(1.0, c1=2.0), 0) == pytest.approx(1.4)


def test_phi_is_nonincreasing_in_K():
    irrational = spec(GOLDEN_ANGLE)
    t = np.array([0.3, -0.8])
    values = [phi_K(t, irrational, K) for K in range(30)]
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


def test_phi_is_vectorized():
    points = np.random.default_rng(1).standard_normal((4, 5, 2))
    values = phi_K(points, spec(math.pi / 2), 3)
    assert values.shape == (4, 5)


def test_phi_limit_examples():
    assert phi_limit([1.0, 0.0], spec(GOLDEN_ANGLE)) == pytest.approx(-1.0)
    assert phi_limit([1.0, 0.0], spec(math.pi / 2)) == pytest.approx(-1.0)
    assert phi_limit([1.0, 0.0], spec(2 * math.pi / 3)) == pytest.approx(-0.5)


def test_phi_limit_irrational_scales_with_c1():
    assert phi_limit([3.0, 4.0], spec(GOLDEN_ANGLE, c1=-0.5)) == pytest.approx(-2.5)


def test_phi_spec_rejects_unreduced_fraction():
    with pytest.raises(PreconditionError):
        PhiSpec(math.pi / 2, 0.5, 1.0, 0.0, Rationality(2, 8))


# ---- Modal constants
def test_modal_constants_quarter_turn():
    quarter = modal_constants_ar3(math.pi / 2)
    assert quarter.c0 == pytest.approx(0.5)
    assert quarter.c1 == pytest.approx(1 / math.sqrt(2))
    assert quarter.phase == pytest.approx(-math.pi / 4)
    assert (quarter.rationality.p, quarter.rationality.q) == (1, 4)


@pytest.mark.parametrize("theta", np.linspace(0.2, 3.0, 10))
def test_modal_constants_reproduce_impulse_response(theta):
    constants = modal_constants_ar3(theta)
    assert constants.c0 == pytest.approx(1.0 / (2.0 * (1.0 - math.cos(theta))))
    n = np.arange(51)
    h = impulse_response(ar3_polynomial(theta), 50).h
    np.testing.assert_allclose(constants.c0 + constants.c1 * np.cos(n * theta + constants.phase), h, atol=1e-8)


def test_modal_constants_from_exact_fraction():
    constants = PhiSpec.from_fraction(1, 3)
    assert constants.theta == pytest.approx(2 * math.pi / 3)
    assert constants.rationality.q == 3


def test_modal_constants_reject_angle_outside_range():
    with pytest.raises(PreconditionError):
        modal_constants_ar3(0.0)
    with pytest.raises(PreconditionError):
        modal_constants_ar3(math.pi)


# ---- Domains
def test_flat_phi_gives_hemisphere():
    flat = PhiSpec(math.pi / 2, 1.0, 0.0, 0.0, Rationality(1, 4))
    domain = build_domain(flat, COARSE)
    np.testing.assert_array_equal(domain.inside, cell_centres(*COARSE)[:, 0] >= 0)


def test_domain_area_grows_with_c0():
    irrational = modal_constants_ar3(GOLDEN_ANGLE)
    areas = [build_domain(irrational.with_c0(c0), MEDIUM).area() for c0 in (0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a for a, b in zip(areas, areas[1:]))
    assert areas[-1] < 4 * math.pi


@pytest.mark.parametrize("epsilon", [0.1, 0.01])
def test_enlarged_domain_contains_domain(epsilon):
    quarter = modal_constants_ar3(math.pi / 2)
    base = build_domain(quarter, MEDIUM)
    enlarged = build_domain(quarter, MEDIUM, epsilon=epsilon)
    assert np.all(~base.inside | enlarged.inside)


def test_domain_rejects_low_resolution():
    with pytest.raises(PreconditionError):
        build_domain(modal_constants_ar3(math.pi / 2), (16, 32))


def test_domain_rejects_unknown_boundary_mode():
    with pytest.raises(PreconditionError):
        cap_domain(math.pi / 2, COARSE, boundary="exact")


def test_mask_frame_layout():
    domain = cap_domain(math.pi / 2, (8, 16))
    frame = domain.to_frame()
    assert list(frame.columns) == ["polar_index", "azimuth_index", "inside"]
    assert len(frame) == 7 * 16 + 2
    north = frame[frame["polar_index"] == 0]
    assert north["inside"].tolist() == [True]


def test_cell_areas_cover_the_sphere():
    domain = cap_domain(math.pi / 3, (16, 32))
    assert domain.cell_areas().sum() == pytest.approx(4 * math.pi)


def test_stiffness_is_symmetric():
    stiffness, mass, cells = dirichlet_operator(build_domain(modal_constants_ar3(math.pi / 2), COARSE))
    assert abs(stiffness - stiffness.T).max() < 1e-12
    assert np.all(mass > 0)
    assert stiffness.shape == (cells.size, cells.size)


# ---- Eigenvalues
def test_eigen_result_exponents():
    result = EigenResult(lam=2.0, resolution=COARSE, residual=0.0, iterations=1)
    assert result.beta == pytest.approx(0.75)
    assert result.persistence_exponent == pytest.approx(0.5)


def test_cap_eigenvalue_hemisphere():
    assert cap_eigenvalue(math.pi / 2) == pytest.approx(2.0, rel=1e-8)


def test_cap_eigenvalue_decreases_with_angle():
    assert cap_eigenvalue(math.pi / 3) > cap_eigenvalue(math.pi / 2) > cap_eigenvalue(2 * math.pi / 3)


def test_hemisphere_eigenvalue_coarse():
    result = principal_eigenvalue(cap_domain(math.pi / 2, MEDIUM))
    assert result.lam == pytest.approx(2.0, rel=0.05)
    assert result.residual < 1e-2


def test_nested_masks_give_ordered_eigenvalues():
    small = principal_eigenvalue(cap_domain(math.pi / 3, COARSE, boundary="mask"))
    large = principal_eigenvalue(cap_domain(math.pi / 2, COARSE, boundary="mask"))
    assert small.lam >= large.lam


def test_enlarged_domain_eigenvalues_increase_as_epsilon_shrinks():
    quarter = modal_constants_ar3(math.pi / 2)
    epsilons = (0.2, 0.1, 0.05, 0.02, 0.0)
    lams = [principal_eigenvalue(build_domain(quarter, MEDIUM, epsilon=e, boundary="mask")).lam for e in epsilons]
    assert all(b >= a * (1 - 1e-6) for a, b in zip(lams, lams[1:]))
    assert lams[-1] - lams[-2] <= lams[-1] - lams[0]



def test_rotation_about_axis_keeps_eigenvalue():
    domain = build_domain(modal_constants_ar3(math.pi / 2), COARSE)
    shift = 3 * 2 * math.pi / COARSE[1]
    original = principal_eigenvalue(domain)
    rotated = principal_eigenvalue(rotate_about_axis(domain, shift))
    assert rotated.lam == pytest.approx(original.lam, rel=1e-6)


def test_exponent_ar3_is_finite_and_positive():
    result = exponent_ar3(math.pi / 2, COARSE)
    assert math.isfinite(result.beta) and result.beta > 0
    assert result.persistence_exponent > 0
    assert result.theta == pytest.approx(math.pi / 2)


@pytest.mark.slow
def test_hemisphere_eigenvalue_fine():
    result = principal_eigenvalue(cap_domain(math.pi / 2, (256, 512)))
    assert result.lam == pytest.approx(2.0, rel=0.02)
    assert result.beta == pytest.approx(0.75, rel=0.01)


@pytest.mark.slow
def test_cap_eigenvalue_matches_legendre_oracle():
    alpha = 2 * math.pi / 3
    result = principal_eigenvalue(cap_domain(alpha, (128, 256)))
    assert result.lam == pytest.approx(cap_eigenvalue(alpha), rel=0.02)


@pytest.mark.slow
def test_quarter_space_eigenvalue():
    result = principal_eigenvalue(quarter_space_domain((128, 256)))
    assert result.lam == pytest.approx(6.0, rel=0.03)
    assert result.persistence_exponent == pytest.approx(1.0, abs=0.02)


@pytest.mark.slow
def test_exponent_ar3_mesh_refinement():
    coarse = exponent_ar3(math.pi / 2, (128, 256))
    fine = exponent_ar3(math.pi / 2, (256, 512))
    assert fine.beta == pytest.approx(coarse.beta, rel=0.02)


# ---- Discontinuity sweep
def test_sweep_rejects_zero_offset():
    with pytest.raises(PreconditionError):
        discontinuity_sweep(math.pi / 2, [0.0], COARSE)


def test_sweep_rejects_rational_shifted_angle():
    with pytest.raises(PreconditionError):
        discontinuity_sweep(math.pi / 2, [math.pi / 6], COARSE)


@pytest.mark.slow
def test_sweep_gap_is_positive_at_rational_angle():
    offsets = [s * 1e-2 * math.sqrt(2) for s in (1, -1)] + [s * 1e-3 * math.sqrt(2) for s in (1, -1)]
    result = discontinuity_sweep(math.pi / 2, offsets, MEDIUM)
    assert result.min_gap > 0
    frame = result.to_frame()
    assert list(frame.columns) == ["theta", "offset", "rational", "beta", "persistence_exponent", "gap"]
    assert frame["rational"].tolist() == [True, False, False, False, False]


@pytest.mark.slow
def test_sweep_is_continuous_at_irrational_angle():
    offsets = [1e-3 * math.sqrt(2), -1e-3 * math.sqrt(2)]
    result = discontinuity_sweep(GOLDEN_ANGLE, offsets, MEDIUM)
    betas = [row.beta for row in result.rows]
    assert (max(betas) - min(betas)) / min(betas) < 0.03


# ---- Brownian survival in cones
def test_survival_needs_start_inside():
    with pytest.raises(PreconditionError):
        cone_survival_mc(cap_domain(math.pi / 2, COARSE), 1.0, 10, seed=0, x0=(-1.0, 0.0, 0.0))


def test_survival_is_reproducible():
    domain = cap_domain(math.pi / 2, COARSE)
    first = cone_survival_mc(domain, 4.0, 500, seed=3, dt=0.05, n_times=3, threads=1, chunk_size=100)
    second = cone_survival_mc(domain, 4.0, 500, seed=3, dt=0.05, n_times=3, threads=4, chunk_size=100)
    assert first.survival == second.survival
    assert first.times == second.times
    assert len(first.times) == 3


def test_survival_short_horizon_has_distinct_times():
    fit = cone_survival_mc(cap_domain(math.pi / 2, COARSE), 0.01, 200, seed=0, dt=1e-3)
    assert len(fit.times) == len(fit.survival) == 4
    assert all(b > a for a, b in zip(fit.times, fit.times[1:]))
    assert all(b <= a for a, b in zip(fit.survival, fit.survival[1:]))


def test_survival_rejects_horizon_of_one_step():
    with pytest.raises(PreconditionError):
        cone_survival_mc(cap_domain(math.pi / 2, COARSE), 1e-3, 200, seed=0, dt=1e-3)


def test_deepest_point_is_inside():
    domain = build_domain(modal_constants_ar3(math.pi / 2), COARSE)
    point = domain.deepest_point()
    assert np.linalg.norm(point) == pytest.approx(1.0)
    assert float(domain.level(point)) == pytest.approx(float(domain.values.max()))
    assert float(domain.level(point)) > 0


@pytest.mark.slow
def test_half_space_survival_exponent():
    fit = cone_survival_mc(cap_domain(math.pi / 2, COARSE), 64.0, 4000, seed=5, dt=0.01)
    assert fit.exponent == pytest.approx(0.5, abs=0.06)


@pytest.mark.slow
def test_quarter_space_survival_exponent():
    fit = cone_survival_mc(quarter_space_domain(COARSE), 64.0, 8000, seed=6, dt=0.01, x0=(1.0, 1.0, 0.0))
    assert fit.exponent == pytest.approx(1.0, abs=0.12)
