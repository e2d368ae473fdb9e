"""
Brownian motion in a cone and the AR3 persistence exponent.

For Q(z) = (z - 1)(z - e^(i theta))(z - e^(-i theta)) the impulse response is
h_n = c0 + c1 cos(n theta + phase). The persistence power of the process is
read off the principal Dirichlet eigenvalue lambda(M) of the Laplace-Beltrami
operator on the spherical domain

    M = {x in S^2 : c0 x1 + phi((x2, x3) / sqrt(2)) >= 0}

through the Brownian survival exponent (sqrt(lambda + 1/4) - 1/2) / 2 of the
cone over M. The polar axis of every grid is x1.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import splu
from scipy.special import hyp2f1

from ar_persistence.arproc import impulse_response, modal_decomposition
from ar_persistence.errors import NumericalError, PreconditionError
from ar_persistence.persist import stream
from ar_persistence.polyalg import GeneratingPolynomial, ZeroSet

logger = logging.getLogger("ar_persistence")

# ----------------------    CONSTANTS    ----------------------
DENOMINATOR_CAP = 720
RATIONAL_TOL = 1e-8
MIN_RESOLUTION = (32, 64)
MIN_LEVEL_SET_RESOLUTION = (8, 16)
EIGEN_TOL = 1e-8
EIGEN_MAX_ITER = 10_000
MIN_BOUNDARY_FRACTION = 1e-6
MIN_SIN_THETA = 1e-6
CONE_STREAM = 3
BOUNDARY_MODES = ("fraction", "mask")

LevelFunction = Callable[[np.ndarray], np.ndarray]


# -----------------------------------------------------------------------
# -----------------------    Angles and phi       -----------------------
# -----------------------------------------------------------------------
@dataclass(frozen=True)
class Rationality:
    """theta / 2 pi = p / q in lowest terms, or irrational (p = q = None) beyond the denominator cap."""

    p: int | None
    q: int | None
    cap: int = DENOMINATOR_CAP

    @property
    def rational(self) -> bool:
        return self.q is not None

    def __str__(self) -> str:
        return f"rational({self.p}/{self.q})" if self.rational else f"irrational(cap={self.cap})"


def classify_rationality(theta: float, cap: int = DENOMINATOR_CAP, tol: float = RATIONAL_TOL) -> Rationality:
    """Continued-fraction best approximation of theta / 2 pi with denominator <= cap."""
    ratio = theta / (2.0 * math.pi)
    best = Fraction(ratio).limit_denominator(cap)
    if abs(ratio - best) <= tol:
        return Rationality(best.numerator, best.denominator, cap)
    return Rationality(None, None, cap)


@dataclass(frozen=True)
class PhiSpec:
    """Constants of h_n = c0 + c1 cos(n theta + phase) and the rationality of theta / 2 pi."""

    theta: float
    c0: float
    c1: float
    phase: float
    rationality: Rationality

    def __post_init__(self):
        if self.rationality.rational:
            p, q = self.rationality.p, self.rationality.q
            if math.gcd(p, q) != 1 or q > self.rationality.cap:
                raise PreconditionError(f"Rational classification {p}/{q} is not reduced or exceeds the cap.")

    @classmethod
    def from_fraction(cls, p: int, q: int, cap: int = DENOMINATOR_CAP) -> "PhiSpec":
        """PhiSpec for theta = 2 pi p / q with the rational classification fixed exactly."""
        fraction = Fraction(p, q)
        theta = 2.0 * math.pi * fraction
        return modal_constants_ar3(theta, Rationality(fraction.numerator, fraction.denominator, cap))

    def with_c0(self, c0: float) -> "PhiSpec":
        return PhiSpec(self.theta, c0, self.c1, self.phase, self.rationality)


def _rotated_first_coordinate(t: np.ndarray, angle: np.ndarray) -> np.ndarray:
    # First coordinate of R_angle t, broadcast over trailing angles.
    return np.cos(angle) * t[..., 0:1] - np.sin(angle) * t[..., 1:2]


def phi_K(t: Sequence[float] | np.ndarray, spec: PhiSpec, K: int) -> np.ndarray | float:
    """min over i = 0..K of c1 [R_(i theta + phase) t]_1; angles are evaluated directly."""
    if K < 0:
        raise PreconditionError(f"K must be non-negative, got {K}.")
    t = np.asarray(t, dtype=float)
    angles = np.arange(K + 1) * spec.theta + spec.phase
    value = np.min(spec.c1 * _rotated_first_coordinate(t, angles), axis=-1)
    return float(value) if value.ndim == 0 else value


def phi_limit(t: Sequence[float] | np.ndarray, spec: PhiSpec) -> np.ndarray | float:
    """
    Limit of phi_K as K grows: the minimum over one period for rational
    theta / 2 pi, and -|c1| ||t|| for irrational angles.
    """
    t = np.asarray(t, dtype=float)
    if spec.rationality.rational:
        return phi_K(t, spec, spec.rationality.q - 1)
    value = -abs(spec.c1) * np.linalg.norm(t, axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def ar3_polynomial(theta: float) -> GeneratingPolynomial:
    """(z - 1)(z^2 - 2 cos(theta) z + 1) as recurrence coefficients."""
    s = 1.0 + 2.0 * math.cos(theta)
    return GeneratingPolynomial((s, -s, 1.0))


def modal_constants_ar3(theta: float, rationality: Rationality | None = None, cap: int = DENOMINATOR_CAP) -> PhiSpec:
    """
    Fit h_n = c0 + 2 Re(beta e^(i n theta)) from h_0, h_1, h_2.

    Returns:
        PhiSpec: c0, c1 = 2 |beta| and phase = arg(beta).

    Raises:
        PreconditionError: If theta is outside (0, pi).
        NumericalError: If |sin(theta)| < 1e-6.
    """
    if not 0.0 < theta < math.pi:
        raise PreconditionError(f"theta must lie in (0, pi), got {theta}.")
    if abs(math.sin(theta)) < MIN_SIN_THETA:
        raise NumericalError(f"theta={theta} is too close to 0 or pi for the modal solve.")

    unit = complex(math.cos(theta), math.sin(theta))
    zeros = ZeroSet(((1.0 + 0j, 1), (unit, 1), (unit.conjugate(), 1)), exact=True)
    h = impulse_response(ar3_polynomial(theta), 2).h
    decomposition = modal_decomposition(zeros, h)
    betas = {root: values[0] for root, values in decomposition.terms}
    c0 = betas[1.0 + 0j].real
    beta = betas[unit]
    rationality = classify_rationality(theta, cap) if rationality is None else rationality
    return PhiSpec(
        theta=theta, c0=c0, c1=2.0 * abs(beta), phase=math.atan2(beta.imag, beta.real), rationality=rationality
    )


# -----------------------------------------------------------------------
# -----------------------      Spherical grid      ----------------------
# -----------------------------------------------------------------------
def _check_resolution(resolution: tuple[int, int], minimum: tuple[int, int]) -> tuple[int, int]:
    n_polar, n_azimuth = (int(r) for r in resolution)
    if n_polar < minimum[0] or n_azimuth < minimum[1]:
        raise PreconditionError(f"Resolution {n_polar}x{n_azimuth} is below the minimum {minimum[0]}x{minimum[1]}.")
    return n_polar, n_azimuth


@dataclass(frozen=True, eq=False)
class SphericalDomain:
    """
    Cell-centred latitude-longitude discretization of a domain on S^2.

    Cells are the rings theta_i = i pi / n_polar, i = 1..n_polar-1, each cut
    into n_azimuth cells, followed by the north (x1 = 1) and south (x1 = -1)
    pole caps of radius pi / (2 n_polar). A cell is inside when the level
    function is >= 0 at its centre.
    """

    n_polar: int
    n_azimuth: int
    level: LevelFunction
    values: np.ndarray
    boundary: str = "fraction"
    params: dict = field(default_factory=dict)

    @classmethod
    def from_level_set(
        cls,
        level: LevelFunction,
        resolution: tuple[int, int],
        boundary: str = "fraction",
        params: dict | None = None,
        minimum: tuple[int, int] = MIN_LEVEL_SET_RESOLUTION,
    ) -> "SphericalDomain":
        n_polar, n_azimuth = _check_resolution(resolution, minimum)
        if boundary not in BOUNDARY_MODES:
            raise PreconditionError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary}.")
        values = np.asarray(level(cell_centres(n_polar, n_azimuth)), dtype=float)
        domain = cls(n_polar, n_azimuth, level, values, boundary, dict(params or {}))
        inside = domain.inside
        if not inside.any() or inside.all():
            raise PreconditionError("Degenerate domain: the mask is empty or covers the whole sphere.")
        return domain

    @property
    def inside(self) -> np.ndarray:
        return self.values >= 0

    @property
    def spacing(self) -> tuple[float, float]:
        return math.pi / self.n_polar, 2.0 * math.pi / self.n_azimuth

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership of R^3 points in the cone over the domain."""
        points = np.asarray(points, dtype=float)
        norms = np.linalg.norm(points, axis=-1, keepdims=True)
        return np.asarray(self.level(points / np.where(norms == 0, 1.0, norms))) >= 0

    def cell_areas(self) -> np.ndarray:
        dtheta, dphi = self.spacing
        theta = np.arange(1, self.n_polar) * dtheta
        ring = dphi * (np.cos(theta - dtheta / 2) - np.cos(theta + dtheta / 2))
        pole = 2.0 * math.pi * (1.0 - math.cos(dtheta / 2))
        return np.concatenate([np.repeat(ring, self.n_azimuth), [pole, pole]])

    def area(self) -> float:
        return float(np.sum(self.cell_areas()[self.inside]))

    def deepest_point(self) -> np.ndarray:
        """Cell centre with the largest level value."""
        return cell_centres(self.n_polar, self.n_azimuth)[int(np.argmax(self.values))]

    def to_frame(self) -> pd.DataFrame:
        """Mask rows: polar index 0 is the north pole, n_polar the south pole."""
        rings = np.repeat(np.arange(1, self.n_polar), self.n_azimuth)
        azimuth = np.tile(np.arange(self.n_azimuth), self.n_polar - 1)
        return pd.DataFrame(
            {
                "polar_index": np.concatenate([rings, [0, self.n_polar]]).astype("int64"),
                "azimuth_index": np.concatenate([azimuth, [0, 0]]).astype("int64"),
                "inside": self.inside,
            }
        )


def cell_centres(n_polar: int, n_azimuth: int) -> np.ndarray:
    """Unit vectors of the ring cell centres, then north and south pole."""
    dtheta, dphi = math.pi / n_polar, 2.0 * math.pi / n_azimuth
    theta = np.arange(1, n_polar) * dtheta
    phi = (np.arange(n_azimuth) + 0.5) * dphi
    TH, PH = np.meshgrid(theta, phi, indexing="ij")
    ring = np.stack([np.cos(TH), np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH)], axis=-1).reshape(-1, 3)
    return np.vstack([ring, [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]])


def _faces(n_polar: int, n_azimuth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell pairs sharing a face and the face weight (face length / centre distance)."""
    dtheta, dphi = math.pi / n_polar, 2.0 * math.pi / n_azimuth
    n_rings = n_polar - 1
    index = np.arange(n_rings * n_azimuth).reshape(n_rings, n_azimuth)
    north, south = n_rings * n_azimuth, n_rings * n_azimuth + 1
    theta = np.arange(1, n_polar) * dtheta

    # Azimuthal neighbours, periodic in the azimuth.
    first = [index.ravel()]
    second = [np.roll(index, -1, axis=1).ravel()]
    weight = [np.repeat(dtheta / (np.sin(theta) * dphi), n_azimuth)]

    # Polar neighbours across theta_(i + 1/2).
    if n_rings > 1:
        theta_half = theta[:-1] + dtheta / 2
        first.append(index[:-1].ravel())
        second.append(index[1:].ravel())
        weight.append(np.repeat(np.sin(theta_half) * dphi / dtheta, n_azimuth))

    # Pole caps couple to every cell of the adjacent ring.
    pole_weight = np.full(n_azimuth, math.sin(dtheta / 2) * dphi / dtheta)
    first += [np.full(n_azimuth, north), np.full(n_azimuth, south)]
    second += [index[0], index[-1]]
    weight += [pole_weight, pole_weight]

    return np.concatenate(first), np.concatenate(second), np.concatenate(weight)


def dirichlet_operator(domain: SphericalDomain) -> tuple[sparse.csc_matrix, np.ndarray, np.ndarray]:
    """
    Stiffness matrix of -Laplace-Beltrami restricted to the inside cells, with
    zero boundary values imposed on faces that leave the domain.

    In "fraction" mode the boundary sits where the level function, linearly
    interpolated between the two centres, changes sign; in "mask" mode it sits
    at the outside centre. Both keep the matrix symmetric.

    Returns:
        Stiffness matrix, diagonal mass vector and the inside cell indices.
    """
    first, second, weight = _faces(domain.n_polar, domain.n_azimuth)
    values, inside = domain.values, domain.inside
    cells = np.flatnonzero(inside)
    position = np.full(values.shape[0], -1)
    position[cells] = np.arange(cells.size)

    both = inside[first] & inside[second]
    a, b, w = position[first[both]], position[second[both]], weight[both]
    rows = [a, b, a, b]
    cols = [b, a, a, b]
    data = [-w, -w, w, w]

    for own, other in ((first, second), (second, first)):
        crossing = inside[own] & ~inside[other]
        f_in, f_out = values[own[crossing]], values[other[crossing]]
        if domain.boundary == "fraction":
            distance = np.clip(f_in / (f_in - f_out), MIN_BOUNDARY_FRACTION, 1.0)
        else:
            distance = np.ones_like(f_in)
        p = position[own[crossing]]
        rows.append(p)
        cols.append(p)
        data.append(weight[crossing] / distance)

    n = cells.size
    stiffness = sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsc()
    return stiffness, domain.cell_areas()[cells], cells


# -----------------------------------------------------------------------
# -----------------------      Eigen solver        ----------------------
# -----------------------------------------------------------------------
@dataclass(frozen=True)
class EigenResult:
    """
    Principal Dirichlet eigenvalue of a spherical domain.

    `beta` is sqrt(lambda + 1/4) / 2; `persistence_exponent`
    (sqrt(lambda + 1/4) - 1/2) / 2 is the tail exponent of Brownian survival
    in the cone over the domain (1/2 for the half-space).
    """

    lam: float
    resolution: tuple[int, int]
    residual: float
    iterations: int
    boundary: str = "fraction"
    theta: float | None = None

    @property
    def beta(self) -> float:
        return math.sqrt(self.lam + 0.25) / 2.0

    @property
    def persistence_exponent(self) -> float:
        return (math.sqrt(self.lam + 0.25) - 0.5) / 2.0

    def to_json(self) -> dict:
        report = {
            "lambda": self.lam,
            "beta": self.beta,
            "persistence_exponent": self.persistence_exponent,
            "resolution": list(self.resolution),
            "residual": self.residual,
            "iterations": self.iterations,
            "boundary": self.boundary,
        }
        if self.theta is not None:
            report["theta"] = self.theta
        return report


def principal_eigenvalue(
    domain: SphericalDomain,
    tol: float = EIGEN_TOL,
    max_iter: int = EIGEN_MAX_ITER,
) -> EigenResult:
    """
    Smallest lambda with K u = lambda M u by inverse power iteration (shift 0).

    Iteration stops when the Rayleigh quotient changes by at most `tol`
    relative. The converged vector must keep one sign, as the principal
    eigenfunction does.

    Raises:
        NumericalError: If the iteration does not converge within `max_iter`.
    """
    stiffness, mass, cells = dirichlet_operator(domain)
    logger.debug(f"Dirichlet operator on {cells.size} cells at {domain.n_polar}x{domain.n_azimuth}")
    factor = splu(stiffness)

    u = np.ones(cells.size)
    previous = math.inf
    lam = math.inf
    for iteration in range(1, max_iter + 1):
        v = factor.solve(mass * u)
        u = v / math.sqrt(float(v @ (mass * v)))
        lam = float(u @ (stiffness @ u))
        if abs(lam - previous) <= tol * abs(lam):
            break
        previous = lam
    else:
        residual = float(np.linalg.norm(stiffness @ u - lam * mass * u) / np.linalg.norm(lam * mass * u))
        raise NumericalError(
            f"Inverse iteration did not converge in {max_iter} iterations (residual {residual:.3e}).",
            residual=residual,
        )

    residual = float(np.linalg.norm(stiffness @ u - lam * mass * u) / np.linalg.norm(lam * mass * u))
    if u.min() * u.max() < 0 and min(abs(u.min()), abs(u.max())) > 1e-6 * np.abs(u).max():
        raise NumericalError(
            "Inverse iteration converged to a sign-changing vector; the domain may be disconnected.",
            residual=residual,
        )
    logger.info(f"lambda={lam:.6f} after {iteration} iterations (residual {residual:.2e})")
    return EigenResult(
        lam=lam,
        resolution=(domain.n_polar, domain.n_azimuth),
        residual=residual,
        iterations=iteration,
        boundary=domain.boundary,
    )


def _legendre(nu: float, x: float) -> float:
    # P_nu(x) for real degree nu.
    return float(hyp2f1(-nu, nu + 1.0, 1.0, (1.0 - x) / 2.0))


def cap_eigenvalue(alpha: float) -> float:
    """
    Dirichlet eigenvalue nu (nu + 1) of the cap {polar angle <= alpha}, nu the
    smallest positive degree with P_nu(cos alpha) = 0.
    """
    if not 0.0 < alpha < math.pi:
        raise PreconditionError(f"Cap angle must lie in (0, pi), got {alpha}.")
    x = math.cos(alpha)
    step = 0.01
    lower, upper = 0.0, step
    while _legendre(upper, x) > 0:
        lower, upper = upper, upper + step
        if upper > 1e4:
            raise NumericalError(f"No Legendre zero found for cap angle {alpha}.")
    nu = brentq(lambda n: _legendre(n, x), lower, upper, xtol=1e-14)
    return nu * (nu + 1.0)


# -----------------------------------------------------------------------
# -----------------------       Domains            ----------------------
# -----------------------------------------------------------------------
def ar3_level_function(spec: PhiSpec, epsilon: float = 0.0) -> LevelFunction:
    """c0 (1 + epsilon) x1 + phi((x2, x3) / sqrt(2))."""

    def level(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return spec.c0 * (1.0 + epsilon) * x[..., 0] + phi_limit(x[..., 1:3] / math.sqrt(2.0), spec)

    return level


def build_domain(
    spec: PhiSpec,
    resolution: tuple[int, int],
    epsilon: float = 0.0,
    boundary: str = "fraction",
) -> SphericalDomain:
    """
    The AR3 domain M, or M_epsilon with c0 replaced by c0 (1 + epsilon).

    Since phi <= 0, M is contained in M_epsilon for epsilon > 0.
    """
    params = {"theta": spec.theta, "c0": spec.c0, "c1": spec.c1, "phase": spec.phase, "epsilon": epsilon}
    return SphericalDomain.from_level_set(
        ar3_level_function(spec, epsilon), resolution, boundary, params, minimum=MIN_RESOLUTION
    )


def cap_domain(alpha: float, resolution: tuple[int, int], boundary: str = "fraction") -> SphericalDomain:
    """{x1 >= cos(alpha)}; alpha = pi / 2 is the hemisphere."""
    threshold = math.cos(alpha)
    return SphericalDomain.from_level_set(
        lambda x: np.asarray(x)[..., 0] - threshold, resolution, boundary, {"alpha": alpha}
    )


def quarter_space_domain(resolution: tuple[int, int], boundary: str = "fraction") -> SphericalDomain:
    """{x1 >= 0 and x2 >= 0}."""
    return SphericalDomain.from_level_set(
        lambda x: np.minimum(np.asarray(x)[..., 0], np.asarray(x)[..., 1]), resolution, boundary, {"quarter": True}
    )


def rotate_about_axis(domain: SphericalDomain, angle: float) -> SphericalDomain:
    """The domain rotated by `angle` about the x1 axis, re-discretized on the same grid."""
    c, s = math.cos(angle), math.sin(angle)
    inner = domain.level

    def level(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        back = np.stack([x[..., 0], c * x[..., 1] + s * x[..., 2], -s * x[..., 1] + c * x[..., 2]], axis=-1)
        return inner(back)

    params = dict(domain.params, rotation=angle)
    return SphericalDomain.from_level_set(level, (domain.n_polar, domain.n_azimuth), domain.boundary, params)


# -----------------------------------------------------------------------
# -----------------------   AR3 exponent and sweep  ---------------------
# -----------------------------------------------------------------------
def exponent_ar3(
    theta: float,
    resolution: tuple[int, int],
    rationality: Rationality | None = None,
    cap: int = DENOMINATOR_CAP,
    boundary: str = "fraction",
) -> EigenResult:
    """modal_constants_ar3, build_domain and principal_eigenvalue in sequence."""
    spec = modal_constants_ar3(theta, rationality, cap)
    logger.info(
        f"AR3 theta={theta:.10g} ({spec.rationality}): c0={spec.c0:.6g}, c1={spec.c1:.6g}, phase={spec.phase:.6g}"
    )
    result = principal_eigenvalue(build_domain(spec, resolution, boundary=boundary))
    return EigenResult(
        lam=result.lam,
        resolution=result.resolution,
        residual=result.residual,
        iterations=result.iterations,
        boundary=result.boundary,
        theta=theta,
    )


@dataclass(frozen=True)
class SweepRow:
    theta: float
    offset: float
    rational: bool
    beta: float
    persistence_exponent: float
    gap: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]

    @property
    def min_gap(self) -> float:
        return min(row.gap for row in self.rows if row.offset != 0.0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows])


def discontinuity_sweep(
    theta: float,
    offsets: Sequence[float],
    resolution: tuple[int, int],
    rationality: Rationality | None = None,
    cap: int = DENOMINATOR_CAP,
    boundary: str = "fraction",
) -> SweepResult:
    """
    Exponents at theta and at theta + offset for each offset.

    The gap column is persistence_exponent(theta + offset) minus
    persistence_exponent(theta).

    Raises:
        PreconditionError: If an offset is zero or theta + offset is
            classified rational.
    """
    offsets = [float(o) for o in offsets]
    if not offsets or any(o == 0.0 for o in offsets):
        raise PreconditionError("Offsets must be non-empty and non-zero.")
    shifted = []
    for offset in offsets:
        rationality_shifted = classify_rationality(theta + offset, cap)
        if rationality_shifted.rational:
            raise PreconditionError(f"theta + {offset} is classified {rationality_shifted}; choose another offset.")
        shifted.append((offset, rationality_shifted))

    base = exponent_ar3(theta, resolution, rationality, cap, boundary)
    base_rational = (rationality or classify_rationality(theta, cap)).rational
    rows = [SweepRow(theta, 0.0, base_rational, base.beta, base.persistence_exponent, 0.0)]
    for offset, rationality_shifted in shifted:
        result = exponent_ar3(theta + offset, resolution, rationality_shifted, cap, boundary)
        gap = result.persistence_exponent - base.persistence_exponent
        rows.append(SweepRow(theta + offset, offset, False, result.beta, result.persistence_exponent, gap))
        logger.info(f"theta'={theta + offset:.10g}: exponent {result.persistence_exponent:.5f}, gap {gap:+.5f}")
    return SweepResult(tuple(rows))


# -----------------------------------------------------------------------
# -----------------------   Brownian survival MC    ---------------------
# -----------------------------------------------------------------------
@dataclass(frozen=True)
class ConeSurvivalFit:
    exponent: float
    intercept: float
    r_squared: float
    times: tuple[float, ...]
    survival: tuple[float, ...]
    n_paths: int


def cone_survival_mc(
    domain: SphericalDomain,
    horizon: float,
    n_paths: int,
    seed: int | None = 0,
    dt: float = 1e-3,
    x0: Sequence[float] = (1.0, 0.0, 0.0),
    n_times: int = 5,
    chunk_size: int = 2048,
    threads: int | None = None,
) -> ConeSurvivalFit:
    """
    Survival of 3-D Brownian motion in the cone over `domain`.

    Paths take Euler steps of size dt and are killed at the first step
    outside the cone. Survival is recorded at horizon 2^-k, k < n_times, and
    fitted by a power law; the exponent should match persistence_exponent of
    the domain's eigenvalue.

    Raises:
        PreconditionError: If x0 is not strictly inside the cone.
    """
    x0 = np.asarray(x0, dtype=float)
    norm = np.linalg.norm(x0)
    if norm == 0 or float(domain.level(x0 / norm)) <= 0:
        raise PreconditionError(f"Start point {x0.tolist()} must lie strictly inside the cone.")
    if horizon <= 0 or dt <= 0 or n_paths < 1:
        raise PreconditionError("horizon, dt and n_paths must be positive.")

    n_steps = int(math.ceil(horizon / dt))
    checkpoints = sorted({c for c in (int(round(n_steps * 2.0 ** (-k))) for k in range(n_times)) if c >= 1})
    if len(checkpoints) < 2:
        raise PreconditionError(f"horizon={horizon} and dt={dt} leave fewer than two distinct survival times.")
    slot = {step: k for k, step in enumerate(checkpoints)}
    sizes = [min(chunk_size, n_paths - start) for start in range(0, n_paths, chunk_size)]
    scale = math.sqrt(dt)

    def run_chunk(index: int) -> np.ndarray:
        generator = stream(seed, CONE_STREAM, index)
        position = np.tile(x0, (sizes[index], 1))
        alive = np.ones(sizes[index], dtype=bool)
        counts = np.zeros(len(checkpoints), dtype=np.int64)
        for step in range(1, n_steps + 1):
            position += scale * generator.standard_normal(position.shape)
            alive &= domain.contains(position)
            if step in slot:
                counts[slot[step]] = np.count_nonzero(alive)
            if not alive.any():
                break
        return counts

    with ThreadPoolExecutor(max_workers=threads) as executor:
        counts = np.sum(list(executor.map(run_chunk, range(len(sizes)))), axis=0)

    times = np.array(checkpoints) * dt
    survival = counts / n_paths
    usable = survival > 0
    if usable.sum() < 2:
        raise NumericalError("Too few surviving paths to fit a survival exponent; increase n_paths.")
    sigma = np.sqrt((1.0 - survival[usable]) / (n_paths * survival[usable]))
    x, y = np.log(times[usable]), np.log(survival[usable])
    w = 1.0 / np.maximum(sigma, 1e-12)
    slope, intercept = np.polyfit(x, y, 1, w=w)
    mean = np.sum(w**2 * y) / np.sum(w**2)
    total = np.sum(w**2 * (y - mean) ** 2)
    residual = np.sum(w**2 * (y - slope * x - intercept) ** 2)
    r_squared = 1.0 if total == 0 else float(np.clip(1.0 - residual / total, 0.0, 1.0))
    logger.info(f"Cone survival exponent {-slope:.4f} from {n_paths} paths (r2 {r_squared:.4f})")
    return ConeSurvivalFit(
        exponent=float(-slope),
        intercept=float(intercept),
        r_squared=r_squared,
        times=tuple(float(t) for t in times),
        survival=tuple(float(s) for s in survival),
        n_paths=n_paths,
    )
