"""
AR process machinery.

The process is X_n = sum_j a_j X_(n-j) + xi_n with zero initial conditions,
where xi_0 drives X_0. Paths are advanced on an L-dimensional Markov state
holding the last L values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import linalg, signal

from ar_persistence.errors import NumericalError, PreconditionError
from ar_persistence.polyalg import GeneratingPolynomial, ZeroSet, binom_shift

logger = logging.getLogger("ar_persistence")

# ----------------------    CONSTANTS    ----------------------
RESCALE_THRESHOLD = 1e150
MODAL_CONDITION_LIMIT = 1e12
MODAL_IMAG_RESIDUE = 1e-9


# -----------------------------------------------------------------------
# -----------------------      Domain types       -----------------------
# -----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class PathSample:
    """
    One simulated path X_0..X_(N-1).

    `saturated` is set when the true values left the float range; such
    entries are +/-inf with the correct sign.
    """

    xs: np.ndarray
    seed: int | None
    poly: GeneratingPolynomial
    saturated: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"n": np.arange(len(self.xs), dtype="int64"), "value": self.xs})


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    h: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"n": np.arange(len(self.h), dtype="int64"), "value": self.h})


@dataclass(frozen=True, eq=False)
class ModalDecomposition:
    """
    Coefficients beta_(lambda, j) of q_l = sum_lambda sum_j beta_(lambda, j) lambda^l l^j.

    Complex betas are kept as solved; amplitude/phase pairs are derived on
    demand by `amplitude_phase`.
    """

    terms: tuple[tuple[complex, tuple[complex, ...]], ...]
    condition: float = 1.0

    def amplitude_phase(self) -> list[tuple[complex, int, float, float]]:
        """
        Real form of the decomposition.

        Every non-real root with positive imaginary part and its conjugate
        contribute 2 |beta| l^j cos(l arg(lambda) + arg(beta)) |lambda|^l; real
        roots contribute beta l^j lambda^l, reported as amplitude |beta| and
        phase 0 or pi.

        Returns:
            Tuples (root, j, amplitude, phase) for roots with Im >= 0.
        """
        rows = []
        for root, betas in self.terms:
            if root.imag < 0:
                continue
            factor = 1.0 if root.imag == 0 else 2.0
            for j, beta in enumerate(betas):
                rows.append((root, j, factor * abs(beta), float(np.angle(beta))))
        return rows


@dataclass(frozen=True, eq=False)
class RotatedComponent:
    """Pairs (T_(n,k), T'_(n,k)) for n = 0..N, with T_(0,k) = 0."""

    theta: float
    phase: float
    k: int
    t: np.ndarray
    t_prime: np.ndarray

    @property
    def states(self) -> np.ndarray:
        return np.column_stack([self.t, self.t_prime])


# -----------------------------------------------------------------------
# -----------------------       Recurrence         ----------------------
# -----------------------------------------------------------------------
@dataclass
class PathState:
    """
    Batched Markov state of the recurrence.

    The true last-L values of path p are window[p] * 2**exponent[p]; the
    exponent grows only for explosive paths so the window stays finite.
    """

    window: np.ndarray
    exponent: np.ndarray = field(default=None)

    def __post_init__(self):
        self.window = np.atleast_2d(np.asarray(self.window, dtype=float))
        if self.exponent is None:
            self.exponent = np.zeros(self.window.shape[0], dtype=np.int64)

    @classmethod
    def zeros(cls, n_paths: int, L: int) -> "PathState":
        return cls(np.zeros((n_paths, L)))

    def take(self, indices: np.ndarray) -> "PathState":
        return PathState(self.window[indices].copy(), self.exponent[indices].copy())

    def __len__(self) -> int:
        return self.window.shape[0]


def advance_paths(
    poly: GeneratingPolynomial,
    state: PathState,
    noise: np.ndarray,
    record: bool = False,
) -> tuple[PathState, np.ndarray, np.ndarray | None]:
    """
    Run the recurrence for every path over the columns of `noise`.

    Args:
        poly: The generating polynomial.
        state: Batched state before the first noise column (modified in place).
        noise: Array (n_paths, steps) of standard normal innovations.
        record: Also return the (rescaled) values and their exponents.

    Returns:
        The advanced state, the first step index at which each path went
        negative (`steps` if it never did), and optionally a pair
        (values, exponents) with the true value values * 2**exponents.
    """
    noise = np.atleast_2d(noise)
    n_paths, steps = noise.shape
    weights = np.asarray(poly.coeffs[::-1])
    window, exponent = state.window, state.exponent
    first_negative = np.full(n_paths, steps, dtype=np.int64)
    values = np.empty((n_paths, steps)) if record else None
    exponents = np.empty((n_paths, steps), dtype=np.int64) if record else None

    for n in range(steps):
        x = window @ weights + np.ldexp(noise[:, n], -exponent)
        big = np.abs(x) > RESCALE_THRESHOLD
        if np.any(big):
            shift = np.frexp(x[big])[1]
            window[big] = np.ldexp(window[big], -shift[:, None])
            x[big] = np.ldexp(x[big], -shift)
            exponent[big] += shift
        window[:, :-1] = window[:, 1:]
        window[:, -1] = x
        fresh = (x < 0) & (first_negative == steps)
        first_negative[fresh] = n
        if record:
            values[:, n] = x
            exponents[:, n] = exponent

    return state, first_negative, (values, exponents) if record else None


def simulate(
    poly: GeneratingPolynomial,
    N: int,
    seed: int | None = None,
    noise: Sequence[float] | None = None,
) -> PathSample:
    """
    Simulate X_0..X_(N-1) with zero initial conditions.

    Args:
        poly: The generating polynomial.
        N: Number of values.
        seed: Seed of the Philox generator that draws xi_0..xi_(N-1).
        noise: Injected innovations, used instead of the generator.
    """
    if N < 1:
        raise PreconditionError(f"N must be positive, got {N}.")
    if noise is None:
        noise = np.random.Generator(np.random.Philox(seed)).standard_normal(N)
    noise = np.asarray(noise, dtype=float)
    if noise.shape[0] < N:
        raise PreconditionError(f"Injected noise has {noise.shape[0]} values, {N} needed.")

    state = PathState.zeros(1, poly.degree)
    _, _, recorded = advance_paths(poly, state, noise[None, :N], record=True)
    values, exponents = recorded
    with np.errstate(over="ignore"):
        xs = np.ldexp(values[0], exponents[0])
    saturated = bool(np.any(np.isinf(xs)))
    if saturated:
        logger.warning(f"Path of {poly} overflowed the float range; saturated values kept with their sign.")
    return PathSample(xs=xs, seed=seed, poly=poly, saturated=saturated)


def impulse_response(poly: GeneratingPolynomial, N: int) -> ImpulseResponse:
    """h_0..h_N of the recurrence, h_0 = 1."""
    if N < 0:
        raise PreconditionError(f"N must be non-negative, got {N}.")
    impulse = np.zeros(N + 1)
    impulse[0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        h = signal.lfilter([1.0], poly.monic, impulse)
    return ImpulseResponse(h=h)


def impulse_matrix(poly: GeneratingPolynomial, N: int) -> np.ndarray:
    """Lower-triangular Toeplitz H with X = H xi on indices 0..N-1."""
    h = impulse_response(poly, N - 1).h
    return linalg.toeplitz(h, np.zeros(N))


def path_covariance(poly: GeneratingPolynomial, N: int) -> np.ndarray:
    """Exact covariance H H^T of (X_0, ..., X_(N-1))."""
    if N < 1:
        raise PreconditionError(f"N must be positive, got {N}.")
    H = impulse_matrix(poly, N)
    return H @ H.T


def _cross_covariance(h: np.ndarray, p: int, q: int) -> float:
    m = min(p, q)
    return float(np.dot(h[p - m : p + 1], h[q - m : q + 1]))


def path_correlation(poly: GeneratingPolynomial, p: int, q: int) -> float:
    """Correlation of X_p and X_q."""
    if p < 0 or q < 0:
        raise PreconditionError("Indices must be non-negative.")
    h = impulse_response(poly, max(p, q)).h
    cov = _cross_covariance(h, p, q)
    return cov / math.sqrt(_cross_covariance(h, p, p) * _cross_covariance(h, q, q))


def covariance_window(poly: GeneratingPolynomial, n: int) -> np.ndarray:
    """Covariance of (X_(n-L+1), ..., X_n)."""
    L = poly.degree
    if n < L:
        raise PreconditionError(f"covariance_window needs n >= L={L}, got {n}.")
    h = impulse_response(poly, n).h
    indices = range(n - L + 1, n + 1)
    return np.array([[_cross_covariance(h, p, q) for q in indices] for p in indices])


# -----------------------------------------------------------------------
# -----------------------   Modal decomposition   -----------------------
# -----------------------------------------------------------------------
def _modal_rows(zeros: ZeroSet, ell: np.ndarray) -> np.ndarray:
    ell = np.asarray(ell, dtype=float)
    columns = []
    for root, mult in zeros.entries:
        for j in range(mult):
            # 0**0 = 1 keeps the l = 0 row of the confluent system.
            columns.append(root**ell * np.where(ell == 0, 1.0 if j == 0 else 0.0, ell**j))
    return np.column_stack(columns)


def modal_decomposition(zeros: ZeroSet, init: Sequence[float]) -> ModalDecomposition:
    """
    Match q_0..q_(L-1) = init with the closed form over the zero set.

    Raises:
        NumericalError: If the confluent Vandermonde system is singular or its
            condition number exceeds 1e12; increase the root separation.
    """
    init = np.asarray(init, dtype=float)
    if init.shape != (zeros.degree,):
        raise PreconditionError(f"init must have length {zeros.degree}, got {init.shape}.")

    system = _modal_rows(zeros, np.arange(zeros.degree))
    condition = float(np.linalg.cond(system))
    if not np.isfinite(condition) or condition > MODAL_CONDITION_LIMIT:
        raise NumericalError(
            f"Confluent Vandermonde system is ill-conditioned (cond={condition:.3e}); "
            "roots need a larger separation.",
            condition=condition,
        )
    betas = linalg.lu_solve(linalg.lu_factor(system.astype(complex)), init.astype(complex))
    logger.debug(f"Modal solve with condition {condition:.3e}")

    terms, start = [], 0
    for root, mult in zeros.entries:
        terms.append((root, tuple(complex(b) for b in betas[start : start + mult])))
        start += mult
    return ModalDecomposition(terms=tuple(terms), condition=condition)


def eval_modal(decomp: ModalDecomposition, ell):
    """
    Evaluate q_l; `ell` may be an integer or an array of integers.

    Raises:
        NumericalError: If the imaginary residue exceeds 1e-9 relative to the
            summed term magnitudes.
    """
    ell_arr = np.atleast_1d(np.asarray(ell, dtype=float))
    total = np.zeros(ell_arr.shape, dtype=complex)
    magnitude = np.zeros(ell_arr.shape)
    for root, betas in decomp.terms:
        power = root**ell_arr
        for j, beta in enumerate(betas):
            term = beta * power * np.where(ell_arr == 0, 1.0 if j == 0 else 0.0, ell_arr**j)
            total += term
            magnitude += np.abs(term)

    residue = np.abs(total.imag)
    # Conjugate terms cancel only to the accuracy of the solved betas.
    if np.any(residue > MODAL_IMAG_RESIDUE * np.maximum(1.0, magnitude)):
        raise NumericalError(
            f"Modal evaluation keeps an imaginary residue {float(residue.max()):.3e}.",
            residual=float(residue.max()),
        )
    return float(total.real[0]) if np.ndim(ell) == 0 else total.real


# -----------------------------------------------------------------------
# -------------------   Triangle and rotated sums   ---------------------
# -----------------------------------------------------------------------
@lru_cache(maxsize=128)
def _triangle_table(span: int, M: int) -> tuple[tuple[int, ...], ...]:
    # rows[m][d] = b_(i+d, i, m); b_(n,i,0) = 1 and b_(i,i,m) = 1.
    rows = [tuple([1] * (span + 1))]
    for _ in range(1, M + 1):
        previous = rows[-1]
        row = [1]
        for d in range(1, span + 1):
            row.append(row[d - 1] + previous[d])
        rows.append(tuple(row))
    return tuple(rows)


def triangle_coeff(n: int, i: int, M: int) -> int:
    """b_(n,i,M) from b_(n+1,i,M) = b_(n,i,M) + b_(n+1,i,M-1), b_(n,i,0) = 1."""
    if not 1 <= i <= n or M < 0:
        raise PreconditionError(f"triangle_coeff needs 1 <= i <= n and M >= 0, got n={n}, i={i}, M={M}.")
    return _triangle_table(n - i, M)[M][n - i]


def triangle_closed_form(n: int, i: int, M: int) -> int:
    """C(n - i + M, M)."""
    return math.comb(n - i + M, M)


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotated_components(
    noise: Sequence[float],
    theta: float,
    phase: float,
    k: int,
    N: int,
) -> RotatedComponent:
    """
    Direct sums T_(n,k) = sum_(i=1..n) b_(n,i,k) cos((n-i) theta + phase) xi_i
    and the matching sine sums T'_(n,k), for n = 0..N.

    `noise[0]` is xi_1.
    """
    if N < 1 or k < 0:
        raise PreconditionError(f"rotated_components needs N >= 1 and k >= 0, got N={N}, k={k}.")
    xi = np.asarray(noise, dtype=float)
    if xi.shape[0] < N:
        raise PreconditionError(f"Noise has {xi.shape[0]} values, {N} needed.")

    t = np.zeros(N + 1)
    t_prime = np.zeros(N + 1)
    for n in range(1, N + 1):
        i = np.arange(1, n + 1)
        weights = np.array([triangle_closed_form(n, int(j), k) for j in i], dtype=float)
        angle = (n - i) * theta + phase
        t[n] = np.sum(weights * np.cos(angle) * xi[:n])
        t_prime[n] = np.sum(weights * np.sin(angle) * xi[:n])
    return RotatedComponent(theta=theta, phase=phase, k=k, t=t, t_prime=t_prime)


def rotation_step(state: Sequence[float], theta: float, injection: Sequence[float]) -> np.ndarray:
    """T_(n+1,k) = R_theta T_(n,k) + T_(n+1,k-1)."""
    return rotation_matrix(theta) @ np.asarray(state, dtype=float) + np.asarray(injection, dtype=float)


def propagate_components(states: np.ndarray, theta: float, s: int) -> np.ndarray:
    """
    Advance the stacked components T_(n,0..k) by s steps without new noise.

    T_(n+s,k) = R_theta^s sum_(r=0..k) P_s(r) T_(n,k-r) with P_s the
    shifted binomial weights.
    """
    states = np.asarray(states, dtype=float)
    if s < 1:
        raise PreconditionError(f"s must be positive, got {s}.")
    rotation = rotation_matrix(s * theta)
    result = np.zeros_like(states)
    for order in range(states.shape[0]):
        mixed = sum(binom_shift(s, r) * states[order - r] for r in range(order + 1))
        result[order] = rotation @ mixed
    return result


# -----------------------------------------------------------------------
# ---------------------   Oscillatory sum bounds   ----------------------
# -----------------------------------------------------------------------
def oscillatory_partial_sums(theta: float, theta0: float, k: int, n_max: int) -> np.ndarray:
    """Ratios |sum_(i=1..n) cos(i theta + theta0) i^k| / n^k for n = 1..n_max."""
    if n_max < 1 or k < 0:
        raise PreconditionError("oscillatory_partial_sums needs n_max >= 1 and k >= 0.")
    i = np.arange(1, n_max + 1, dtype=float)
    sums = np.cumsum(np.cos(i * theta + theta0) * i**k)
    return np.abs(sums) / i**k


def _validate_angles(thetas: Sequence[float]) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    if np.any(thetas <= 0) or np.any(thetas > math.pi + 1e-12):
        raise PreconditionError(f"Angles must lie in (0, pi], got {thetas}.")
    if len(np.unique(np.round(thetas, 12))) != len(thetas):
        raise PreconditionError(f"Angles must be distinct, got {thetas}.")
    return thetas


def convolution_bound_constant(thetas: Sequence[float]) -> float:
    """
    C with |sum_(i=0..K) cos(i psi + gamma)| <= C for every K, gamma and every
    psi among theta_j, 2 theta_j (theta_j != pi) and theta_j1 +/- theta_j2.
    """
    thetas = _validate_angles(thetas)
    angles = list(thetas)
    angles += [2 * t for t in thetas if not math.isclose(t, math.pi)]
    for a in range(len(thetas)):
        for b in range(a + 1, len(thetas)):
            angles += [thetas[a] + thetas[b], thetas[a] - thetas[b]]
    return max(1.0 / abs(math.sin(psi / 2)) for psi in angles)


def rotation_negativity_witness(
    thetas: Sequence[float],
    rs: Sequence[float],
    gammas: Sequence[float],
) -> int:
    """
    First i >= 0 with sum_j r_j cos(i theta_j + gamma_j) <= -max_j |r_j| / 4.

    Raises:
        PreconditionError: If a phase at theta = pi is not 0 or pi, or if no
            witness exists below 12 l^2 max(C, 1)^2.
    """
    thetas = _validate_angles(thetas)
    rs = np.asarray(rs, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    if not len(thetas) == len(rs) == len(gammas):
        raise PreconditionError("thetas, rs and gammas must have the same length.")
    for theta, gamma in zip(thetas, gammas):
        if math.isclose(theta, math.pi) and not math.isclose(abs(math.sin(gamma)), 0.0, abs_tol=1e-12):
            raise PreconditionError(f"Phase {gamma} at angle pi must be 0 or pi.")

    ell = len(thetas)
    cap = int(math.ceil(12 * ell**2 * max(convolution_bound_constant(thetas), 1.0) ** 2))
    target = -np.max(np.abs(rs)) / 4.0
    for i in range(cap + 1):
        if float(np.sum(rs * np.cos(i * thetas + gammas))) <= target + 1e-12:
            return i
    raise PreconditionError(f"No negativity witness below the cap {cap}; check for repeated angles.")


# -----------------------------------------------------------------------
# -----------------------   Conditional Gaussian   ----------------------
# -----------------------------------------------------------------------
def conditional_gaussian(
    mean: Sequence[float],
    cov: np.ndarray,
    observed: Sequence[int],
    values: Sequence[float],
) -> tuple[np.ndarray, np.ndarray]:
    """
    Condition a Gaussian vector on some coordinates.

    Returns:
        Conditional mean and covariance of the unobserved coordinates, in
        increasing index order.

    Raises:
        PreconditionError: If the covariance is not positive semidefinite or
            the observed block is singular.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    observed = np.asarray(observed, dtype=int)
    values = np.asarray(values, dtype=float)
    d = mean.shape[0]
    if cov.shape != (d, d) or not np.allclose(cov, cov.T, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise PreconditionError("Covariance must be a symmetric matrix matching the mean.")
    if np.linalg.eigvalsh(cov).min() < -1e-10 * max(1.0, np.abs(cov).max()):
        raise PreconditionError("Covariance is not positive semidefinite.")
    if observed.shape != values.shape or len(np.unique(observed)) != len(observed):
        raise PreconditionError("Observed indices must be distinct and match the observed values.")

    free = np.setdiff1d(np.arange(d), observed)
    block = cov[np.ix_(observed, observed)]
    try:
        factor = linalg.cho_factor(block)
    except linalg.LinAlgError as e:
        raise PreconditionError(f"Observed covariance block is singular: {e}") from e
    if np.linalg.cond(block) > MODAL_CONDITION_LIMIT:
        raise PreconditionError("Observed covariance block is numerically singular.")

    cross = cov[np.ix_(free, observed)]
    cond_mean = mean[free] + cross @ linalg.cho_solve(factor, values - mean[observed])
    cond_cov = cov[np.ix_(free, free)] - cross @ linalg.cho_solve(factor, cross.T)
    return cond_mean, cond_cov
