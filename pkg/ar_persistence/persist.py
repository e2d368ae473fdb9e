"""
Persistence-probability estimation.

p_N is the probability that X_n >= 0 for every 0 <= n < N. Estimates come
from naive Monte Carlo, multilevel splitting on the L-dimensional Markov
state, a quasi-Monte Carlo orthant oracle for small N, and, for the random
walk, the exact Sparre Andersen value.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import gammaln, ndtr, ndtri
from scipy.stats import qmc

from ar_persistence.arproc import PathState, advance_paths, path_covariance
from ar_persistence.errors import NumericalError, PreconditionError
from ar_persistence.polyalg import GeneratingPolynomial
from ar_persistence.regime import DecayModel

logger = logging.getLogger("ar_persistence")

# ----------------------    CONSTANTS    ----------------------
CHUNK_SIZE = 4096
STEP_BLOCK = 1024
ORACLE_MAX_N = 12
SLEPIAN_MAX_N = 10
ORACLE_MIN_POINTS_LOG2 = 8
ORACLE_MAX_POINTS_LOG2 = 18
ORACLE_RANDOMIZATIONS = 16
ORACLE_MAX_RANDOMIZATIONS = 512
ORACLE_TOLERANCE = 1e-5
ARITHMETIC_SPACING = 4
MIN_FIT_POINTS = 4

NAIVE_STREAM = 0
SPLITTING_STREAM = 1
ORACLE_STREAM = 2


class Method(str, Enum):
    NAIVE = "naive"
    SPLITTING = "splitting"
    ORACLE = "oracle"
    EXACT = "exact"


# -----------------------------------------------------------------------
# -----------------------      Domain types       -----------------------
# -----------------------------------------------------------------------
@dataclass(frozen=True)
class PersistenceEstimate:
    """
    Estimate of p_N.

    Args:
        N: Horizon.
        p_hat: Estimated probability.
        log_p_hat: log(p_hat), -inf when p_hat = 0.
        stderr_log: One-sigma error of log_p_hat (delta method).
        method: Estimator used.
        budget: Number of paths, particles per stage, or oracle points.
        seed: Master seed.
        flag: Set when the estimate is unusable for fitting (e.g. extinction).
        stage_fractions: Per replicate stage survival fractions (splitting).
        error_bound: Absolute error bound (oracle).
    """

    N: int
    p_hat: float
    log_p_hat: float
    stderr_log: float
    method: Method
    budget: int
    seed: int | None = None
    flag: str | None = None
    stage_fractions: tuple[tuple[float, ...], ...] = ()
    error_bound: float | None = None

    @property
    def stderr(self) -> float:
        """One-sigma error of p_hat."""
        return self.p_hat * self.stderr_log if self.p_hat > 0 else math.inf

    @property
    def usable(self) -> bool:
        return self.flag is None and self.p_hat > 0 and math.isfinite(self.stderr_log)


@dataclass(frozen=True)
class SplittingConfig:
    """
    Args:
        checkpoints: Strictly increasing stage ends, the first >= 1.
        particles: Particles per stage.
        replicates: Independent splitting runs averaged into one estimate.
    """

    checkpoints: tuple[int, ...]
    particles: int = 2000
    replicates: int = 8

    def __post_init__(self):
        checkpoints = tuple(int(c) for c in self.checkpoints)
        if not checkpoints or checkpoints[0] < 1:
            raise PreconditionError("Checkpoints must be non-empty and start at >= 1.")
        if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
            raise PreconditionError(f"Checkpoints must be strictly increasing, got {checkpoints}.")
        if self.particles < 1 or self.replicates < 1:
            raise PreconditionError("particles and replicates must be positive.")
        object.__setattr__(self, "checkpoints", checkpoints)


@dataclass(frozen=True)
class ExponentFit:
    model: DecayModel
    slope: float
    intercept: float
    r_squared: float
    n_min: int
    n_max: int
    n_points: int

    @property
    def exponent(self) -> float:
        """-slope for power, exponential and bounded models; slope for the stretched model."""
        return self.slope if self.model is DecayModel.STRETCHED else -self.slope

    def to_json(self) -> dict:
        return {
            "model": self.model.value,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "exponent": self.exponent,
            "n_min": self.n_min,
            "n_max": self.n_max,
            "n_points": self.n_points,
        }


@dataclass(frozen=True)
class ProbabilityComparison:
    """Outcome of an inequality probe between Gaussian probabilities."""

    left: float
    right: float
    tolerance: float
    holds: bool


# -----------------------------------------------------------------------
# -----------------------        Streams           ----------------------
# -----------------------------------------------------------------------
def stream(seed: int | None, *key: int) -> np.random.Generator:
    """Philox generator for the stream (seed, key...), independent of thread scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


class InterruptedCurve(KeyboardInterrupt):
    """Ctrl-C during a curve; `estimates` hold what the finished work units support."""

    def __init__(self, estimates: list["PersistenceEstimate"]):
        super().__init__()
        self.estimates = estimates


class _PartialRun(Exception):
    def __init__(self, done: dict[int, object]):
        super().__init__()
        self.done = done


def _run_parallel(function, count: int, threads: int | None) -> list:
    """function(0..count-1) on a thread pool, results in index order."""
    executor = ThreadPoolExecutor(max_workers=threads)
    futures = {executor.submit(function, index): index for index in range(count)}
    done: dict[int, object] = {}
    try:
        for future in as_completed(futures):
            done[futures[future]] = future.result()
    except KeyboardInterrupt:
        executor.shutdown(wait=False, cancel_futures=True)
        for future, index in futures.items():
            if future.done() and not future.cancelled() and future.exception() is None:
                done[index] = future.result()
        raise _PartialRun(done) from None
    except BaseException:
        executor.shutdown(cancel_futures=True)
        raise
    executor.shutdown()
    return [done[index] for index in range(count)]


def _advance_blocked(
    poly: GeneratingPolynomial,
    state: PathState,
    steps: int,
    generator: np.random.Generator,
) -> np.ndarray:
    """Advance `steps` steps drawing noise in blocks; returns the first negative step per path."""
    first_negative = np.full(len(state), steps, dtype=np.int64)
    alive = np.ones(len(state), dtype=bool)
    done = 0
    while done < steps:
        block = min(STEP_BLOCK, steps - done)
        noise = generator.standard_normal((len(state), block))
        _, hit, _ = advance_paths(poly, state, noise)
        fresh = alive & (hit < block)
        first_negative[fresh] = done + hit[fresh]
        alive &= hit == block
        done += block
        if not alive.any():
            break
    return first_negative


# -----------------------------------------------------------------------
# -----------------------      Naive Monte Carlo   ----------------------
# -----------------------------------------------------------------------
def _binomial_estimate(N: int, survivors: int, n: int, seed: int | None) -> PersistenceEstimate:
    p = survivors / n
    if survivors == 0:
        return PersistenceEstimate(
            N=N, p_hat=0.0, log_p_hat=-math.inf, stderr_log=math.inf,
            method=Method.NAIVE, budget=n, seed=seed, flag="zero_count",
        )
    stderr = math.sqrt(p * (1.0 - p) / n)
    return PersistenceEstimate(
        N=N, p_hat=p, log_p_hat=math.log(p), stderr_log=stderr / p, method=Method.NAIVE, budget=n, seed=seed
    )


def naive_persistence_curve(
    poly: GeneratingPolynomial,
    horizons: Sequence[int],
    n_samples: int,
    seed: int | None,
    threads: int | None = None,
    chunk_size: int = CHUNK_SIZE,
) -> list[PersistenceEstimate]:
    """
    Naive Monte Carlo estimates for every horizon from one set of paths.

    Paths of length max(horizons) are split into chunks of `chunk_size`;
    chunk c draws from stream(seed, 0, c), so the result does not depend on
    the number of threads.
    """
    horizons = sorted(int(N) for N in horizons)
    if not horizons or horizons[0] < 1:
        raise PreconditionError("Horizons must be positive.")
    if n_samples < 1:
        raise PreconditionError(f"n_samples must be positive, got {n_samples}.")
    N_max = horizons[-1]
    sizes = [min(chunk_size, n_samples - start) for start in range(0, n_samples, chunk_size)]

    def run_chunk(index: int) -> np.ndarray:
        state = PathState.zeros(sizes[index], poly.degree)
        first_negative = _advance_blocked(poly, state, N_max, stream(seed, NAIVE_STREAM, index))
        return np.array([np.count_nonzero(first_negative >= N) for N in horizons])

    logger.info(f"Naive Monte Carlo for {poly}: {n_samples} paths up to N={N_max} in {len(sizes)} chunks")
    try:
        counts = np.sum(_run_parallel(run_chunk, len(sizes), threads), axis=0)
    except _PartialRun as partial:
        # Finished chunks still give unbiased estimates on fewer paths.
        if not partial.done:
            raise InterruptedCurve([]) from None
        n_done = sum(sizes[index] for index in partial.done)
        counts = np.sum(list(partial.done.values()), axis=0)
        logger.warning(f"Interrupted after {len(partial.done)} of {len(sizes)} chunks ({n_done} paths).")
        raise InterruptedCurve(
            [_binomial_estimate(N, int(c), n_done, seed) for N, c in zip(horizons, counts)]
        ) from None
    return [_binomial_estimate(N, int(c), n_samples, seed) for N, c in zip(horizons, counts)]


def naive_persistence(
    poly: GeneratingPolynomial, N: int, n_samples: int, seed: int | None, threads: int | None = None
) -> PersistenceEstimate:
    return naive_persistence_curve(poly, [N], n_samples, seed, threads)[0]


# -----------------------------------------------------------------------
# -----------------------   Multilevel splitting   ----------------------
# -----------------------------------------------------------------------
def default_checkpoints(N: int, model: DecayModel) -> tuple[int, ...]:
    """
    Geometric grid ceil(N 2^(k-K)), K = ceil(log2 N), for power and bounded
    models; arithmetic grid with spacing 4 for exponential and stretched ones.
    """
    if N < 1:
        raise PreconditionError(f"N must be positive, got {N}.")
    if model in (DecayModel.POWER, DecayModel.BOUNDED):
        K = math.ceil(math.log2(N)) if N > 1 else 0
        points = {math.ceil(N * 2.0 ** (k - K)) for k in range(K + 1)}
    else:
        points = set(range(ARITHMETIC_SPACING, N, ARITHMETIC_SPACING)) | {N}
    return tuple(sorted(points))


def _splitting_replicate(
    poly: GeneratingPolynomial,
    checkpoints: Sequence[int],
    particles: int,
    generator: np.random.Generator,
) -> list[float]:
    state = PathState.zeros(particles, poly.degree)
    fractions: list[float] = []
    previous = 0
    for checkpoint in checkpoints:
        first_negative = _advance_blocked(poly, state, checkpoint - previous, generator)
        survivors = np.flatnonzero(first_negative == checkpoint - previous)
        fraction = len(survivors) / particles
        fractions.append(fraction)
        if fraction == 0.0:
            fractions.extend([0.0] * (len(checkpoints) - len(fractions)))
            break
        # Clones share the Markov state; future noise is fresh per clone.
        state = state.take(generator.choice(survivors, size=particles, replace=True))
        previous = checkpoint
    return fractions


def splitting_persistence_curve(
    poly: GeneratingPolynomial,
    horizons: Sequence[int],
    config: SplittingConfig,
    seed: int | None,
    threads: int | None = None,
) -> list[PersistenceEstimate]:
    """
    Multilevel splitting estimates for every horizon in one run.

    The horizons are merged into the checkpoints. Replicate r draws from
    stream(seed, 1, r); the estimate is the mean over replicates of the
    product of stage survival fractions up to each horizon.
    """
    horizons = sorted(int(N) for N in horizons)
    if not horizons or horizons[0] < 1:
        raise PreconditionError("Horizons must be positive.")
    checkpoints = sorted(set(config.checkpoints) | set(horizons))
    checkpoints = [c for c in checkpoints if c <= horizons[-1]]
    n, R = config.particles, config.replicates

    logger.info(f"Splitting for {poly}: {R} replicates x {n} particles over {len(checkpoints)} stages")

    def run_replicate(index: int) -> list[float]:
        return _splitting_replicate(poly, checkpoints, n, stream(seed, SPLITTING_STREAM, index))

    try:
        fractions = np.array(_run_parallel(run_replicate, R, threads))
    except _PartialRun as partial:
        if not partial.done:
            raise InterruptedCurve([]) from None
        logger.warning(f"Interrupted after {len(partial.done)} of {R} replicates.")
        fractions = np.array([partial.done[index] for index in sorted(partial.done)])
        raise InterruptedCurve(_splitting_estimates(fractions, horizons, checkpoints, n, seed)) from None
    logger.debug(f"Mean stage survival fractions: {np.round(fractions.mean(axis=0), 3).tolist()}")
    return _splitting_estimates(fractions, horizons, checkpoints, n, seed)


def _splitting_estimates(
    fractions: np.ndarray, horizons: Sequence[int], checkpoints: Sequence[int], n: int, seed: int | None
) -> list[PersistenceEstimate]:
    """Estimates per horizon from a replicates x stages array of survival fractions."""
    R = fractions.shape[0]
    estimates = []

    for N in horizons:
        stages = checkpoints.index(N) + 1
        used = fractions[:, :stages]
        products = np.prod(used, axis=1)
        p_hat = float(np.mean(products))
        stage_fractions = tuple(tuple(float(f) for f in row) for row in used)
        if p_hat == 0.0:
            logger.warning(
                f"Splitting went extinct before N={N}; use more particles or tighter checkpoints."
            )
            estimates.append(
                PersistenceEstimate(
                    N=N, p_hat=0.0, log_p_hat=-math.inf, stderr_log=math.inf, method=Method.SPLITTING,
                    budget=n, seed=seed, flag="extinction", stage_fractions=stage_fractions,
                )
            )
            continue
        if R > 1:
            stderr_log = float(np.std(products, ddof=1) / math.sqrt(R) / p_hat)
        else:
            f = used[0]
            stderr_log = float(math.sqrt(np.sum((1.0 - f) / (n * f))))
        flag = "partial_extinction" if np.any(products == 0.0) else None
        if flag:
            logger.warning(f"Some splitting replicates went extinct before N={N}.")
        estimates.append(
            PersistenceEstimate(
                N=N, p_hat=p_hat, log_p_hat=math.log(p_hat), stderr_log=stderr_log, method=Method.SPLITTING,
                budget=n, seed=seed, flag=flag, stage_fractions=stage_fractions,
            )
        )
    return estimates


def splitting_persistence(
    poly: GeneratingPolynomial,
    N: int,
    config: SplittingConfig,
    seed: int | None,
    threads: int | None = None,
) -> PersistenceEstimate:
    return splitting_persistence_curve(poly, [N], config, seed, threads)[0]


# -----------------------------------------------------------------------
# -----------------------      Exact references    ----------------------
# -----------------------------------------------------------------------
def random_walk_persistence(N: int) -> float:
    """p_N = C(2N, N) / 4^N for Q = z - 1."""
    if N < 0:
        raise PreconditionError(f"N must be non-negative, got {N}.")
    return float(np.exp(gammaln(2 * N + 1) - 2 * gammaln(N + 1) - N * math.log(4.0)))


def oracle_points_log2(d: int) -> int:
    """log2 of the Sobol points per randomization; grows with the dimension."""
    return min(ORACLE_MAX_POINTS_LOG2, ORACLE_MIN_POINTS_LOG2 + d)


def _normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi) if math.isfinite(x) else 0.0


def _genz_order(cov: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Variable order that integrates the most constrained coordinate first.

    At each step the remaining coordinate with the smallest conditional
    interval mass is pivoted in, conditioning on the truncated means of the
    coordinates already placed.
    """
    d = cov.shape[0]
    cov, a, b = cov.copy(), a.copy(), b.copy()
    order = np.arange(d)
    chol = np.zeros((d, d))
    y = np.zeros(d)
    tiny = np.finfo(float).tiny
    for i in range(d):
        rest = np.arange(i, d)
        scale = np.sqrt(np.maximum(cov[rest, rest] - np.sum(chol[rest, :i] ** 2, axis=1), tiny))
        shift = chol[rest, :i] @ y[:i]
        mass = ndtr((b[rest] - shift) / scale) - ndtr((a[rest] - shift) / scale)
        j = i + int(np.argmin(mass))
        if j != i:
            for values in (a, b, order):
                values[[i, j]] = values[[j, i]]
            cov[[i, j], :] = cov[[j, i], :]
            cov[:, [i, j]] = cov[:, [j, i]]
            chol[[i, j], :] = chol[[j, i], :]
        pivot = cov[i, i] - chol[i, :i] @ chol[i, :i]
        if pivot <= 0.0:
            raise PreconditionError("Covariance is not positive definite.")
        chol[i, i] = math.sqrt(pivot)
        chol[i + 1 :, i] = (cov[i + 1 :, i] - chol[i + 1 :, :i] @ chol[i, :i]) / chol[i, i]
        centre = chol[i, :i] @ y[:i]
        lo, hi = (a[i] - centre) / chol[i, i], (b[i] - centre) / chol[i, i]
        y[i] = (_normal_pdf(lo) - _normal_pdf(hi)) / max(float(ndtr(hi) - ndtr(lo)), tiny)
    return order


def _sov_means(
    chol: np.ndarray, a: np.ndarray, b: np.ndarray, points_log2: int, count: int, generator: np.random.Generator
) -> list[float]:
    """One separation-of-variables mean per independently scrambled Sobol set."""
    d = chol.shape[0]
    diag = np.diag(chol)
    tiny = np.finfo(float).tiny
    top = 1.0 - np.finfo(float).eps
    means = []
    for _ in range(count):
        w = qmc.Sobol(d=d - 1, scramble=True, seed=generator).random_base2(points_log2)
        m = w.shape[0]
        lo = np.full(m, ndtr(a[0] / diag[0]))
        hi = np.full(m, ndtr(b[0] / diag[0]))
        weight = hi - lo
        y = np.zeros((m, d))
        for i in range(1, d):
            u = np.clip(lo + w[:, i - 1] * (hi - lo), tiny, top)
            y[:, i - 1] = ndtri(u)
            shift = y[:, :i] @ chol[i, :i]
            lo = ndtr((a[i] - shift) / diag[i])
            hi = ndtr((b[i] - shift) / diag[i])
            weight = weight * (hi - lo)
        means.append(float(np.mean(weight)))
    return means


def _three_standard_errors(means: list[float]) -> float:
    return 3.0 * float(np.std(means, ddof=1)) / math.sqrt(len(means))


def _box_probability(
    cov: np.ndarray,
    lower: Sequence[float],
    upper: Sequence[float],
    points_log2: int | None,
    randomizations: int,
    seed: int | None,
    tolerance: float | None,
) -> tuple[float, float, int]:
    cov = np.asarray(cov, dtype=float)
    a = np.asarray(lower, dtype=float)
    b = np.asarray(upper, dtype=float)
    d = cov.shape[0]
    if cov.ndim != 2 or cov.shape != (d, d) or a.shape != (d,) or b.shape != (d,):
        raise PreconditionError("Covariance and bounds have inconsistent shapes.")
    if np.any(a > b):
        raise PreconditionError("Lower bounds must not exceed upper bounds.")
    if randomizations < 2:
        raise PreconditionError(f"At least 2 randomizations are needed for an error bound, got {randomizations}.")

    order = _genz_order(cov, a, b)
    cov, a, b = cov[np.ix_(order, order)], a[order], b[order]
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as e:
        raise PreconditionError(f"Covariance is not positive definite: {e}") from e
    if d == 1:
        return float(ndtr(b[0] / chol[0, 0]) - ndtr(a[0] / chol[0, 0])), 0.0, 1

    points_log2 = oracle_points_log2(d) if points_log2 is None else points_log2
    generator = stream(seed, ORACLE_STREAM)
    means = _sov_means(chol, a, b, points_log2, randomizations, generator)
    error = _three_standard_errors(means)
    while tolerance is not None and error > tolerance and len(means) < ORACLE_MAX_RANDOMIZATIONS:
        means += _sov_means(chol, a, b, points_log2, len(means), generator)
        error = _three_standard_errors(means)
        logger.debug(f"Box probability d={d}: {len(means)} randomizations, error bound {error:.2e}")
    if tolerance is not None and error > tolerance:
        raise NumericalError(
            f"Box probability error bound {error:.2e} exceeds {tolerance:.0e} after {len(means)} randomizations.",
            residual=error,
        )
    return float(np.mean(means)), error, len(means) * 2**points_log2


def gaussian_box_probability(
    cov: np.ndarray,
    lower: Sequence[float],
    upper: Sequence[float],
    points_log2: int | None = None,
    randomizations: int = ORACLE_RANDOMIZATIONS,
    seed: int | None = 0,
    tolerance: float | None = None,
) -> tuple[float, float]:
    """
    P(lower <= X <= upper) for centred X with covariance `cov`.

    Separation of variables on the Cholesky factor of the Genz-reordered
    covariance, integrated with scrambled Sobol points. The error is three
    standard errors across the independent randomizations.

    Args:
        points_log2: Sobol points per randomization, log2 (default grows with the dimension).
        randomizations: Initial number of independent scramblings (>= 2).
        tolerance: When set, randomizations double until the error is at most
            this value.

    Raises:
        PreconditionError: On inconsistent shapes or a covariance that is not
            positive definite.
        NumericalError: If `tolerance` is still exceeded after
            ORACLE_MAX_RANDOMIZATIONS randomizations.
    """
    p, error, _ = _box_probability(cov, lower, upper, points_log2, randomizations, seed, tolerance)
    return p, error


def _check_orthant_dimension(d: int):
    if not 1 <= d <= ORACLE_MAX_N:
        raise PreconditionError(f"The orthant oracle supports 1 <= N <= {ORACLE_MAX_N}, got {d}.")


def orthant_probability(
    cov: np.ndarray, seed: int | None = 0, tolerance: float | None = ORACLE_TOLERANCE
) -> tuple[float, float]:
    """P(X >= 0) for centred X with covariance `cov` (dimension <= 12), error at most `tolerance`."""
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    _check_orthant_dimension(d)
    return gaussian_box_probability(cov, np.zeros(d), np.full(d, np.inf), seed=seed, tolerance=tolerance)


def orthant_oracle(poly: GeneratingPolynomial, N: int, seed: int | None = 0) -> PersistenceEstimate:
    """
    p_N as the orthant probability of the path covariance, to an absolute
    error bound of at most 1e-5.

    Raises:
        PreconditionError: If N > 12.
        NumericalError: If the error bound cannot be reached.
    """
    _check_orthant_dimension(N)
    d = N
    p, error, budget = _box_probability(
        path_covariance(poly, N), np.zeros(d), np.full(d, np.inf), None, ORACLE_RANDOMIZATIONS, seed, ORACLE_TOLERANCE
    )
    logger.debug(f"Orthant oracle N={N}: p={p:.8f} +- {error:.1e} from {budget} points")
    return PersistenceEstimate(
        N=N, p_hat=p, log_p_hat=math.log(p), stderr_log=error / 3.0 / p, method=Method.ORACLE,
        budget=budget, seed=seed, error_bound=error,
    )


def random_walk_estimate(N: int) -> PersistenceEstimate:
    p = random_walk_persistence(N)
    return PersistenceEstimate(N=N, p_hat=p, log_p_hat=math.log(p), stderr_log=0.0, method=Method.EXACT, budget=0)


# -----------------------------------------------------------------------
# -----------------------   Comparison probes      ----------------------
# -----------------------------------------------------------------------
def slepian_probe(cov_a: np.ndarray, cov_b: np.ndarray, seed: int | None = 0) -> ProbabilityComparison:
    """
    Orthant probabilities of two covariances ordered off the diagonal.

    Raises:
        PreconditionError: If diagonals differ, cov_a exceeds cov_b off the
            diagonal, or the dimension exceeds 10.
    """
    cov_a = np.asarray(cov_a, dtype=float)
    cov_b = np.asarray(cov_b, dtype=float)
    if cov_a.shape != cov_b.shape or cov_a.shape[0] > SLEPIAN_MAX_N:
        raise PreconditionError(f"Slepian probe needs equal shapes of dimension <= {SLEPIAN_MAX_N}.")
    if not np.allclose(np.diag(cov_a), np.diag(cov_b), atol=1e-12):
        raise PreconditionError("Slepian probe needs equal diagonals.")
    off = ~np.eye(cov_a.shape[0], dtype=bool)
    if np.any(cov_a[off] > cov_b[off] + 1e-12):
        raise PreconditionError("Slepian probe needs cov_a <= cov_b off the diagonal.")

    p_a, _ = orthant_probability(cov_a, seed=seed)
    p_b, _ = orthant_probability(cov_b, seed=seed)
    tolerance = 2.0 * ORACLE_TOLERANCE
    holds = p_a <= p_b + tolerance
    if not holds:
        logger.warning(f"Slepian comparison failed: {p_a:.6f} > {p_b:.6f}")
    return ProbabilityComparison(left=p_a, right=p_b, tolerance=tolerance, holds=holds)


def gaussian_correlation_check(
    cov: np.ndarray, a: Sequence[float], b: Sequence[float], seed: int | None = 0
) -> ProbabilityComparison:
    """P(A and B) against P(A) P(B) for the symmetric boxes |x_i| <= a_i and |x_i| <= b_i."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise PreconditionError("Box half-widths must be positive.")
    both = np.minimum(a, b)
    p_ab, e_ab = gaussian_box_probability(cov, -both, both, seed=seed)
    p_a, e_a = gaussian_box_probability(cov, -a, a, seed=seed)
    p_b, e_b = gaussian_box_probability(cov, -b, b, seed=seed)
    tolerance = e_ab + e_a + e_b + 1e-12
    return ProbabilityComparison(left=p_ab, right=p_a * p_b, tolerance=tolerance, holds=p_ab >= p_a * p_b - tolerance)


# -----------------------------------------------------------------------
# -----------------------      Exponent fitting    ----------------------
# -----------------------------------------------------------------------
def _linearize(estimates: Sequence[PersistenceEstimate], model: DecayModel):
    N = np.array([e.N for e in estimates], dtype=float)
    log_p = np.array([e.log_p_hat for e in estimates])
    sigma = np.array([e.stderr_log for e in estimates])
    if model is DecayModel.STRETCHED:
        return np.log(N), np.log(-log_p), sigma / np.abs(log_p)
    if model is DecayModel.EXPONENTIAL:
        return N, log_p, sigma
    return np.log(N), log_p, sigma


def fit_exponent(
    estimates: Sequence[PersistenceEstimate],
    model: DecayModel,
    min_span: float = 4.0,
) -> ExponentFit:
    """
    Weighted least squares on the model's linearization.

    power and bounded: log p against log N; exponential: log p against N;
    stretched: log(-log p) against log N. Weights are 1/stderr^2 of the
    transformed ordinate; flagged and zero estimates are dropped.

    Raises:
        PreconditionError: With fewer than 4 usable points or when the
            horizons span less than `min_span` (two octaves by default).
    """
    usable = [e for e in estimates if e.usable]
    if model is DecayModel.STRETCHED:
        usable = [e for e in usable if e.p_hat < 1.0]
    usable.sort(key=lambda e: e.N)
    if len(usable) < MIN_FIT_POINTS:
        raise PreconditionError(f"fit_exponent needs at least {MIN_FIT_POINTS} usable estimates, got {len(usable)}.")
    if usable[-1].N < min_span * usable[0].N:
        raise PreconditionError(f"Horizons {usable[0].N}..{usable[-1].N} span less than a factor {min_span}.")

    x, y, sigma = _linearize(usable, model)
    valid = np.isfinite(sigma) & (sigma > 0)
    if valid.any():
        sigma = np.where(valid, sigma, sigma[valid].min())
        w = 1.0 / sigma
    else:
        w = np.ones_like(y)

    slope, intercept = np.polyfit(x, y, 1, w=w)
    weights = w**2
    mean = np.sum(weights * y) / np.sum(weights)
    total = np.sum(weights * (y - mean) ** 2)
    residual = np.sum(weights * (y - (slope * x + intercept)) ** 2)
    r_squared = 1.0 if total == 0 else float(np.clip(1.0 - residual / total, 0.0, 1.0))
    fit = ExponentFit(
        model=model,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        n_min=usable[0].N,
        n_max=usable[-1].N,
        n_points=len(usable),
    )
    logger.info(f"{model.value} fit over N={fit.n_min}..{fit.n_max}: slope {fit.slope:.4f}, r2 {fit.r_squared:.4f}")
    return fit


def fit_windows(
    estimates: Sequence[PersistenceEstimate], model: DecayModel, window: int = MIN_FIT_POINTS
) -> list[ExponentFit]:
    """Fits over sliding windows of consecutive usable horizons, to expose drift of the exponent."""
    usable = sorted((e for e in estimates if e.usable), key=lambda e: e.N)
    if window < MIN_FIT_POINTS or len(usable) < window:
        raise PreconditionError(f"fit_windows needs window >= {MIN_FIT_POINTS} and at least that many estimates.")
    return [fit_exponent(usable[i : i + window], model, min_span=1.0) for i in range(len(usable) - window + 1)]


# -----------------------------------------------------------------------
# -----------------------       Tabular form       ----------------------
# -----------------------------------------------------------------------
def estimates_to_frame(estimates: Sequence[PersistenceEstimate]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "N": pd.Series([e.N for e in estimates], dtype="int64"),
            "p_hat": pd.Series([e.p_hat for e in estimates], dtype="float64"),
            "log_p_hat": pd.Series([e.log_p_hat for e in estimates], dtype="float64"),
            "stderr_log": pd.Series([e.stderr_log for e in estimates], dtype="float64"),
            "method": pd.Series([e.method.value for e in estimates], dtype="str"),
            "seed": pd.Series([e.seed for e in estimates], dtype="Int64"),
            "flag": pd.Series([e.flag for e in estimates], dtype="object"),
        }
    )


def estimates_from_frame(frame: pd.DataFrame) -> list[PersistenceEstimate]:
    estimates = []
    for row in frame.itertuples(index=False):
        flag = row.flag if isinstance(row.flag, str) and row.flag else None
        estimates.append(
            PersistenceEstimate(
                N=int(row.N),
                p_hat=float(row.p_hat),
                log_p_hat=float(row.log_p_hat),
                stderr_log=float(row.stderr_log),
                method=Method(row.method),
                budget=0,
                seed=None if pd.isna(row.seed) else int(row.seed),
                flag=flag,
            )
        )
    return estimates
