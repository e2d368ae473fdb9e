"""
Polynomial and linear-algebra substrate.

Generating polynomials are stored through their recurrence coefficients
a_1..a_L of Q(z) = z^L - sum_j a_j z^(L-j). Zero sets keep each distinct
root once together with its multiplicity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg
from scipy.cluster.hierarchy import fcluster, linkage

from ar_persistence.errors import NumericalError, PreconditionError

logger = logging.getLogger("ar_persistence")

# ----------------------    CONSTANTS    ----------------------
MAX_DEGREE = 32
ABERTH_MAX_ITER = 500
ROOT_BACKWARD_ERROR = 1e-8
COEFF_IMAG_RESIDUE = 1e-10
POWER_IMAG_RESIDUE = 1e-9
JORDAN_CONDITION_LIMIT = 1e10
MULTIPLIER_CAP = 1_000_000
EXACT_MODULUS_TOL = 1e-9
FOUND_MODULUS_TOL = 1e-6


# -----------------------------------------------------------------------
# -----------------------      Domain types       -----------------------
# -----------------------------------------------------------------------
@dataclass(frozen=True)
class GeneratingPolynomial:
    """Recurrence coefficients a_1..a_L of Q(z) = z^L - sum_j a_j z^(L-j)."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(a) for a in self.coeffs)
        if not coeffs:
            raise PreconditionError("A generating polynomial needs at least one coefficient.")
        if len(coeffs) > MAX_DEGREE:
            raise PreconditionError(f"Degree {len(coeffs)} exceeds the supported maximum {MAX_DEGREE}.")
        if not all(math.isfinite(a) for a in coeffs):
            raise PreconditionError(f"Coefficients must be finite, got {coeffs}.")
        if coeffs[-1] == 0.0:
            # a_L = 0 puts a zero root in Q; deflating it would change the process.
            raise PreconditionError("The last coefficient a_L must be non-zero (zero roots are not supported).")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs)

    @property
    def monic(self) -> np.ndarray:
        """Coefficients of Q in descending powers, leading 1."""
        return np.concatenate(([1.0], -np.asarray(self.coeffs)))

    @property
    def ascending(self) -> np.ndarray:
        """Coefficients of Q in ascending powers."""
        return self.monic[::-1].copy()

    def __str__(self) -> str:
        return "a=[" + ",".join(f"{a:g}" for a in self.coeffs) + "]"


@dataclass(frozen=True)
class ZeroSet:
    """
    Distinct roots with multiplicities.

    Args:
        entries: Pairs (root, multiplicity).
        cluster_tol: Merge radius used when the set was produced numerically.
        exact: True when the zeros were supplied directly rather than found.
    """

    entries: tuple[tuple[complex, int], ...]
    cluster_tol: float = 0.0
    exact: bool = False

    def __post_init__(self):
        entries = tuple((complex(root), int(mult)) for root, mult in self.entries)
        if not entries:
            raise PreconditionError("A zero set must contain at least one root.")
        if any(mult < 1 for _, mult in entries):
            raise PreconditionError("Multiplicities must be positive integers.")
        if self.cluster_tol < 0:
            raise PreconditionError("cluster_tol must be non-negative.")
        if any(root == 0 for root, _ in entries):
            raise PreconditionError("Zero roots are not supported (a_L must be non-zero).")
        object.__setattr__(self, "entries", entries)
        self._check_separation()
        self._check_conjugate_closed()

    def _conjugate_tol(self) -> float:
        return max(self.cluster_tol, 1e-9 * max(1.0, max(abs(r) for r, _ in self.entries)))

    def _check_separation(self):
        roots = [r for r, _ in self.entries]
        for i in range(len(roots)):
            for j in range(i + 1, len(roots)):
                if abs(roots[i] - roots[j]) <= self.cluster_tol:
                    raise PreconditionError(
                        f"Roots {roots[i]} and {roots[j]} are not separated by more than cluster_tol."
                    )

    def _check_conjugate_closed(self):
        tol = self._conjugate_tol()
        for root, mult in self.entries:
            if abs(root.imag) <= tol:
                continue
            mirrors = [m for r, m in self.entries if abs(r - root.conjugate()) <= tol]
            if mirrors != [mult]:
                raise PreconditionError(f"Zero set is not closed under conjugation at {root} (multiplicity {mult}).")

    @property
    def degree(self) -> int:
        return sum(mult for _, mult in self.entries)

    def roots(self) -> np.ndarray:
        """All roots repeated by multiplicity."""
        return np.array([root for root, mult in self.entries for _ in range(mult)], dtype=complex)

    def to_json(self) -> list[dict]:
        return [{"re": r.real, "im": r.imag, "mult": m} for r, m in self.entries]

    @classmethod
    def from_json(cls, items: Iterable[dict], exact: bool = True) -> "ZeroSet":
        return cls(tuple((complex(d["re"], d.get("im", 0.0)), int(d.get("mult", 1))) for d in items), exact=exact)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[complex, int]], complete_conjugates: bool = True) -> "ZeroSet":
        """Build an exact zero set, adding the missing conjugate of every non-real root."""
        given = [(complex(root), int(mult)) for root, mult in pairs]
        collected = list(given)
        if complete_conjugates:
            for root, mult in given:
                if root.imag != 0.0 and not any(abs(r - root.conjugate()) <= 1e-12 for r, _ in collected):
                    collected.append((root.conjugate(), mult))
        return cls(tuple(collected), exact=True)


@dataclass(frozen=True)
class SpectralSummary:
    r_star: float
    lambda_star: tuple[tuple[complex, int], ...]
    m_star: int
    m_rstar: int
    modulus_tol: float
    exact: bool = False

    def to_json(self) -> dict:
        return {
            "r_star": self.r_star,
            "lambda_star": [{"re": r.real, "im": r.imag, "mult": m} for r, m in self.lambda_star],
            "m_star": self.m_star,
            "m_rstar": self.m_rstar,
        }


# -----------------------------------------------------------------------
# -----------------------        Roots            -----------------------
# -----------------------------------------------------------------------
def evaluate(poly: GeneratingPolynomial, z) -> tuple[np.ndarray, np.ndarray]:
    """Return Q(z) and Q'(z) at the given (complex) points."""
    monic = poly.monic
    z = np.asarray(z, dtype=complex)
    return np.polyval(monic, z), np.polyval(np.polyder(monic), z)


def _backward_error(poly: GeneratingPolynomial, roots: np.ndarray) -> float:
    values, _ = evaluate(poly, roots)
    scale = np.polyval(np.abs(poly.monic), np.abs(roots))
    return float(np.max(np.abs(values) / scale))


def _aberth(poly: GeneratingPolynomial, max_iter: int = ABERTH_MAX_ITER) -> tuple[np.ndarray, int]:
    monic = poly.monic
    L = poly.degree
    if L == 1:
        return np.array([complex(poly.coeffs[0])]), 0

    # Fujiwara-type radius with an angular offset that breaks real symmetry.
    radius = 2.0 * max(abs(monic[k]) ** (1.0 / k) for k in range(1, L + 1))
    radius = max(radius, 1e-3)
    z = 0.5 * radius * np.exp(1j * (2.0 * np.pi * np.arange(L) / L + 0.4))

    iterations = 0
    for iterations in range(1, max_iter + 1):
        p, dp = evaluate(poly, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dp != 0, p / dp, p)
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            repulsion = np.sum(1.0 / diff, axis=1)
            step = ratio / (1.0 - ratio * repulsion)
        step = np.where(np.isfinite(step), step, 0.0)
        z = z - step
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, float(np.max(np.abs(z)))):
            break
    return z, iterations


def _cluster(raw: np.ndarray, tol: float) -> list[np.ndarray]:
    if len(raw) == 1 or tol == 0.0:
        return [raw[[i]] for i in range(len(raw))]
    points = np.column_stack([raw.real, raw.imag])
    labels = fcluster(linkage(points, method="single"), t=tol, criterion="distance")
    return [raw[labels == label] for label in np.unique(labels)]


def _symmetrize(clusters: list[np.ndarray], tol: float) -> list[tuple[complex, int]]:
    centroids = [complex(np.mean(c)) for c in clusters]
    sizes = [len(c) for c in clusters]
    entries: list[tuple[complex, int]] = []
    used: set[int] = set()
    for i, (centre, size) in enumerate(zip(centroids, sizes)):
        if i in used:
            continue
        if abs(centre.imag) <= tol:
            entries.append((complex(centre.real, 0.0), size))
            used.add(i)
            continue
        candidates = [k for k in range(len(centroids)) if k not in used and k != i]
        if not candidates:
            raise NumericalError(f"Root cluster at {centre} has no conjugate partner.")
        mirror = min(candidates, key=lambda k: abs(centroids[k] - centre.conjugate()))
        if sizes[mirror] != size or abs(centroids[mirror] - centre.conjugate()) > 10 * tol + 1e-8:
            raise NumericalError(
                f"Root clusters are not conjugate-closed near {centre}; try a larger cluster_tol."
            )
        merged = 0.5 * (centre + centroids[mirror].conjugate())
        entries.append((merged, size))
        entries.append((merged.conjugate(), size))
        used.update((i, mirror))
    return entries


def find_roots(poly: GeneratingPolynomial, cluster_tol: float | None = None) -> ZeroSet:
    """
    Find all L roots of Q with multiplicities.

    Roots come from a simultaneous Aberth-Ehrlich iteration; companion-matrix
    eigenvalues are used when the iteration leaves a large backward error.
    Roots closer than cluster_tol are merged into one entry placed at the
    cluster centroid, and each non-real cluster is averaged with the conjugate
    of its mirror cluster.

    Args:
        poly: The generating polynomial.
        cluster_tol: Merge radius, default 1e-6 * max(1, r_star).

    Returns:
        ZeroSet: Entries sorted by decreasing modulus, then decreasing real part.
    """
    raw, iterations = _aberth(poly)
    residual = _backward_error(poly, raw)
    logger.debug(f"Aberth iteration on {poly}: {iterations} iterations, backward error {residual:.3e}")

    if not np.all(np.isfinite(raw)) or residual > ROOT_BACKWARD_ERROR:
        logger.warning(f"Aberth iteration did not converge for {poly}; using companion eigenvalues.")
        raw = linalg.eigvals(companion_matrix(poly))
        residual = _backward_error(poly, raw)
        if residual > ROOT_BACKWARD_ERROR:
            raise NumericalError(
                f"Root finding failed for {poly} (backward error {residual:.3e}).", residual=residual
            )

    r_star = float(np.max(np.abs(raw)))
    tol = 1e-6 * max(1.0, r_star) if cluster_tol is None else float(cluster_tol)
    if tol < 0:
        raise PreconditionError("cluster_tol must be non-negative.")

    entries = _symmetrize(_cluster(raw, tol), tol)
    entries.sort(key=lambda e: (-abs(e[0]), -e[0].real, -e[0].imag))
    return ZeroSet(tuple(entries), cluster_tol=tol, exact=False)


def from_zero_set(zeros: ZeroSet) -> GeneratingPolynomial:
    """
    Expand prod (z - lambda)^m(lambda) into recurrence coefficients.

    Raises:
        PreconditionError: If the expansion keeps an imaginary part, i.e. the
            zero set is not closed under conjugation.
    """
    expanded = np.poly(zeros.roots())
    scale = max(1.0, float(np.max(np.abs(expanded))))
    residue = float(np.max(np.abs(np.imag(expanded))))
    if residue > COEFF_IMAG_RESIDUE * scale:
        raise PreconditionError(
            f"Zero set is not conjugate-closed (imaginary coefficient residue {residue:.3e})."
        )
    return GeneratingPolynomial(tuple(-np.real(expanded[1:])))


def spectral_summary(zeros: ZeroSet, modulus_tol: float | None = None) -> SpectralSummary:
    """
    Compute r*, the maximal-modulus roots, m* and m(r*).

    Args:
        zeros: The zero set.
        modulus_tol: Relative tolerance on moduli; default 1e-9 for exact
            zero sets and 1e-6 for zero sets produced by find_roots.
    """
    if modulus_tol is None:
        modulus_tol = EXACT_MODULUS_TOL if zeros.exact else FOUND_MODULUS_TOL
    r_star = max(abs(root) for root, _ in zeros.entries)
    lambda_star = tuple((root, mult) for root, mult in zeros.entries if abs(root) >= r_star * (1.0 - modulus_tol))
    m_star = max(mult for _, mult in lambda_star)
    m_rstar = 0
    for root, mult in lambda_star:
        if root.real > 0 and abs(root.imag) <= modulus_tol * r_star:
            m_rstar = max(m_rstar, mult)
    return SpectralSummary(
        r_star=float(r_star),
        lambda_star=lambda_star,
        m_star=m_star,
        m_rstar=m_rstar,
        modulus_tol=modulus_tol,
        exact=zeros.exact,
    )


# -----------------------------------------------------------------------
# -----------------------   Companion machinery   -----------------------
# -----------------------------------------------------------------------
def companion_matrix(poly: GeneratingPolynomial) -> np.ndarray:
    """First row a_1..a_L, ones on the subdiagonal, zeros elsewhere."""
    return linalg.companion(poly.monic)


def direct_power_apply(poly: GeneratingPolynomial, x: Sequence[float], n: int) -> np.ndarray:
    if n < 0:
        raise PreconditionError("n must be non-negative.")
    matrix = companion_matrix(poly)
    state = np.asarray(x, dtype=float).copy()
    for _ in range(n):
        state = matrix @ state
    return state


def jordan_chain_basis(zeros: ZeroSet, L: int | None = None) -> tuple[np.ndarray, list[tuple[complex, int, int]]]:
    """
    Generalized eigenbasis of the companion matrix.

    The chain for a root lambda of multiplicity m is w_j = v^(j)(lambda) / j!,
    j = 0..m-1, where v(lambda) = (lambda^(L-1), ..., lambda, 1); then
    (A - lambda) w_j = w_(j-1) and w_0 is the eigenvector.

    Returns:
        The L x L complex basis matrix and a list of (root, multiplicity,
        first column index).
    """
    L = zeros.degree if L is None else L
    powers = L - 1 - np.arange(L)
    columns = []
    blocks = []
    for root, mult in zeros.entries:
        blocks.append((root, mult, len(columns)))
        for j in range(mult):
            column = np.array(
                [math.comb(int(p), j) * root ** (int(p) - j) if p >= j else 0.0 for p in powers],
                dtype=complex,
            )
            columns.append(column)
    return np.column_stack(columns), blocks


def jordan_power_apply(
    poly: GeneratingPolynomial,
    x: Sequence[float],
    n: int,
    zeros: ZeroSet | None = None,
) -> np.ndarray:
    """
    Evaluate A^n x through the Jordan form of the companion matrix.

    A^n x = sum_lambda sum_r sum_j C(n, j) lambda^(n-j) c_(lambda, r+j) v_(lambda, r)
    with c the coordinates of x in the chain basis.

    Raises:
        NumericalError: If the chain basis is ill-conditioned (use
            direct_power_apply instead) or the result keeps an imaginary part.
    """
    if n < 0:
        raise PreconditionError("n must be non-negative.")
    zeros = find_roots(poly) if zeros is None else zeros
    basis, blocks = jordan_chain_basis(zeros, poly.degree)
    condition = float(np.linalg.cond(basis))
    if not np.isfinite(condition) or condition > JORDAN_CONDITION_LIMIT:
        raise NumericalError(
            f"Jordan chain basis is ill-conditioned (cond={condition:.3e}); use direct_power_apply.",
            condition=condition,
        )
    coords = linalg.lu_solve(linalg.lu_factor(basis), np.asarray(x, dtype=complex))

    result = np.zeros(poly.degree, dtype=complex)
    for root, mult, start in blocks:
        for r in range(mult):
            weight = 0j
            for j in range(0, min(mult - r, n + 1)):
                weight += math.comb(n, j) * root ** (n - j) * coords[start + r + j]
            result += weight * basis[:, start + r]

    scale = max(1.0, float(np.max(np.abs(result.real))))
    residue = float(np.max(np.abs(result.imag)))
    if residue > POWER_IMAG_RESIDUE * scale:
        raise NumericalError(f"Jordan power keeps an imaginary residue {residue:.3e}.", residual=residue)
    return result.real


# -----------------------------------------------------------------------
# -----------------       Non-negative multipliers       ------------------
# -----------------------------------------------------------------------
def nonneg_multiplier_quadratic(b: float, c: float) -> np.ndarray:
    """
    Coefficients b_0..b_n0 (ascending) making (sum b_k z^k)(z^2 + b z + c) non-negative.

    b_0 = 1, b_1 = -b/c, b_k = -(b b_(k-1) + b_(k-2))/c, truncated before the
    first non-positive term.
    """
    if b * b - 4.0 * c >= 0:
        raise PreconditionError(f"z^2 + {b} z + {c} has real roots (b^2 - 4c >= 0).")
    multiplier = [1.0]
    previous, current = 1.0, -b / c
    k = 1
    while current > 0:
        multiplier.append(current)
        k += 1
        if k > MULTIPLIER_CAP:
            raise NumericalError(f"Multiplier recursion for (b={b}, c={c}) exceeded {MULTIPLIER_CAP} terms.")
        previous, current = current, -(b * current + previous) / c
    return np.array(multiplier)


def nonneg_multiplier(poly: GeneratingPolynomial, zeros: ZeroSet | None = None) -> np.ndarray:
    """
    Non-negative polynomial P (ascending coefficients) with Q P non-negative.

    Linear factors z + a, a >= 0, need no multiplier; each complex pair
    contributes nonneg_multiplier_quadratic once per multiplicity.

    Raises:
        PreconditionError: If Q has a positive real zero.
    """
    zeros = find_roots(poly) if zeros is None else zeros
    multiplier = np.array([1.0])
    for root, mult in zeros.entries:
        tol = FOUND_MODULUS_TOL * max(1.0, abs(root))
        if abs(root.imag) <= tol:
            if root.real > 0:
                raise PreconditionError(f"Q has a positive real zero at {root.real:g}.")
            continue
        if root.imag < 0:
            continue
        factor = nonneg_multiplier_quadratic(-2.0 * root.real, abs(root) ** 2)
        for _ in range(mult):
            multiplier = np.convolve(multiplier, factor)
    return multiplier


def multiplied_coefficients(poly: GeneratingPolynomial, multiplier: Sequence[float]) -> np.ndarray:
    """Ascending coefficients of Q(z) P(z)."""
    return np.convolve(poly.ascending, np.asarray(multiplier, dtype=float))


# -----------------------------------------------------------------------
# -----------------------       Small helpers      ----------------------
# -----------------------------------------------------------------------
def binom_shift(s: int, x: int) -> int:
    """P_s(x) = C(s - 1 + x, x), exact."""
    if s < 1 or x < 0:
        raise PreconditionError(f"binom_shift needs s >= 1 and x >= 0, got s={s}, x={x}.")
    return math.comb(s - 1 + x, x)


def grid_witness_constant(m: int, L: int) -> float:
    """
    Constant C with max_k |g(k/L)| >= C max_j |c_j| for every g of degree < m.

    C = 1/(L M) where M bounds the entries of the left inverse of the
    L x m grid Vandermonde matrix.
    """
    if m < 1 or L < m:
        raise PreconditionError(f"grid witness needs 1 <= m <= L, got m={m}, L={L}.")
    grid = np.arange(1, L + 1) / L
    left_inverse = np.linalg.pinv(np.vander(grid, m, increasing=True))
    return 1.0 / (L * float(np.max(np.abs(left_inverse))))


def grid_witness(g_coeffs: Sequence[float], L: int) -> tuple[float, float]:
    """Maximizer y of |g| on {1/L, ..., 1} and the value |g(y)|."""
    g = np.asarray(g_coeffs, dtype=float)
    if g.size < 1 or L < g.size:
        raise PreconditionError(f"grid witness needs 1 <= m <= L, got m={g.size}, L={L}.")
    grid = np.arange(1, L + 1) / L
    values = np.abs(np.polynomial.polynomial.polyval(grid, g))
    best = int(np.argmax(values))
    return float(grid[best]), float(values[best])
