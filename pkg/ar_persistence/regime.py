"""
Decay-regime classification from the spectral summary of Q.

The five regimes partition all spectral summaries:

    constant                 r* > 1 and m(r*) = m*
    exponential              r* < 1 or m(r*) = 0
    stretched_exponential    r* = 1 and 1 <= m(r*) < m*
    polynomial_oscillatory   r* > 1 and 1 <= m(r*) < m*
    approx_irw               r* = 1 and m(r*) = m*
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

from ar_persistence.polyalg import ZeroSet, SpectralSummary, spectral_summary

logger = logging.getLogger("ar_persistence")

# ----------------------    CONSTANTS    ----------------------
EXACT_CRITICAL_BAND = 1e-9
FOUND_CRITICAL_BAND = 1e-6
AR3_TOL = 1e-6


class RegimeTag(str, Enum):
    CONSTANT = "constant"
    EXPONENTIAL = "exponential"
    STRETCHED_EXPONENTIAL = "stretched_exponential"
    POLYNOMIAL_OSCILLATORY = "polynomial_oscillatory"
    APPROX_IRW = "approx_irw"


class DecayModel(str, Enum):
    POWER = "power"
    EXPONENTIAL = "exponential"
    STRETCHED = "stretched"
    BOUNDED = "bounded"


DECAY_MODELS = {
    RegimeTag.CONSTANT: DecayModel.BOUNDED,
    RegimeTag.EXPONENTIAL: DecayModel.EXPONENTIAL,
    RegimeTag.STRETCHED_EXPONENTIAL: DecayModel.STRETCHED,
    RegimeTag.POLYNOMIAL_OSCILLATORY: DecayModel.POWER,
    RegimeTag.APPROX_IRW: DecayModel.POWER,
}


@dataclass(frozen=True)
class Regime:
    """
    A decay regime with its predicted exponent.

    `alpha` is set for the stretched-exponential regime (p_N = exp(-N^alpha))
    and the polynomial-oscillatory regime (p_N ~ N^-alpha). `ar3_theta` is set
    when an approx_irw zero set is {1, e^(i theta), e^(-i theta)}, whose
    exponent comes from the cone eigenvalue.
    """

    tag: RegimeTag
    summary: SpectralSummary
    alpha: float | None = None
    warnings: tuple[str, ...] = ()
    ar3_theta: float | None = None

    @property
    def exponent_known(self) -> bool:
        if self.tag in (RegimeTag.CONSTANT, RegimeTag.STRETCHED_EXPONENTIAL, RegimeTag.POLYNOMIAL_OSCILLATORY):
            return True
        return self.ar3_theta is not None

    def to_json(self) -> dict:
        report = {
            "tag": self.tag.value,
            "r_star": self.summary.r_star,
            "m_star": self.summary.m_star,
            "m_rstar": self.summary.m_rstar,
            "exponent_known": self.exponent_known,
            "decay_model": decay_model(self).value,
            "warnings": list(self.warnings),
        }
        if self.alpha is not None:
            report["alpha"] = self.alpha
        if self.ar3_theta is not None:
            report["ar3_theta"] = self.ar3_theta
        return report


def _positive_part(x: int) -> int:
    return max(x, 0)


def classify(summary: SpectralSummary, critical_band: float | None = None) -> Regime:
    """
    Map a spectral summary to its decay regime.

    Args:
        summary: The spectral summary.
        critical_band: |r* - 1| below which r* is treated as 1; default 1e-9
            for exact zero sets and 1e-6 for root-found ones.

    Returns:
        Regime: The regime, with a near-critical warning when r* was inside
        the band without being exactly 1.
    """
    if critical_band is None:
        critical_band = EXACT_CRITICAL_BAND if summary.exact else FOUND_CRITICAL_BAND

    warnings = []
    distance = summary.r_star - 1.0
    critical = abs(distance) <= critical_band
    if critical and abs(distance) > 1e-12:
        message = f"near-critical: r*={summary.r_star:.12g} treated as r*=1 (band {critical_band:g})"
        logger.warning(message)
        warnings.append(message)

    m_star, m_rstar = summary.m_star, summary.m_rstar
    if (not critical and distance < 0) or m_rstar == 0:
        tag, alpha = RegimeTag.EXPONENTIAL, None
    elif critical:
        if m_rstar == m_star:
            tag, alpha = RegimeTag.APPROX_IRW, None
        else:
            tag, alpha = RegimeTag.STRETCHED_EXPONENTIAL, 1.0 - m_rstar / m_star
    elif m_rstar == m_star:
        tag, alpha = RegimeTag.CONSTANT, None
    else:
        alpha = 0.5 * sum(
            _positive_part(m - m_rstar) * _positive_part(m - m_rstar + 1) for _, m in summary.lambda_star
        )
        assert alpha > 0, "polynomial_oscillatory regime needs a root with m(lambda) > m(r*)"
        tag = RegimeTag.POLYNOMIAL_OSCILLATORY

    logger.debug(f"Classified r*={summary.r_star:.6g}, m*={m_star}, m(r*)={m_rstar} as {tag.value}")
    return Regime(tag=tag, summary=summary, alpha=alpha, warnings=tuple(warnings))


def decay_model(regime: Regime) -> DecayModel:
    return DECAY_MODELS[regime.tag]


def ar3_angle(zeros: ZeroSet, tol: float = AR3_TOL) -> float | None:
    """theta in (0, pi) when the zero set is exactly {1, e^(i theta), e^(-i theta)}, else None."""
    if len(zeros.entries) != 3 or any(mult != 1 for _, mult in zeros.entries):
        return None
    roots = [root for root, _ in zeros.entries]
    units = [r for r in roots if abs(r - 1.0) <= tol]
    upper = [r for r in roots if r.imag > tol and abs(abs(r) - 1.0) <= tol]
    lower = [r for r in roots if r.imag < -tol and abs(abs(r) - 1.0) <= tol]
    if len(units) != 1 or len(upper) != 1 or len(lower) != 1:
        return None
    if abs(upper[0] - lower[0].conjugate()) > tol:
        return None
    theta = cmath.phase(upper[0])
    return theta if 0.0 < theta < math.pi else None


def classify_zeros(
    zeros: ZeroSet, critical_band: float | None = None, modulus_tol: float | None = None
) -> Regime:
    """spectral_summary then classify; the AR3 angle is attached for approx_irw zero sets of that shape."""
    regime = classify(spectral_summary(zeros, modulus_tol), critical_band)
    if regime.tag is RegimeTag.APPROX_IRW:
        theta = ar3_angle(zeros)
        if theta is not None:
            regime = replace(regime, ar3_theta=theta)
    return regime
