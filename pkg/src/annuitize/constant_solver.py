"""Closed-form annuitization problem under a constant mortality force.

With a constant force ``mu`` the value of waiting is a combination of the
never-stop value ``beta * x`` and one homogeneous power ``x**gamma``.  The
case table is driven by the sign of ``K`` and the order of ``delta`` and
``beta``:

=======  ===========  ==================  =====================
K        delta, beta  regime              continuation region
=======  ===========  ==================  =====================
K < 0    delta >= b   StopEverywhere      empty
K < 0    delta <  b   StopBelow(x2)       (x2, inf)
K > 0    delta <= b   NeverStop           [0, inf)
K > 0    delta >  b   StopAbove(x4)       [0, x4)
K = 0    delta <  b   StopOnlyAtZero      (0, inf)
K = 0    delta >= b   StopEverywhere      empty
=======  ===========  ==================  =====================
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core_model import AssumptionViolation, ModelParams, characteristic_exponents
from .piecewise import Piece, PiecewiseValueFunction

logger = logging.getLogger(__name__)

__all__ = [
    "ConstantRegime",
    "ConstantCoefficients",
    "ConstantSolution",
    "StoppingRegion",
    "constant_coefficients",
    "boundary_terms",
    "solve_constant",
    "eval_constant",
]


class ConstantRegime(enum.Enum):
    STOP_EVERYWHERE = "StopEverywhere"
    STOP_BELOW = "StopBelow"
    STOP_ABOVE = "StopAbove"
    NEVER_STOP = "NeverStop"
    STOP_ONLY_AT_ZERO = "StopOnlyAtZero"


@dataclass(frozen=True)
class StoppingRegion:
    """Shape of a stopping region on the wealth axis.

    ``kind`` is one of ``"everywhere"``, ``"below"`` (``x <= threshold``),
    ``"above"`` (``x >= threshold``), ``"zero"`` (only ``x == 0``) and
    ``"never"``.
    """

    kind: str
    threshold: Optional[float] = None

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "everywhere":
            out = np.ones(x.shape, dtype=bool)
        elif self.kind == "below":
            out = x <= self.threshold
        elif self.kind == "above":
            out = x >= self.threshold
        elif self.kind == "zero":
            out = x == 0.0
        elif self.kind == "never":
            out = np.zeros(x.shape, dtype=bool)
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")
        return out if out.ndim else bool(out)


@dataclass(frozen=True)
class ConstantCoefficients:
    mu: float
    r: float
    beta: float
    delta: float
    gamma_plus: float
    gamma_minus: float
    drift: float
    sigma: float


@dataclass(frozen=True)
class ConstantSolution:
    """Value function and regime for constant mortality.

    Attributes:
        regime: Case of the table in the module docstring.
        coeffs: Coefficients for this force.
        K: Purchase cost used.
        threshold: ``x2`` (StopBelow) or ``x4`` (StopAbove), else None.
        zeta: Coefficient of ``x**gamma`` in the continuation region (may be
            inf or 0 in floating point for extreme exponents; the value
            function itself stores the scaled coefficient).
        value: Piecewise representation on ``[0, inf)``.
        region: Stopping region descriptor.
    """

    regime: ConstantRegime
    coeffs: ConstantCoefficients
    K: float
    threshold: Optional[float]
    zeta: Optional[float]
    value: PiecewiseValueFunction
    region: StoppingRegion

    @property
    def running_reward(self) -> float:
        """Coefficient ``a`` of the running reward ``a * x`` while invested."""
        c = self.coeffs
        return c.beta * (c.r - c.drift)


def _safe_exp(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


def boundary_terms(delta: float, beta: float, gamma: float, K: float) -> tuple[float, float, float]:
    """Threshold and homogeneous coefficient of a one-sided stopping problem.

    The continuation value is ``beta x + zeta x**gamma`` and the threshold is
    ``delta K gamma / ((gamma - 1)(delta - beta))``, with

        zeta = (delta K / (gamma - 1))**(1 - gamma) * ((delta - beta) / gamma)**gamma.

    ``zeta`` is formed in logarithms because ``gamma`` can be large.

    Returns:
        ``(threshold, zeta, zeta * threshold**gamma)``; the last is the
        coefficient of ``(x / threshold)**gamma`` and stays of the order of
        the value function.
    """
    x = delta * K * gamma / ((gamma - 1.0) * (delta - beta))
    log_zeta = (1.0 - gamma) * math.log(delta * K / (gamma - 1.0)) + gamma * math.log((delta - beta) / gamma)
    return x, _safe_exp(log_zeta), math.exp(log_zeta + gamma * math.log(x))


def constant_coefficients(params: ModelParams, mu: float) -> ConstantCoefficients:
    """Coefficients of the constant-force problem with force ``mu``.

    Raises:
        AssumptionViolation: if ``theta - alpha - rho - mu >= 0``.
    """
    m, p, c = params.market, params.prefs, params.pricing
    drift = m.theta - m.alpha
    r = p.rho + mu
    if not drift - r < 0:
        raise AssumptionViolation(
            "well-posedness", f"theta - alpha - rho - mu = {drift - r:.6g} must be negative"
        )
    beta = (m.alpha + p.nu * mu) / (r - drift)
    delta = (c.rho_hat + c.mu_hat) / r
    gp, gm = characteristic_exponents(drift, m.sigma, r)
    return ConstantCoefficients(mu, r, beta, delta, gp, gm, drift, m.sigma)


def solve_constant(params: ModelParams, mu: float) -> ConstantSolution:
    """Solve the constant-force annuitization problem.

    Args:
        params: Model parameters; only market, preferences and pricing are
            used together with ``mu``.
        mu: Constant mortality force.

    Returns:
        The regime, threshold and value function.
    """
    c = constant_coefficients(params, mu)
    K = float(params.pricing.K)
    d, b = c.delta, c.beta
    stop = Piece.of([(1.0, d), (0.0, -d * K)], stopping=True)
    hold = Piece.of([(1.0, b)])

    if (K < 0 and d >= b) or (K == 0 and d >= b):
        return ConstantSolution(
            ConstantRegime.STOP_EVERYWHERE, c, K, None, None,
            PiecewiseValueFunction.single(stop), StoppingRegion("everywhere"),
        )
    if K == 0:
        # Only x = 0 stops; there V = beta * 0 = delta * 0 anyway.
        return ConstantSolution(
            ConstantRegime.STOP_ONLY_AT_ZERO, c, K, None, None,
            PiecewiseValueFunction.single(hold), StoppingRegion("zero"),
        )
    if K > 0 and d <= b:
        return ConstantSolution(
            ConstantRegime.NEVER_STOP, c, K, None, None,
            PiecewiseValueFunction.single(hold), StoppingRegion("never"),
        )
    if K < 0:
        g = c.gamma_minus
        x2, zeta, z_scaled = boundary_terms(d, b, g, K)
        vf = PiecewiseValueFunction(
            (x2,), (stop, Piece.of([(1.0, b), (g, z_scaled, x2)])), (True,), ("x2",)
        )
        logger.debug("constant mu=%g: stop below x2=%.10g", mu, x2)
        return ConstantSolution(
            ConstantRegime.STOP_BELOW, c, K, x2, zeta, vf, StoppingRegion("below", x2)
        )
    g = c.gamma_plus
    x4, zeta, z_scaled = boundary_terms(d, b, g, K)
    vf = PiecewiseValueFunction(
        (x4,), (Piece.of([(1.0, b), (g, z_scaled, x4)]), stop), (False,), ("x4",)
    )
    logger.debug("constant mu=%g: stop above x4=%.10g", mu, x4)
    return ConstantSolution(
        ConstantRegime.STOP_ABOVE, c, K, x4, zeta, vf, StoppingRegion("above", x4)
    )


def eval_constant(sol: ConstantSolution, x):
    """Value function at wealth ``x >= 0`` (scalar or array)."""
    return sol.value(x)
