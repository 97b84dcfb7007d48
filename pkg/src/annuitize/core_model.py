"""Model parameters, standing assumptions and derived coefficients.

Wealth follows dX = (theta - alpha) X dt + sigma X dB.  The individual
starts in a low-mortality state with force ``mu_l`` and jumps once, at an
exponential time with intensity ``lambda_l``, to ``mu_h = mu_l + delta``.
An annuity bought with wealth ``x`` pays ``(x - K) * (rho_hat + mu_hat)``
per year for life.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "AssumptionViolation",
    "NearDegenerateShock",
    "MarketParams",
    "PreferenceParams",
    "PricingParams",
    "MortalityParams",
    "ModelParams",
    "StateCoefficients",
    "DerivedCoefficients",
    "DEGENERACY_GUARD",
    "validate",
    "derive_coefficients",
    "annuity_rate",
    "characteristic_exponents",
    "table1_params",
]

# |delta - lambda_l| at or below this fraction of max(delta, lambda_l) is
# treated as the degenerate shock case, which the solvers do not handle.
DEGENERACY_GUARD = 1e-9


class AssumptionViolation(ValueError):
    """A standing assumption on the parameters does not hold.

    Attributes:
        name: Short identifier of the violated invariant, e.g.
            ``"well-posedness"`` or ``"market.sigma"``.
    """

    def __init__(self, name: str, message: str = ""):
        self.name = name
        super().__init__(f"{name}: {message}" if message else name)


class NearDegenerateShock(AssumptionViolation):
    """Shock severity and intensity coincide within the guard band."""

    def __init__(self, delta: float, lambda_l: float):
        super().__init__(
            "shock-degeneracy",
            f"|delta - lambda_l| = {abs(delta - lambda_l):.3g} is within the "
            f"degeneracy guard (delta={delta!r}, lambda_l={lambda_l!r})",
        )


@dataclass(frozen=True)
class MarketParams:
    """Fund return ``theta``, dividend rate ``alpha``, volatility ``sigma``."""

    theta: float
    alpha: float
    sigma: float


@dataclass(frozen=True)
class PreferenceParams:
    """Subjective discount rate ``rho`` and bequest weight ``nu``."""

    rho: float
    nu: float


@dataclass(frozen=True)
class PricingParams:
    """Insurer rate ``rho_hat``, pricing mortality ``mu_hat`` and cost ``K``.

    ``K > 0`` is an acquisition cost, ``K < 0`` a purchase incentive.
    """

    rho_hat: float
    mu_hat: float
    K: float


@dataclass(frozen=True)
class MortalityParams:
    """Two-state mortality force with a single upward jump."""

    mu_l: float
    delta: float
    lambda_l: float

    @property
    def mu_h(self) -> float:
        return self.mu_l + self.delta


@dataclass(frozen=True)
class ModelParams:
    market: MarketParams
    prefs: PreferenceParams
    pricing: PricingParams
    mortality: MortalityParams


@dataclass(frozen=True)
class StateCoefficients:
    """Coefficients attached to one health state.

    Attributes:
        mu: Mortality force in the state.
        lam: Jump intensity out of the state (zero after the shock).
        r: Effective discount rate rho + mu + lam.
        delta: Money's worth of the annuity.
        beta: Value per unit wealth of staying invested forever in a
            world with no further shock.
        gamma_plus: Root above one of the characteristic quadratic.
        gamma_minus: Negative root of the characteristic quadratic.
    """

    mu: float
    lam: float
    r: float
    delta: float
    beta: float
    gamma_plus: float
    gamma_minus: float


@dataclass(frozen=True)
class DerivedCoefficients:
    """Every scalar the solvers need, computed once from ``ModelParams``.

    ``M_delta_l`` and ``M_beta_l`` are the two branches of the attractiveness
    index ``M_l``; ``M_l`` itself uses whichever of ``delta_h`` and ``beta_h``
    is larger.  Both branches are kept because the pre-shock value function
    uses each on a different wealth range.
    """

    low: StateCoefficients
    high: StateCoefficients
    drift: float
    sigma: float
    annuity_yield: float
    M_l: float
    M_h: float
    M_delta_l: float
    M_beta_l: float

    # Flat aliases used throughout the solvers.
    @property
    def r_l(self) -> float:
        return self.low.r

    @property
    def r_h(self) -> float:
        return self.high.r

    @property
    def delta_l(self) -> float:
        return self.low.delta

    @property
    def delta_h(self) -> float:
        return self.high.delta

    @property
    def beta_l(self) -> float:
        return self.low.beta

    @property
    def beta_h(self) -> float:
        return self.high.beta

    @property
    def gamma_plus_l(self) -> float:
        return self.low.gamma_plus

    @property
    def gamma_minus_l(self) -> float:
        return self.low.gamma_minus

    @property
    def gamma_plus_h(self) -> float:
        return self.high.gamma_plus

    @property
    def gamma_minus_h(self) -> float:
        return self.high.gamma_minus

    @property
    def lambda_l(self) -> float:
        return self.low.lam

    @property
    def shock_gap(self) -> float:
        """``Delta - lambda_l``, the rate in the jump-adjusted terms."""
        return self.high.mu - self.low.mu - self.low.lam


def _require(cond: bool, name: str, message: str) -> None:
    if not cond:
        raise AssumptionViolation(name, message)


def validate(params: ModelParams) -> ModelParams:
    """Check every standing assumption and return ``params`` unchanged.

    Raises:
        AssumptionViolation: naming the first invariant that fails.
        NearDegenerateShock: if ``delta`` and ``lambda_l`` coincide within
            ``DEGENERACY_GUARD``.
    """
    m, p, c, q = params.market, params.prefs, params.pricing, params.mortality
    for name, value in [
        ("market.theta", m.theta), ("market.alpha", m.alpha), ("market.sigma", m.sigma),
        ("prefs.rho", p.rho), ("prefs.nu", p.nu),
        ("pricing.rho_hat", c.rho_hat), ("pricing.mu_hat", c.mu_hat), ("pricing.K", c.K),
        ("mortality.mu_l", q.mu_l), ("mortality.delta", q.delta),
        ("mortality.lambda_l", q.lambda_l),
    ]:
        _require(math.isfinite(value), name, "must be finite")
    _require(m.theta > 0, "market.theta", "must be positive")
    _require(m.alpha >= 0, "market.alpha", "must be non-negative")
    _require(m.sigma > 0, "market.sigma", "must be positive")
    _require(p.rho > 0, "prefs.rho", "must be positive")
    _require(0 <= p.nu <= 1, "prefs.nu", "must lie in [0, 1]")
    _require(c.rho_hat > 0, "pricing.rho_hat", "must be positive")
    _require(c.mu_hat > 0, "pricing.mu_hat", "must be positive")
    _require(q.mu_l > 0, "mortality.mu_l", "must be positive")
    _require(q.delta >= 0, "mortality.delta", "must be non-negative")
    _require(q.lambda_l > 0, "mortality.lambda_l", "must be positive")
    _require(
        m.theta - m.alpha - p.rho - q.mu_l < 0,
        "well-posedness",
        f"theta - alpha - rho - mu_l = {m.theta - m.alpha - p.rho - q.mu_l:.6g} must be negative",
    )
    if abs(q.delta - q.lambda_l) <= DEGENERACY_GUARD * max(q.delta, q.lambda_l):
        raise NearDegenerateShock(q.delta, q.lambda_l)
    return params


def characteristic_exponents(drift: float, sigma: float, r: float) -> tuple[float, float]:
    """Roots of 0.5 sigma^2 g (g - 1) + drift g - r = 0 for ``r > 0``.

    The smaller root is computed from the product of the roots to avoid
    cancellation.
    """
    s2 = sigma * sigma
    a = 0.5 - drift / s2
    g_plus = a + math.sqrt(a * a + 2.0 * r / s2)
    g_minus = -2.0 * r / (s2 * g_plus)
    return g_plus, g_minus


def derive_coefficients(params: ModelParams) -> DerivedCoefficients:
    """Compute rates, money's worths, fund indices, exponents and M-indices.

    ``params`` is assumed validated.
    """
    m, p, c, q = params.market, params.prefs, params.pricing, params.mortality
    drift = m.theta - m.alpha
    lam = q.lambda_l
    mu_l, mu_h = q.mu_l, q.mu_h
    y = c.rho_hat + c.mu_hat

    r_l = p.rho + mu_l + lam
    r_h = p.rho + mu_h
    delta_h = y / (p.rho + mu_h)
    delta_l = (p.rho + lam + mu_h) * y / ((p.rho + lam + mu_l) * (p.rho + mu_h))
    beta_l = (m.alpha + p.nu * mu_l) / (r_l - drift)
    beta_h = (m.alpha + p.nu * mu_h) / (r_h - drift)
    gp_l, gm_l = characteristic_exponents(drift, m.sigma, r_l)
    gp_h, gm_h = characteristic_exponents(drift, m.sigma, r_h)

    base = (delta_l - beta_l) * (drift - r_l)
    M_delta_l = base + lam * delta_h
    M_beta_l = base + lam * beta_h
    M_l = base + lam * max(delta_h, beta_h)
    M_h = (delta_h - beta_h) * (drift - r_h)

    return DerivedCoefficients(
        low=StateCoefficients(mu_l, lam, r_l, delta_l, beta_l, gp_l, gm_l),
        high=StateCoefficients(mu_h, 0.0, r_h, delta_h, beta_h, gp_h, gm_h),
        drift=drift,
        sigma=m.sigma,
        annuity_yield=y,
        M_l=M_l,
        M_h=M_h,
        M_delta_l=M_delta_l,
        M_beta_l=M_beta_l,
    )


def annuity_rate(x, pricing: PricingParams):
    """Yearly annuity payment bought with wealth ``x``."""
    return (x - pricing.K) * (pricing.rho_hat + pricing.mu_hat)


def table1_params() -> ModelParams:
    """Calibrated parameter set of the numerical study.

    Individual B is this set as is.  Individual A uses the same market and
    pricing with the constant force ``mortality.mu_l``.
    """
    mu_l = 0.044623
    return ModelParams(
        market=MarketParams(theta=0.094864, alpha=0.075891, sigma=0.154520),
        prefs=PreferenceParams(rho=0.059970, nu=0.25),
        pricing=PricingParams(rho_hat=0.059970, mu_hat=mu_l, K=-1500.0),
        mortality=MortalityParams(mu_l=mu_l, delta=0.069204 - mu_l, lambda_l=0.1),
    )

