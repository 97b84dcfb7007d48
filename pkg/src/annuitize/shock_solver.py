"""Annuitization problem with a one-shot mortality shock.

After the shock the problem is the constant-force problem at ``mu_h``.  Before
the shock the value function solves

    0.5 sigma^2 x^2 V'' + (theta - alpha) x V' - r_l V
        + (alpha + nu mu_l) x + lambda_l V_h(x) = 0

on the continuation region and equals ``delta_l (x - K)`` on the stopping
region.  The post-shock value ``V_h`` is piecewise, so the pre-shock solution
picks up an extra breakpoint at the post-shock threshold whenever that
threshold lies inside the pre-shock continuation region.

Regime tags (``P32i`` ... ``P36never``) are determined by the sign of ``K``,
the order of ``delta_h`` and ``beta_h``, the sign of the relevant M-index and,
for the two implicit-threshold families, the order of the pre- and post-shock
thresholds.

Every pre-shock value below is written as ``delta_l (x - K) + W(x)`` where
``W`` is the excess of waiting over annuitizing now.  ``W`` solves
``(L - r_l) W = -M(x)`` with ``M`` the local attractiveness index, which fixes
the sign of the particular part of each formula.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .constant_solver import ConstantSolution, StoppingRegion, boundary_terms, solve_constant
from .core_model import DerivedCoefficients, ModelParams, derive_coefficients, validate
from .piecewise import Piece, PiecewiseValueFunction

logger = logging.getLogger(__name__)

__all__ = [
    "ShockRegime",
    "ShockSolution",
    "AlphaFunctions",
    "RegimeMismatch",
    "NoBracket",
    "MultipleRootsWarning",
    "BranchInconsistency",
    "RootNotConverged",
    "classify",
    "threshold_equation",
    "solve_threshold",
    "solve_shock",
    "eval_shock",
]


class ShockRegime(enum.Enum):
    P32i = "P32i"
    P32ii = "P32ii"
    P33i = "P33i"
    P33ii = "P33ii"  # ordering not yet resolved
    P33ii1 = "P33ii1"
    P33ii2 = "P33ii2"
    P34i = "P34i"
    P34ii = "P34ii"
    P35i = "P35i"  # ordering not yet resolved
    P35i1 = "P35i1"
    P35i2 = "P35i2"
    P35ii = "P35ii"
    P36stop = "P36stop"
    P36never = "P36never"

    @property
    def resolved(self) -> bool:
        return self not in (ShockRegime.P33ii, ShockRegime.P35i)

    @property
    def family(self) -> "ShockRegime":
        if self in (ShockRegime.P33ii1, ShockRegime.P33ii2):
            return ShockRegime.P33ii
        if self in (ShockRegime.P35i1, ShockRegime.P35i2):
            return ShockRegime.P35i
        return self


FINAL_REGIMES = tuple(r for r in ShockRegime if r.resolved)


class RegimeMismatch(ValueError):
    """A threshold equation was requested for a regime without one."""


class NoBracket(RuntimeError):
    """No sign change of the residual was found in the search range."""


class MultipleRootsWarning(RuntimeWarning):
    """The residual changes sign more than once on the diagnostic grid."""


class RootNotConverged(RuntimeError):
    pass


class BranchInconsistency(RuntimeError):
    """Neither or both ordering branches of an implicit regime are consistent.

    Attributes:
        candidates: Mapping from branch tag to its root (or the error text).
    """

    def __init__(self, message: str, candidates: dict):
        self.candidates = candidates
        super().__init__(f"{message}; candidates: {candidates}")


# ---------------------------------------------------------------------------
# classification


def classify(coeffs: DerivedCoefficients, K: float) -> ShockRegime:
    """Regime family from signs of ``K``, ``delta_h - beta_h`` and the M-index.

    For ``P33ii`` and ``P35i`` the threshold ordering is settled by
    :func:`solve_shock`.
    """
    dh, bh = coeffs.delta_h, coeffs.beta_h
    if K < 0:
        if dh >= bh:
            return ShockRegime.P32i if coeffs.M_delta_l <= 0 else ShockRegime.P32ii
        return ShockRegime.P33i if coeffs.M_beta_l <= 0 else ShockRegime.P33ii
    if K > 0:
        if dh <= bh:
            return ShockRegime.P34i if coeffs.M_beta_l < 0 else ShockRegime.P34ii
        return ShockRegime.P35i if coeffs.M_delta_l < 0 else ShockRegime.P35ii
    return ShockRegime.P36stop if coeffs.M_l <= 0 else ShockRegime.P36never


# ---------------------------------------------------------------------------
# helpers shared by the threshold equations and the value functions


def _post_threshold(coeffs: DerivedCoefficients, K: float) -> tuple[float, float, float]:
    """Post-shock threshold, homogeneous coefficient and its scaled form.

    For ``K < 0`` this is the stop-below threshold (exponent ``gamma_minus_h``),
    for ``K > 0`` the stop-above threshold (exponent ``gamma_plus_h``).  The
    third value is ``zeta * x**g``, the coefficient of ``(x / threshold)**g``.
    """
    g = coeffs.gamma_minus_h if K < 0 else coeffs.gamma_plus_h
    return boundary_terms(coeffs.delta_h, coeffs.beta_h, g, K)


def _unscale(coef: float, scale: float, p: float) -> float:
    """Coefficient of ``x**p`` given the coefficient of ``(x / scale)**p``."""
    if coef == 0.0:
        return 0.0
    v = math.log(abs(coef)) - p * math.log(scale)
    return math.copysign(math.exp(v) if v < 709.0 else math.inf, coef)


def _varpi2(c: DerivedCoefficients) -> float:
    gp, gm, hm = c.gamma_plus_l, c.gamma_minus_l, c.gamma_minus_h
    A, D, lam = c.drift - c.r_l, c.shock_gap, c.lambda_l
    return (
        ((gm - 1.0) / A + gm * (hm - 1.0) / (c.r_l * hm) + (hm - gm) / (hm * D))
        * lam * (c.delta_h - c.beta_h) / (gp - gm)
    )


def _pi2(c: DerivedCoefficients, K: float) -> float:
    hm = c.gamma_minus_h
    A, D, lam = c.drift - c.r_l, c.shock_gap, c.lambda_l
    return (1.0 / c.r_l + hm / (A * (hm - 1.0)) - 1.0 / (D * (hm - 1.0))) * lam * c.delta_h * K


def _varpi4(c: DerivedCoefficients) -> float:
    gp, gm, hp = c.gamma_plus_l, c.gamma_minus_l, c.gamma_plus_h
    A, D, lam = c.drift - c.r_l, c.shock_gap, c.lambda_l
    return (
        ((1.0 - gp) / A - gp * (hp - 1.0) / (c.r_l * hp) + (gp - hp) / (hp * D))
        * lam * (c.delta_h - c.beta_h) / (gp - gm)
    )


def _pi4(c: DerivedCoefficients, K: float) -> float:
    hp = c.gamma_plus_h
    A, D, lam = c.drift - c.r_l, c.shock_gap, c.lambda_l
    return (1.0 / c.r_l + hp / (A * (hp - 1.0)) - 1.0 / (D * (hp - 1.0))) * lam * c.delta_h * K


def threshold_equation(regime: ShockRegime, coeffs: DerivedCoefficients, K: float) -> Callable:
    """Residual whose root is the pre-shock threshold in an implicit regime.

    Args:
        regime: One of ``P33ii1``, ``P33ii2``, ``P35i1``, ``P35i2``.
        coeffs: Derived coefficients.
        K: Purchase cost.

    Returns:
        A vectorised callable ``F(x)``.

    Raises:
        RegimeMismatch: for regimes whose threshold is explicit or absent.
    """
    c = coeffs
    gp, gm = c.gamma_plus_l, c.gamma_minus_l
    hp, hm = c.gamma_plus_h, c.gamma_minus_h
    A, D, lam = c.drift - c.r_l, c.shock_gap, c.lambda_l
    dl, S, rl = c.delta_l, c.annuity_yield, c.r_l
    Mb, Md = c.M_beta_l, c.M_delta_l

    implicit = (ShockRegime.P33ii1, ShockRegime.P33ii2, ShockRegime.P35i1, ShockRegime.P35i2)
    if regime not in implicit:
        raise RegimeMismatch(f"regime {regime.value} has no implicit threshold equation")
    # Powers are taken relative to the post-shock threshold xh, so that
    # zeta_h x**h is written Zh (x/xh)**h with Zh = zeta_h xh**h.
    xh, _, Zh = _post_threshold(c, K)
    if regime is ShockRegime.P33ii1:
        a1 = (gm - 1.0) * Mb / (gm * A)
        a2 = lam * Zh * (gm - hm) / (gm * D)
        return lambda x: a1 * x + a2 * np.power(x / xh, hm) - dl * K
    if regime is ShockRegime.P33ii2:
        a1 = (gm - gp) / gm * _varpi2(c) * xh
        a2 = (gm - 1.0) / gm * Md / A
        return lambda x: a1 * np.power(x / xh, gp) + a2 * x - S / rl * K
    if regime is ShockRegime.P35i1:
        a1 = Mb * (gp - 1.0) / (gp * A)
        a2 = lam * Zh * (gp - hp) / (gp * D)
        return lambda x: a1 * x + a2 * np.power(x / xh, hp) - dl * K
    if regime is ShockRegime.P35i2:
        a1 = (gp - gm) / gp * _varpi4(c) * xh
        a2 = (gp - 1.0) / gp * Md / A
        return lambda x: a1 * np.power(x / xh, gm) + a2 * x - S / rl * K
    raise RegimeMismatch(f"regime {regime.value} has no implicit threshold equation")


# ---------------------------------------------------------------------------
# root finding

_GRID_PER_DECADE = 40


def solve_threshold(
    F: Callable,
    scale: float = 1.0,
    *,
    lower: Optional[float] = None,
    upper: Optional[float] = None,
    f_scale: float = 1.0,
) -> float:
    """Positive root of ``F`` by log-grid bracketing and Brent's method.

    The search starts on ``[1e-6, 1e2] * scale`` and widens the upper end by
    factors of ten up to ``1e12 * scale`` until the residual changes sign.
    The whole explored range is also scanned on a log grid so that additional
    sign changes are reported.

    Args:
        F: Residual, vectorised over numpy arrays.
        scale: Typical magnitude of the root.
        lower: Exclusive lower end of the admissible range.
        upper: Inclusive upper end of the admissible range.
        f_scale: Magnitude of the residual's terms, for the convergence test
            ``|F(root)| < 1e-12 * max(1, f_scale)``.

    Returns:
        The smallest root in the admissible range.

    Raises:
        NoBracket: if no sign change is found.
        RootNotConverged: if the final residual misses the tolerance.
    """
    lo = 1e-6 * scale if lower is None else lower
    limit = 1e12 * scale if upper is None else upper
    if not lo < limit:
        raise NoBracket(f"empty search range [{lo:.6g}, {limit:.6g}]")
    hi = min(max(1e2 * scale, lo * 10.0), limit) if upper is None else limit
    f_lo = float(F(lo))
    while np.sign(float(F(hi))) == np.sign(f_lo) and hi < limit:
        hi = min(hi * 10.0, limit)

    n = max(int(_GRID_PER_DECADE * math.log10(limit / lo)), 16)
    grid = np.geomspace(lo, limit, n + 1)
    with np.errstate(all="ignore"):
        vals = np.asarray(F(grid), dtype=float)
    signs = np.sign(vals)
    changes = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    exact = np.nonzero(vals == 0.0)[0]
    if len(changes) == 0 and len(exact) == 0:
        raise NoBracket(
            f"no sign change on [{lo:.6g}, {limit:.6g}] (F(lo)={vals[0]:.6g}, F(hi)={vals[-1]:.6g})"
        )
    if len(changes) + len(exact) > 1:
        roots = [f"[{grid[i]:.6g}, {grid[i + 1]:.6g}]" for i in changes]
        warnings.warn(
            f"residual changes sign {len(changes)} times on [{lo:.6g}, {limit:.6g}]: "
            + ", ".join(roots) + "; using the first",
            MultipleRootsWarning,
            stacklevel=2,
        )
    if len(exact) and (len(changes) == 0 or exact[0] <= changes[0]):
        root = float(grid[exact[0]])
    else:
        i = int(changes[0])
        root = brentq(F, grid[i], grid[i + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    resid = abs(float(F(root)))
    if resid > 1e-12 * max(1.0, abs(f_scale)):
        raise RootNotConverged(f"|F({root:.17g})| = {resid:.3g} above tolerance")
    return float(root)


# ---------------------------------------------------------------------------
# alpha functions of the never-stop regime with K > 0 and delta_h > beta_h


@dataclass(frozen=True)
class AlphaFunctions:
    """Expected discounted functionals of wealth relative to ``b = x4_h``.

    * ``alpha1(x) = int e^{-(r_l+alpha-theta) t} [beta_h P(X_t < b) +
      delta_h P(X^*_t >= b)] dt`` where ``X^*`` is the share-measure process,
      i.e. ``E int e^{-r_l t} [beta_h X_t 1{X_t<b} + delta_h X_t 1{X_t>=b}] dt / x``;
    * ``alpha2(x) = E int e^{-r_l t} (X_t/x)^{gamma_plus_h} 1{X_t < b} dt``;
    * ``alpha3(x) = E int e^{-r_l t} 1{X_t >= b} dt``.

    Each is the bounded solution of ``(L - r_l) u = -f`` for the matching
    indicator source, hence a particular part plus one power on each side of
    ``b`` chosen for C^1 continuity at ``b``.
    """

    b: float
    r: float
    drift: float
    gamma_plus: float
    gamma_minus: float
    gamma_plus_h: float
    beta_h: float
    delta_h: float
    shock_gap: float

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        return x, x >= self.b

    def alpha1(self, x):
        x, up = self._split(x)
        gp, gm, rt = self.gamma_plus, self.gamma_minus, self.r - self.drift
        jump = (self.delta_h - self.beta_h) / (rt * (gp - gm))
        with np.errstate(all="ignore"):
            below = self.beta_h / rt + jump * (1.0 - gm) * np.power(self.b / x, 1.0 - gp)
            above = self.delta_h / rt + jump * (1.0 - gp) * np.power(self.b / x, 1.0 - gm)
        out = np.where(up, above, below)
        return out if out.ndim else float(out)

    def alpha2(self, x):
        x, up = self._split(x)
        gp, gm, hp = self.gamma_plus, self.gamma_minus, self.gamma_plus_h
        k = -self.shock_gap  # lambda_l - Delta
        with np.errstate(all="ignore"):
            below = 1.0 / k + (gm - hp) / (k * (gp - gm)) * np.power(x / self.b, gp - hp)
            above = (gp - hp) / (k * (gp - gm)) * np.power(self.b / x, hp - gm)
        out = np.where(up, above, below)
        return out if out.ndim else float(out)

    def alpha3(self, x):
        x, up = self._split(x)
        gp, gm, r = self.gamma_plus, self.gamma_minus, self.r
        with np.errstate(all="ignore"):
            below = gm / (r * (gm - gp)) * np.power(x / self.b, gp)
            above = 1.0 / r + gp / (r * (gm - gp)) * np.power(x / self.b, gm)
        out = np.where(up, above, below)
        return out if out.ndim else float(out)

    def __call__(self, which: int, x):
        return {1: self.alpha1, 2: self.alpha2, 3: self.alpha3}[which](x)


# ---------------------------------------------------------------------------
# solution object


@dataclass(frozen=True)
class ShockSolution:
    """Pre- and post-shock solution.

    Attributes:
        regime: Final regime tag.
        coeffs: Derived coefficients used.
        K: Purchase cost.
        pre_shock: Pre-shock value function on ``[0, inf)``.
        post_shock: Constant-force solution at ``mu_h``.
        stopping_region_l: Pre-shock stopping region.
        threshold_l: Pre-shock threshold, if any.
        constants: Named coefficients of the pieces (``zeta``, ``varpi``...).
        alphas: The alpha functions in regime ``P35ii``.
        candidates: Roots of both ordering branches for implicit regimes.
    """

    regime: ShockRegime
    coeffs: DerivedCoefficients
    K: float
    pre_shock: PiecewiseValueFunction
    post_shock: ConstantSolution
    stopping_region_l: StoppingRegion
    threshold_l: Optional[float] = None
    constants: dict = field(default_factory=dict)
    alphas: Optional[AlphaFunctions] = None
    candidates: dict = field(default_factory=dict)

    @property
    def threshold_h(self) -> Optional[float]:
        return self.post_shock.threshold

    def source(self, x):
        """Running reward ``(alpha + nu mu_l) x + lambda_l V_h(x)`` before the shock."""
        c = self.coeffs
        a = c.beta_l * (c.r_l - c.drift)
        return a * np.asarray(x, dtype=float) + c.lambda_l * self.post_shock.value(x)


def eval_shock(sol: ShockSolution, x, state: str = "l"):
    """Value at wealth ``x`` in health state ``"l"`` (pre-shock) or ``"h"``."""
    if state == "l":
        return sol.pre_shock(x)
    if state == "h":
        return sol.post_shock.value(x)
    raise ValueError(f"state must be 'l' or 'h', got {state!r}")


# ---------------------------------------------------------------------------
# construction


def _try_root(F, **kw):
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", MultipleRootsWarning)
            root = solve_threshold(F, **kw)
        for w in caught:
            warnings.warn(w.message, w.category, stacklevel=3)
        return root, None
    except NoBracket as exc:
        return None, str(exc)


def solve_shock(params: ModelParams) -> ShockSolution:
    """Solve pre- and post-shock problems and assemble the value functions.

    Raises:
        BranchInconsistency: if an implicit regime has zero or two
            self-consistent ordering branches.
    """
    validate(params)
    c = derive_coefficients(params)
    K = float(params.pricing.K)
    post = solve_constant(params, params.mortality.mu_h)
    family = classify(c, K)

    gp, gm = c.gamma_plus_l, c.gamma_minus_l
    hp, hm = c.gamma_plus_h, c.gamma_minus_h
    A, D, lam = c.drift - c.r_l, c.shock_gap, c.lambda_l
    dl, bl, dh, bh = c.delta_l, c.beta_l, c.delta_h, c.beta_h
    S, rl = c.annuity_yield, c.r_l
    Md, Mb = c.M_delta_l, c.M_beta_l
    stop = Piece.of([(1.0, dl), (0.0, -dl * K)], stopping=True)

    def done(regime, pieces, bps=(), closed=(), labels=(), region=None, thr=None, **extra):
        vf = PiecewiseValueFunction(tuple(bps), tuple(pieces), tuple(closed), tuple(labels))
        logger.debug("shock regime %s, breakpoints %s", regime.value, bps)
        return ShockSolution(
            regime, c, K, vf, post, region, thr,
            constants=extra.get("constants", {}),
            alphas=extra.get("alphas"),
            candidates=extra.get("candidates", {}),
        )

    if family in (ShockRegime.P32i, ShockRegime.P33i, ShockRegime.P36stop):
        return done(family, [stop], region=StoppingRegion("everywhere"))

    if family is ShockRegime.P36never:
        return done(family, [Piece.of([(1.0, dl - c.M_l / A)])], region=StoppingRegion("zero"))

    if family is ShockRegime.P34ii:
        return done(family, [Piece.of([(1.0, dl - Mb / A)])], region=StoppingRegion("never"))

    if family is ShockRegime.P32ii:
        x1 = gm * S * A * K / ((gm - 1.0) * rl * Md)
        # smooth pasting gives zeta1 x1**gm = -Md x1 / (gm A)
        Z1 = -Md * x1 / (gm * A)
        z1 = _unscale(Z1, x1, gm)
        cont = Piece.of([(1.0, dl - Md / A), (0.0, -dl * K + S / rl * K), (gm, -Z1, x1)])
        return done(
            family, [stop, cont], [x1], [True], ["x1_l"],
            StoppingRegion("below", x1), x1, constants={"zeta1_l": z1},
        )

    if family is ShockRegime.P34i:
        x3 = gp * A * dl * K / ((gp - 1.0) * Mb)
        Z3 = -Mb * x3 / (gp * A)
        z3 = _unscale(Z3, x3, gp)
        cont = Piece.of([(1.0, dl - Mb / A), (gp, -Z3, x3)])
        return done(
            family, [cont, stop], [x3], [False], ["x3_l"],
            StoppingRegion("above", x3), x3, constants={"zeta3_l": z3},
        )

    xh, zh, Zh = _post_threshold(c, K)
    f_scale = max(abs(dl * K), abs(S / rl * K))

    if family is ShockRegime.P35ii:
        al = AlphaFunctions(xh, rl, c.drift, gp, gm, hp, bh, dh, D)
        rt = rl - c.drift
        jump = (dh - bh) / (rt * (gp - gm))
        k = -D
        below = Piece.of([
            (1.0, bl + lam * bh / rt),
            (gp, lam * jump * (1.0 - gm) * xh, xh),
            (hp, lam * Zh / k, xh),
            (gp, lam * Zh * (gm - hp) / (k * (gp - gm)), xh),
            (gp, -lam * dh * K * gm / (rl * (gm - gp)), xh),
        ])
        above = Piece.of([
            (1.0, bl + lam * dh / rt),
            (gm, lam * jump * (1.0 - gp) * xh, xh),
            (gm, lam * Zh * (gp - hp) / (k * (gp - gm)), xh),
            (0.0, -lam * dh * K / rl),
            (gm, -lam * dh * K * gp / (rl * (gm - gp)), xh),
        ])
        return done(
            family, [below, above], [xh], [False], ["x4_h"],
            StoppingRegion("never"), None, alphas=al, constants={"zeta4_h": zh},
        )

    if family is ShockRegime.P33ii:
        F1 = threshold_equation(ShockRegime.P33ii1, c, K)
        F2 = threshold_equation(ShockRegime.P33ii2, c, K)
        r1, e1 = _try_root(F1, scale=xh, lower=xh, f_scale=f_scale)
        r2, e2 = _try_root(F2, scale=xh, upper=xh, f_scale=f_scale)
        cands = {"P33ii1": r1 if r1 is not None else e1, "P33ii2": r2 if r2 is not None else e2}
        if (r1 is None) == (r2 is None):
            raise BranchInconsistency("P33ii: ordering branches", cands)
        if r1 is not None:
            xl = r1
            Zl = -Mb * xl / (gm * A) - hm * lam * Zh / (gm * D) * (xl / xh) ** hm
            zl = _unscale(Zl, xl, gm)
            cont = Piece.of([(1.0, dl - Mb / A), (gm, -Zl, xl), (hm, -lam * Zh / D, xh)])
            return done(
                ShockRegime.P33ii1, [stop, cont], [xl], [True], ["x2_l"],
                StoppingRegion("below", xl), xl,
                constants={"zeta2_l": zl, "zeta2_h": zh}, candidates=cands,
            )
        xl = r2
        w = _varpi2(c)
        pi = _pi2(c, K)
        Zhat = -(gp / gm) * w * xh * (xl / xh) ** gp - Md * xl / (gm * A)
        zhat = _unscale(Zhat, xl, gm)
        mid = Piece.of([
            (1.0, dl - Md / A), (0.0, -dl * K + S / rl * K),
            (gp, -w * xh, xh), (gm, -Zhat, xl),
        ])
        up = Piece.of([
            (1.0, dl - Mb / A),
            (gm, -(w * xh + pi), xh), (gm, -Zhat, xl),
            (hm, -lam * Zh / D, xh),
        ])
        return done(
            ShockRegime.P33ii2, [stop, mid, up], [xl, xh], [True, True], ["x2_l", "x2_h"],
            StoppingRegion("below", xl), xl,
            constants={"zeta2_h": zh, "zetahat2_l": zhat, "varpi2_l": w, "pi2_l": pi},
            candidates=cands,
        )

    # family is P35i
    F3 = threshold_equation(ShockRegime.P35i1, c, K)
    F4 = threshold_equation(ShockRegime.P35i2, c, K)
    r1, e1 = _try_root(F3, scale=xh, upper=xh * (1.0 - 1e-15), f_scale=f_scale)
    r2, e2 = _try_root(F4, scale=xh, lower=xh * (1.0 - 1e-15), f_scale=f_scale)
    cands = {"P35i1": r1 if r1 is not None else e1, "P35i2": r2 if r2 is not None else e2}
    if (r1 is None) == (r2 is None):
        raise BranchInconsistency("P35i: ordering branches", cands)
    if r1 is not None:
        xl = r1
        Zl = -Mb * xl / (gp * A) - lam * Zh * hp / (gp * D) * (xl / xh) ** hp
        zl = _unscale(Zl, xl, gp)
        cont = Piece.of([(1.0, dl - Mb / A), (gp, -Zl, xl), (hp, -lam * Zh / D, xh)])
        return done(
            ShockRegime.P35i1, [cont, stop], [xl], [False], ["x4_l"],
            StoppingRegion("above", xl), xl,
            constants={"zeta4_l": zl, "zeta4_h": zh}, candidates=cands,
        )
    xl = r2
    w = _varpi4(c)
    pi = _pi4(c, K)
    Zhat = -(gm / gp) * w * xh * (xl / xh) ** gm - Md * xl / (gp * A)
    zhat = _unscale(Zhat, xl, gp)
    low = Piece.of([
        (1.0, dl - Mb / A),
        (gp, -Zhat, xl), (gp, -(w * xh + pi), xh),
        (hp, -lam * Zh / D, xh),
    ])
    mid = Piece.of([
        (1.0, dl - Md / A), (0.0, -dl * K + S / rl * K),
        (gp, -Zhat, xl), (gm, -w * xh, xh),
    ])
    return done(
        ShockRegime.P35i2, [low, mid, stop], [xh, xl], [True, False], ["x4_h", "x4_l"],
        StoppingRegion("above", xl), xl,
        constants={"zeta4_h": zh, "zetahat4_l": zhat, "varpi4_l": w, "pi4_l": pi},
        candidates=cands,
    )
