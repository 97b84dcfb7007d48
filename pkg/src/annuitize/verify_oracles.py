"""Independent numerical checks for the closed-form solutions.

* quadrature of the survival expectation for the money's worth;
* quadrature of the time-integral definitions of the alpha functions;
* Monte Carlo valuation of a given stopping rule;
* residual of the free-boundary ODE on a wealth grid.

None of these reuse the closed-form solver formulas they check, apart from
the post-shock value used as an input to the pre-shock problem.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .constant_solver import StoppingRegion, solve_constant
from .core_model import ModelParams, MortalityParams
from ._kernels import REGION_CODES, value_chunk
from .piecewise import Piece, PiecewiseValueFunction
from .rng import block_generator, fsum_blocks

_CHUNK = 256

logger = logging.getLogger(__name__)

__all__ = [
    "QuadratureConfig",
    "McOracleConfig",
    "QuadratureNonConvergence",
    "GridTouchesBreakpoint",
    "survival_expectation",
    "moneys_worth_quadrature",
    "alpha_quadrature",
    "mc_value_oracle",
    "ode_residual",
    "CheckResult",
    "check_value_function",
    "structural_checks",
    "perturb_threshold",
]


class QuadratureNonConvergence(RuntimeError):
    pass


class GridTouchesBreakpoint(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings of the adaptive quadrature.

    ``t_max`` of None means ``min(60 / (rho + mu_min), 2000)``.
    """

    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_subdivisions: int = 500
    t_max: Optional[float] = None


@dataclass(frozen=True)
class McOracleConfig:
    n_paths: int = 20_000
    dt: float = 1.0 / 252.0
    horizon: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.n_paths < 10_000:
            raise ValueError("n_paths must be at least 10_000")
        if not 0 < self.dt <= 1.0 / 252.0:
            raise ValueError("dt must lie in (0, 1/252]")
        if self.horizon < self.dt:
            raise ValueError("horizon must be at least one step")


def survival_expectation(mortality: MortalityParams, t: float, u, state: str = "l"):
    """``E[exp(-int_t^{t+u} mu_s ds)]`` given the health state at time ``t``.

    The force is time-homogeneous, so ``t`` does not enter.  Before the shock
    the answer mixes the two exponentials of surviving with and without the
    jump.
    """
    u = np.asarray(u, dtype=float)
    mu_l, mu_h, lam = mortality.mu_l, mortality.mu_h, mortality.lambda_l
    if state == "h":
        out = np.exp(-mu_h * u)
    elif state == "l":
        d = mortality.delta
        out = d / (d - lam) * np.exp(-(mu_l + lam) * u) - lam / (d - lam) * np.exp(-mu_h * u)
    else:
        raise ValueError(f"state must be 'l' or 'h', got {state!r}")
    return out if out.ndim else float(out)


def _t_max(cfg: QuadratureConfig, rate: float) -> float:
    if cfg.t_max is not None:
        return cfg.t_max
    return min(60.0 / rate, 2000.0)


def _quad(f, a, b, cfg: QuadratureConfig, what: str, points=None) -> float:
    val, err, *rest = integrate.quad(
        f, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
        limit=cfg.max_subdivisions, points=points, full_output=1,
    )
    if len(rest) > 1 and err > max(cfg.abs_tol, 1e3 * cfg.rel_tol * abs(val)):
        raise QuadratureNonConvergence(f"{what}: error estimate {err:.3g} on value {val:.6g}")
    return val


def moneys_worth_quadrature(
    params: ModelParams, state: str = "l", cfg: QuadratureConfig = QuadratureConfig()
) -> float:
    """Money's worth as ``(rho_hat + mu_hat) int e^{-rho u} S(u) du``.

    ``S`` is :func:`survival_expectation`; the integral is split at ``t_max``
    and the exponential tail beyond it is added analytically.
    """
    rho = params.prefs.rho
    mort = params.mortality
    y = params.pricing.rho_hat + params.pricing.mu_hat
    T = _t_max(cfg, rho + mort.mu_l)
    body = _quad(
        lambda u: math.exp(-rho * u) * survival_expectation(mort, 0.0, u, state),
        0.0, T, cfg, "money's worth",
    )
    # Tail: each exponential a e^{-k u} contributes a e^{-(rho+k) T} / (rho+k).
    if state == "h":
        tail = math.exp(-(rho + mort.mu_h) * T) / (rho + mort.mu_h)
    else:
        d, lam = mort.delta, mort.lambda_l
        k1, k2 = rho + mort.mu_l + lam, rho + mort.mu_h
        tail = d / (d - lam) * math.exp(-k1 * T) / k1 - lam / (d - lam) * math.exp(-k2 * T) / k2
    return y * (body + tail)


def alpha_quadrature(params: ModelParams, sol, x: float, which: int,
                     cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Time-integral definition of ``alpha_which(x)`` by quadrature.

    Uses ``d1, d2 = (ln(x/b) + (theta - alpha +- sigma^2/2) t) / (sigma sqrt t)``
    with ``b`` the post-shock threshold ``x4_h`` of ``sol``:

    * ``alpha1 = int e^{-(r_l+alpha-theta) t} [beta_h N(-d1) + delta_h N(d1)] dt``
    * ``alpha2 = int e^{(Delta-lambda_l) t} N(-d2 - sigma gamma_plus_h sqrt t) dt``
    * ``alpha3 = int e^{-r_l t} N(d2) dt``
    """
    if x <= 0:
        raise ValueError("x must be positive")
    c = sol.coeffs
    b = sol.post_shock.threshold
    sig, drift = c.sigma, c.drift
    lx = math.log(x / b)
    hp = c.gamma_plus_h

    def d(t, sign):
        return (lx + (drift + sign * 0.5 * sig * sig) * t) / (sig * math.sqrt(t))

    if which == 1:
        rate = c.r_l - drift
        f = lambda t: math.exp(-rate * t) * (c.beta_h * ndtr(-d(t, 1)) + c.delta_h * ndtr(d(t, 1)))
        bound = max(c.beta_h, c.delta_h) / rate
    elif which == 2:
        rate = c.r_l
        g = c.shock_gap
        f = lambda t: math.exp(g * t) * ndtr(-d(t, -1) - sig * hp * math.sqrt(t))
        # the integrand is E[(X_t/x)^hp 1{X_t<b}] e^{-r_l t} <= (b/x)^hp e^{-r_l t}
        bound = max(1.0, (b / x) ** hp) / rate
    elif which == 3:
        rate = c.r_l
        f = lambda t: math.exp(-rate * t) * ndtr(d(t, -1))
        bound = 1.0 / rate
    else:
        raise ValueError("which must be 1, 2 or 3")

    T = _t_max(cfg, rate)
    while bound * math.exp(-rate * T) > cfg.abs_tol and T < 1e5:
        T *= 2.0
    # the integrand varies on the time scale (ln(x/b)/sigma)^2 near t = 0
    t_knee = min((lx / sig) ** 2, T / 2)
    pts = [p for p in (t_knee / 10, t_knee, 10 * t_knee) if 0 < p < T]
    return _quad(f, 0.0, T, cfg, f"alpha{which}", points=pts or None)


def _policy_problem(params: ModelParams, mu: Optional[float]):
    """Rate, payoff slope, linear reward and post-shock solution (or None)."""
    c_hat = params.pricing
    y = c_hat.rho_hat + c_hat.mu_hat
    m, p = params.market, params.prefs
    if mu is not None:
        r = p.rho + mu
        return r, y / r, m.alpha + p.nu * mu, None
    q = params.mortality
    lam = q.lambda_l
    r = p.rho + q.mu_l + lam
    # money's worth from the survival expectation, not the solver formula
    delta_l = y * (q.delta / (q.delta - lam) / (p.rho + q.mu_l + lam)
                   - lam / (q.delta - lam) / (p.rho + q.mu_h))
    return r, delta_l, m.alpha + p.nu * q.mu_l, solve_constant(params, q.mu_h)


def mc_value_oracle(
    params: ModelParams,
    policy: StoppingRegion,
    x0: float,
    cfg: McOracleConfig = McOracleConfig(),
    *,
    mu: Optional[float] = None,
    block_size: int = 4096,
) -> tuple[float, float]:
    """Monte Carlo value of the stopping rule ``policy`` started at ``x0``.

    Simulates exact log-normal wealth steps and stops at the first grid time
    where ``policy.contains(X)``.  The objective is

        int_0^tau e^{-r t} [(alpha + nu mu) X_t + extra(X_t)] dt
            + e^{-r tau} delta (X_tau - K)

    where, before the shock, ``r = rho + mu_l + lambda_l`` and
    ``extra = lambda_l V(., mu_h)``.  With ``mu`` given, the constant-force
    problem is valued instead (``extra = 0``).  The linear reward is
    integrated exactly between grid times given the left endpoint; the extra
    reward by the trapezoid rule.  Paths still running at ``cfg.horizon``
    contribute nothing further, so the horizon must make
    ``exp(-(r - theta + alpha) * horizon)`` negligible.

    Returns:
        ``(estimate, standard_error)``.
    """
    if x0 <= 0:
        raise ValueError("x0 must be positive")
    r, delta, a, post = _policy_problem(params, mu)
    K = params.pricing.K
    sig = params.market.sigma
    drift = params.market.theta - params.market.alpha
    dt = cfg.dt
    n_steps = int(round(cfg.horizon / dt))
    mu_dt = (drift - 0.5 * sig * sig) * dt
    sd_dt = sig * math.sqrt(dt)
    lin = -math.expm1(-(r - drift) * dt) / (r - drift)
    code, b = REGION_CODES[policy.kind], float(policy.threshold or 0.0)
    if post is None:
        use_extra, lam = False, 0.0
        flat = PiecewiseValueFunction.single(Piece.of([(1.0, 0.0)])).flat()
    else:
        use_extra, lam = True, params.mortality.lambda_l
        flat = post.value.flat()

    def run_block(blk):
        n = min(block_size, cfg.n_paths - blk * block_size)
        rng = block_generator(cfg.seed, blk, stream=1)
        x = np.full(n, float(x0))
        acc = np.zeros(n)
        alive = np.ones(n, dtype=np.bool_)
        k0 = 0
        while True:
            m = min(_CHUNK, n_steps - k0)
            final = k0 + m == n_steps
            idx = np.flatnonzero(alive)
            z = rng.standard_normal((idx.size, m))
            value_chunk(idx, x, acc, alive, z, k0, final, code, b, delta, K, a, lin, r, dt,
                        mu_dt, sd_dt, lam, use_extra, *flat)
            k0 += m
            if final or not alive.any():
                break
        return math.fsum(acc), math.fsum(acc * acc)

    n_blocks = -(-cfg.n_paths // block_size)
    parts = [run_block(j) for j in range(n_blocks)]
    n = cfg.n_paths
    mean = fsum_blocks(p[0] for p in parts) / n
    var = max(fsum_blocks(p[1] for p in parts) / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, math.sqrt(var / n)


def ode_residual(
    vf: PiecewiseValueFunction,
    source: Callable,
    r: float,
    grid,
    *,
    drift: float,
    sigma: float,
    normalize: bool = False,
    method: str = "analytic",
) -> float:
    """Largest residual of ``0.5 s^2 x^2 V'' + drift x V' - r V - source(x)``.

    ``source`` is the right-hand side, so for the annuitization problem it is
    minus the running reward.

    Args:
        vf: Piecewise value function.
        source: Right-hand side as a function of wealth.
        r: Discount rate of the equation.
        grid: Wealth points, all inside one continuation region.
        drift: ``theta - alpha``.
        sigma: Volatility.
        normalize: Divide each residual by ``1 + |V(x)|`` before the max.
        method: ``"analytic"`` uses exact piece derivatives; ``"fd"`` uses
            central differences with relative step ``1e-4``.

    Raises:
        GridTouchesBreakpoint: if a grid point lies within ``1e-6 x`` of a
            breakpoint of ``vf`` (``2e-4 x`` for ``"fd"``, so that no stencil
            straddles it).
    """
    x = np.asarray(grid, dtype=float)
    margin = 2e-4 if method == "fd" else 1e-6
    for b in vf.breakpoints:
        if np.any(np.abs(x - b) <= margin * x):
            raise GridTouchesBreakpoint(f"grid point within {margin:g} relative of breakpoint {b:.10g}")
    v = np.asarray(vf(x), dtype=float)
    if method == "analytic":
        v1 = vf.derivative(x, 1)
        v2 = vf.derivative(x, 2)
    elif method == "fd":
        h = 1e-4 * x
        up, dn = vf(x + h), vf(x - h)
        v1 = (up - dn) / (2 * h)
        v2 = (up - 2 * v + dn) / (h * h)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = 0.5 * sigma * sigma * x * x * v2 + drift * x * v1 - r * v - np.asarray(source(x), dtype=float)
    res = np.abs(res)
    if normalize:
        res = res / (1.0 + np.abs(v))
    return float(np.max(res))


# ---------------------------------------------------------------------------
# structural checks of a solved value function


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification check."""

    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""


def _check(name, value, tol, detail=""):
    value = float(value)
    return CheckResult(name, value, tol, bool(np.isfinite(value) and value <= tol), detail)


def _log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    # stay clear of the interval ends so no point touches a breakpoint
    return np.geomspace(lo * (1 + 1e-5), hi * (1 - 1e-5), n)


def _intervals(vf: PiecewiseValueFunction, x_lo: float, x_hi: float):
    edges = [0.0, *vf.breakpoints, math.inf]
    for i, piece in enumerate(vf.pieces):
        lo, hi = max(edges[i], x_lo), min(edges[i + 1], x_hi)
        if lo < hi:
            yield i, piece, lo, hi


def check_value_function(
    vf: PiecewiseValueFunction,
    *,
    payoff_slope: float,
    K: float,
    r: float,
    drift: float,
    sigma: float,
    running: Callable,
    label: str,
    x_lo: float = 1.0,
    x_hi: float = 1e7,
    n: int = 200,
) -> list[CheckResult]:
    """Value matching, smooth pasting, interior C^1, ODE residual, dominance.

    Args:
        vf: Value function to check.
        payoff_slope: ``delta`` of the payoff ``delta (x - K)``.
        K: Purchase cost.
        r: Discount rate of the free-boundary equation.
        drift, sigma: Wealth dynamics.
        running: Running reward ``f(x)``; the equation is
            ``(L - r) V + f = 0`` on the continuation region.
        label: Prefix of the check names.
        x_lo, x_hi, n: Wealth window and points per continuation interval.
    """
    out: list[CheckResult] = []
    d = payoff_slope

    def payoff(x):
        return d * (x - K)

    for k, b in enumerate(vf.breakpoints):
        left, right = vf.pieces[k], vf.pieces[k + 1]
        v_l, v_r = vf.one_sided(k, 0)
        s_l, s_r = vf.one_sided(k, 1)
        name = vf.labels[k] if k < len(vf.labels) else f"b{k}"
        if left.stopping != right.stopping:
            cont_v, cont_s = (v_r, s_r) if left.stopping else (v_l, s_l)
            pay = payoff(b)
            out.append(_check(f"{label}.value_matching[{name}]",
                              abs(cont_v - pay) / (1.0 + abs(pay)), 1e-9, f"b={b!r}"))
            out.append(_check(f"{label}.smooth_pasting[{name}]",
                              abs(cont_s - d) / max(abs(d), 1e-300), 1e-6, f"b={b!r}"))
        elif not left.stopping:
            out.append(_check(f"{label}.continuity[{name}]",
                              abs(v_l - v_r) / (1.0 + abs(v_l)), 1e-9, f"b={b!r}"))
            out.append(_check(f"{label}.c1[{name}]",
                              abs(s_l - s_r) / max(abs(s_l), abs(s_r), 1e-300), 1e-6, f"b={b!r}"))

    worst = 0.0
    for i, piece, lo, hi in _intervals(vf, x_lo, x_hi):
        if piece.stopping:
            continue
        grid = _log_grid(lo, hi, n)
        res = ode_residual(vf, lambda x: -np.asarray(running(x)), r, grid,
                           drift=drift, sigma=sigma, normalize=True)
        worst = max(worst, res)
    out.append(_check(f"{label}.ode_residual", worst, 1e-6))

    xs = np.geomspace(x_lo, x_hi, 2000)
    xs = np.concatenate([[0.0], xs, np.asarray(vf.breakpoints, dtype=float)])
    gap = np.asarray(vf(xs)) - payoff(xs)
    viol = np.max(np.maximum(-gap, 0.0) / (1.0 + np.abs(payoff(xs))))
    out.append(_check(f"{label}.dominance", viol, 1e-9))
    return out


def structural_checks(sol, *, x_lo: float = 1.0, x_hi: float = 1e7, n: int = 200) -> list[CheckResult]:
    """All structural checks for a constant-force or shock solution.

    For a shock solution both the pre-shock function (with the post-shock
    value in its running reward) and the post-shock function are checked.
    """
    from .constant_solver import ConstantSolution

    if isinstance(sol, ConstantSolution):
        c = sol.coeffs
        return check_value_function(
            sol.value, payoff_slope=c.delta, K=sol.K, r=c.r, drift=c.drift, sigma=c.sigma,
            running=lambda x: sol.running_reward * np.asarray(x), label="constant",
            x_lo=x_lo, x_hi=x_hi, n=n,
        )
    c = sol.coeffs
    pre = check_value_function(
        sol.pre_shock, payoff_slope=c.delta_l, K=sol.K, r=c.r_l, drift=c.drift, sigma=c.sigma,
        running=sol.source, label="pre_shock", x_lo=x_lo, x_hi=x_hi, n=n,
    )
    post = structural_checks(sol.post_shock, x_lo=x_lo, x_hi=x_hi, n=n)
    return pre + [dataclasses.replace(r, name=r.name.replace("constant", "post_shock", 1)) for r in post]


def perturb_threshold(sol, factor: float):
    """Copy of ``sol`` whose pre-shock boundary is moved to ``factor * b``.

    The homogeneous term of the continuation pieces is shifted so that value
    matching still holds at the new boundary and the ODE is still solved;
    only smooth pasting breaks.  Used for fault-injection tests.
    """
    from .constant_solver import ConstantSolution

    is_const = isinstance(sol, ConstantSolution)
    vf = sol.value if is_const else sol.pre_shock
    stops = [k for k in range(len(vf.breakpoints))
             if vf.pieces[k].stopping != vf.pieces[k + 1].stopping]
    if len(stops) != 1 or factor == 1.0:
        return sol
    k = stops[0]
    b = vf.breakpoints[k]
    nb = b * factor
    below = vf.pieces[k].stopping  # stopping region lies below the boundary
    if is_const:
        g = sol.coeffs.gamma_minus if below else sol.coeffs.gamma_plus
        d = sol.coeffs.delta
    else:
        g = sol.coeffs.gamma_minus_l if below else sol.coeffs.gamma_plus_l
        d = sol.coeffs.delta_l
    adj = vf.pieces[k + 1] if below else vf.pieces[k]
    shift = d * (nb - sol.K) - float(adj(nb))  # coefficient of (x / nb)**g
    pieces = []
    for i, piece in enumerate(vf.pieces):
        if not piece.stopping:
            piece = Piece.of([*piece.terms, (g, shift, nb)])
        pieces.append(piece)
    bps = list(vf.breakpoints)
    bps[k] = nb
    if any(q <= p for p, q in zip(bps, bps[1:])):
        raise ValueError("perturbed boundary crosses another breakpoint")
    new_vf = PiecewiseValueFunction(tuple(bps), tuple(pieces), vf.left_closed, vf.labels)
    region = StoppingRegion(("below" if below else "above"), nb)
    if is_const:
        return dataclasses.replace(sol, value=new_vf, threshold=nb, region=region)
    return dataclasses.replace(sol, pre_shock=new_vf, threshold_l=nb, stopping_region_l=region)
