"""Path simulation of annuitization decisions and of lifetimes.

Wealth is simulated with exact log-normal steps on a uniform grid.  Each path
draws its shock time once; from the first grid time on or after the shock the
post-shock stopping region applies.  A path annuitizes at the first grid time
at which its wealth lies in the active region (closed comparisons).  Death
does not enter these statistics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ._kernels import REGION_CODES, crossing_chunk
from .constant_solver import ConstantSolution, StoppingRegion
from .core_model import ModelParams, MortalityParams
from .rng import block_generator, fsum_blocks

logger = logging.getLogger(__name__)

__all__ = [
    "SimConfig",
    "ThresholdPolicy",
    "SimStats",
    "simulate_policy",
    "life_expectancy",
    "policy_from_solution",
]

BLOCK_SIZE = 4096
_CHUNK = 256


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    dt: float = 1.0 / 252.0
    horizon: float = 20.0
    x0: float = 100_000.0
    seed: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not (0 < self.dt <= self.horizon):
            raise ValueError("need 0 < dt <= horizon")
        if not self.x0 > 0:
            raise ValueError("x0 must be positive")


@dataclass(frozen=True)
class ThresholdPolicy:
    """Stopping regions before and after the shock.

    ``region_h = None`` describes an individual whose mortality never jumps.
    """

    region_l: StoppingRegion
    region_h: Optional[StoppingRegion] = None


@dataclass(frozen=True)
class SimStats:
    """Summary of a path experiment.

    Fractions are over all paths; ``mean_time`` is conditional on
    annuitizing within the horizon.  ``se_*`` are Monte Carlo standard errors.
    """

    n_paths: int
    dt: float
    seed: int
    frac_total: float
    frac_pre: float
    frac_post: float
    mean_time: float
    se_frac: float
    se_pre: float
    se_post: float
    se_time: float
    mean_shock_time: Optional[float] = None
    se_shock_time: Optional[float] = None
    life_expectancy: Optional[float] = None


def policy_from_solution(sol) -> ThresholdPolicy:
    """Policy of a constant-force or shock solution."""
    if isinstance(sol, ConstantSolution):
        return ThresholdPolicy(sol.region)
    return ThresholdPolicy(sol.stopping_region_l, sol.post_shock.region)


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def simulate_policy(params: ModelParams, policy: ThresholdPolicy, cfg: SimConfig) -> SimStats:
    """Simulate annuitization under ``policy`` and summarise the entries.

    Paths are processed in blocks of ``BLOCK_SIZE``; block ``j`` uses its own
    keyed random stream, first for the shock times of its paths and then for
    the normal increments, so the result depends only on the configuration.
    """
    m = params.market
    drift = m.theta - m.alpha
    mu_dt = (drift - 0.5 * m.sigma ** 2) * cfg.dt
    sd_dt = m.sigma * math.sqrt(cfg.dt)
    n_steps = int(round(cfg.horizon / cfg.dt))
    shocked = policy.region_h is not None
    lam = params.mortality.lambda_l
    code_l, b_l = REGION_CODES[policy.region_l.kind], float(policy.region_l.threshold or 0.0)
    if shocked:
        code_h, b_h = REGION_CODES[policy.region_h.kind], float(policy.region_h.threshold or 0.0)
    else:
        code_h, b_h = REGION_CODES["never"], 0.0

    counts = np.zeros(2, dtype=np.int64)
    t_sum, t_sq, xi_sum, xi_sq = [], [], [], []
    n_blocks = -(-cfg.n_paths // BLOCK_SIZE)
    for blk in range(n_blocks):
        n = min(BLOCK_SIZE, cfg.n_paths - blk * BLOCK_SIZE)
        rng = block_generator(cfg.seed, blk, stream=2)
        if shocked:
            xi = rng.exponential(1.0 / lam, n)
            xi_step = np.ceil(xi / cfg.dt).astype(np.int64)
            xi_sum.append(xi.sum())
            xi_sq.append(np.square(xi).sum())
        else:
            xi_step = np.full(n, np.iinfo(np.int64).max)
        x = np.full(n, float(cfg.x0))
        alive = np.ones(n, dtype=np.bool_)
        stop_step = np.full(n, -1, dtype=np.int64)
        stop_state = np.full(n, -1, dtype=np.int64)
        k0 = 0
        while True:
            mm = min(_CHUNK, n_steps - k0)
            final = k0 + mm == n_steps
            idx = np.flatnonzero(alive)
            z = rng.standard_normal((idx.size, mm))
            crossing_chunk(idx, x, alive, stop_step, stop_state, xi_step, z, k0, final,
                           code_l, b_l, code_h, b_h, mu_dt, sd_dt)
            k0 += mm
            if final or not alive.any():
                break
        hit = stop_step >= 0
        counts[0] += np.count_nonzero(stop_state == 0)
        counts[1] += np.count_nonzero(stop_state == 1)
        times = stop_step[hit] * cfg.dt
        t_sum.append(times.sum())
        t_sq.append(np.square(times).sum())

    n = cfg.n_paths
    n_hit = int(counts.sum())
    frac_pre, frac_post = counts[0] / n, counts[1] / n
    frac_total = n_hit / n
    if n_hit:
        mean_t = fsum_blocks(t_sum) / n_hit
        var_t = max(fsum_blocks(t_sq) / n_hit - mean_t ** 2, 0.0) * n_hit / max(n_hit - 1, 1)
        se_t = math.sqrt(var_t / n_hit)
    else:
        mean_t, se_t = float("nan"), float("nan")
    mean_xi = se_xi = None
    if shocked:
        mean_xi = fsum_blocks(xi_sum) / n
        var_xi = max(fsum_blocks(xi_sq) / n - mean_xi ** 2, 0.0) * n / max(n - 1, 1)
        se_xi = math.sqrt(var_xi / n)
    logger.info("simulated %d paths: %.4f annuitize (pre %.4f, post %.4f)", n, frac_total, frac_pre, frac_post)
    return SimStats(
        n_paths=n, dt=cfg.dt, seed=cfg.seed,
        frac_total=frac_total, frac_pre=float(frac_pre), frac_post=float(frac_post),
        mean_time=mean_t,
        se_frac=_binomial_se(frac_total, n), se_pre=_binomial_se(frac_pre, n),
        se_post=_binomial_se(frac_post, n), se_time=se_t,
        mean_shock_time=mean_xi, se_shock_time=se_xi,
    )


def life_expectancy(
    mortality: Union[MortalityParams, float], n_sims: int, seed: int = 0
) -> tuple[float, float]:
    """Mean and standard error of the simulated remaining lifetime.

    Args:
        mortality: Two-state mortality, or a constant force as a float.
        n_sims: Number of simulated lives.
        seed: Seed of the keyed random stream.

    Each life draws a unit exponential ``E`` (the integrated hazard at death)
    and, for two-state mortality, a shock time ``xi``.  Death happens before
    the shock if ``E < mu_l xi``, at ``E / mu_l``; otherwise at
    ``xi + (E - mu_l xi) / mu_h``.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be at least 1")
    sums, sqs = [], []
    block = 1 << 16
    for blk in range(-(-n_sims // block)):
        n = min(block, n_sims - blk * block)
        rng = block_generator(seed, blk, stream=3)
        e = rng.exponential(1.0, n)
        if isinstance(mortality, MortalityParams):
            xi = rng.exponential(1.0 / mortality.lambda_l, n)
            early = e < mortality.mu_l * xi
            tau = np.where(early, e / mortality.mu_l, xi + (e - mortality.mu_l * xi) / mortality.mu_h)
        else:
            tau = e / float(mortality)
        sums.append(tau.sum())
        sqs.append(np.square(tau).sum())
    mean = fsum_blocks(sums) / n_sims
    var = max(fsum_blocks(sqs) / n_sims - mean * mean, 0.0) * n_sims / max(n_sims - 1, 1)
    return mean, math.sqrt(var / n_sims)
