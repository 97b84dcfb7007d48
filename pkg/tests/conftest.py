import dataclasses

import numpy as np
import pytest

from annuitize import (
    AssumptionViolation,
    MarketParams,
    ModelParams,
    MortalityParams,
    PreferenceParams,
    PricingParams,
    table1_params,
    validate,
)

# Individual A: constant force equal to the pre-shock force of Individual B.
MU_A = 0.044623


def random_params(rng: np.random.Generator, k_sign=None) -> ModelParams:
    """A random valid parameter set covering every regime with positive odds."""
    while True:
        sign = rng.choice([-1, 0, 1]) if k_sign is None else k_sign
        p = ModelParams(
            MarketParams(rng.uniform(0.02, 0.15), rng.uniform(0.0, 0.1), rng.uniform(0.05, 0.4)),
            PreferenceParams(rng.uniform(0.01, 0.1), rng.uniform(0.0, 1.0)),
            PricingParams(rng.uniform(0.01, 0.1), rng.uniform(0.005, 0.12),
                          float(sign * 10 ** rng.uniform(1, 4))),
            MortalityParams(rng.uniform(0.005, 0.12), rng.uniform(0.0, 0.3), rng.uniform(0.01, 0.5)),
        )
        try:
            return validate(p)
        except AssumptionViolation:
            continue


def replace(params: ModelParams, **changes) -> ModelParams:
    """Copy with ``block__field=value`` keyword changes."""
    out = params
    for key, value in changes.items():
        block, name = key.split("__")
        out = dataclasses.replace(out, **{block: dataclasses.replace(getattr(out, block), **{name: value})})
    return out


# A parameter set in the never-stop regime with K > 0 and delta_h > beta_h.
P35II_PARAMS = ModelParams(
    MarketParams(theta=0.123905, alpha=0.064177, sigma=0.170695),
    PreferenceParams(rho=0.060380, nu=0.021520),
    PricingParams(rho_hat=0.060640, mu_hat=0.103532, K=141.24),
    MortalityParams(mu_l=0.023959, delta=0.114002, lambda_l=0.016374),
)


@pytest.fixture
def table1():
    return table1_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def regime_examples(n_max: int = 20000, seed: int = 0) -> dict:
    """First sampled parameter set for every shock regime tag."""
    from annuitize import solve_shock

    rng = np.random.default_rng(seed)
    found = {}
    for _ in range(n_max):
        p = random_params(rng)
        found.setdefault(solve_shock(p).regime.value, p)
        if len(found) == 12:
            break
    return found


@pytest.fixture(scope="session")
def examples():
    return regime_examples()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
