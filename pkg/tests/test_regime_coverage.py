"""Randomized coverage of every regime tag with the structural checks."""

import collections
import warnings

import numpy as np

from annuitize import ConstantRegime, solve_constant, solve_shock
from annuitize.shock_solver import FINAL_REGIMES, MultipleRootsWarning
from annuitize.verify_oracles import structural_checks

from conftest import random_params

N_SAMPLES = 3000


def test_every_shock_regime_is_reached_and_passes_checks():
    rng = np.random.default_rng(2024)
    seen = collections.Counter()
    failures = []
    for _ in range(N_SAMPLES):
        p = random_params(rng)
        with warnings.catch_warnings():
            warnings.simplefilter("error", MultipleRootsWarning)
            sol = solve_shock(p)
        seen[sol.regime] += 1
        bad = [r for r in structural_checks(sol) if not r.passed]
        if bad:
            failures.append((sol.regime.value, p, bad))
    print("regime counts:", {r.value: n for r, n in sorted(seen.items(), key=lambda t: t[0].value)})
    assert not failures, failures[:3]
    missing = [r.value for r in FINAL_REGIMES if seen[r] == 0]
    assert not missing, f"regimes never reached: {missing}"


def test_every_constant_regime_is_reached_and_passes_checks():
    rng = np.random.default_rng(99)
    seen = collections.Counter()
    for _ in range(1500):
        p = random_params(rng)
        sol = solve_constant(p, p.mortality.mu_l)
        seen[sol.regime] += 1
        bad = [r for r in structural_checks(sol) if not r.passed]
        assert not bad, (p, bad)
    assert set(seen) == set(ConstantRegime)
