import time

import numpy as np
import pytest

from annuitize import table1_params
from annuitize.sensitivity import (
    NoSignChange,
    SweepRow,
    SweepSpec,
    find_crossing,
    run_sweep,
    with_parameter,
)

DELTA_MAX = 0.229350


@pytest.fixture(scope="module")
def delta_sweep():
    spec = SweepSpec("Delta", 0.0, DELTA_MAX, 200, table1_params())
    t0 = time.perf_counter()
    rows = run_sweep(spec)
    return spec, rows, time.perf_counter() - t0


@pytest.fixture(scope="module")
def lambda_sweep():
    spec = SweepSpec("Lambda", 0.01, 0.5, 200, table1_params())
    return spec, run_sweep(spec)


def test_sweep_spec_validation():
    base = table1_params()
    with pytest.raises(ValueError):
        SweepSpec("Delta", 0.1, 0.1, 10, base)
    with pytest.raises(ValueError):
        SweepSpec("Delta", 0.2, 0.1, 10, base)
    with pytest.raises(ValueError):
        SweepSpec("Delta", 0.0, 0.1, 1, base)
    with pytest.raises(ValueError):
        SweepSpec("rho", 0.0, 0.1, 10, base)


def test_with_parameter():
    base = table1_params()
    assert with_parameter(base, "Delta", 0.3).mortality.delta == 0.3
    assert with_parameter(base, "Lambda", 0.2).mortality.lambda_l == 0.2
    assert with_parameter(base, "Lambda", 0.2).mortality.delta == base.mortality.delta


def test_delta_sweep_rows(delta_sweep):
    spec, rows, elapsed = delta_sweep
    assert len(rows) == 200 and elapsed < 30.0
    ok = [r for r in rows if r.status == "ok"]
    assert len(ok) >= 198
    for r in rows:
        if r.status != "ok":
            assert r.message


def test_post_shock_threshold_decreases_in_severity(delta_sweep):
    _, rows, _ = delta_sweep
    xh = np.array([r.x_h for r in rows if r.status == "ok"])
    assert np.all(np.diff(xh) < 0)


def test_delta_max_is_short_remaining_life():
    q = with_parameter(table1_params(), "Delta", DELTA_MAX).mortality
    assert 1.0 / q.mu_h == pytest.approx(3.65, abs=0.005)


def test_money_worth_decreases_in_severity(delta_sweep):
    _, rows, _ = delta_sweep
    ok = [r for r in rows if r.delta_l is not None]
    assert np.all(np.diff([r.delta_l for r in ok]) < 0)
    assert np.all(np.diff([r.delta_h for r in ok]) < 0)


def test_sensitivity_ratio_by_central_differences(delta_sweep):
    spec, rows, _ = delta_sweep
    p = spec.base.prefs.rho
    q = spec.base.mortality
    v = np.array([r.value for r in rows])
    dl = np.array([r.delta_l for r in rows])
    dh = np.array([r.delta_h for r in rows])
    ratio = np.abs(np.gradient(dh, v)[1:-1]) / np.abs(np.gradient(dl, v)[1:-1])
    expected = (p + q.lambda_l + q.mu_l) / q.lambda_l
    assert np.max(np.abs(ratio / expected - 1.0)) < 1e-3


def test_post_shock_threshold_ignores_intensity(lambda_sweep):
    _, rows = lambda_sweep
    xh = [r.x_h for r in rows if r.status == "ok"]
    assert len(xh) > 150
    assert np.ptp(xh) <= 1e-9 * xh[0]


def test_skip_band_row_is_marked():
    base = table1_params()
    lam = base.mortality.lambda_l
    rows = run_sweep(SweepSpec("Delta", lam - 0.01, lam + 0.01, 3, base))
    assert rows[1].status == "skipped" and "degenerate" in rows[1].message
    assert rows[0].status == rows[2].status == "ok"


def test_m_crossing_in_severity(delta_sweep):
    spec, rows, _ = delta_sweep
    assert find_crossing(spec, "M", rows=rows) == pytest.approx(0.01755, abs=1e-4)


def test_m_crossing_in_intensity(lambda_sweep):
    spec, rows = lambda_sweep
    assert find_crossing(spec, "M", rows=rows) == pytest.approx(0.125210, abs=1e-4)


def test_threshold_gap_keeps_sign(delta_sweep, lambda_sweep):
    # x_l - x_h only touches zero at Delta = 0 where both problems coincide
    for spec, rows in (delta_sweep[:2], lambda_sweep):
        with pytest.raises(NoSignChange):
            find_crossing(spec, "threshold", rows=rows)


def test_crossing_on_custom_quantity():
    spec = SweepSpec("Lambda", 0.01, 0.5, 20, table1_params())
    target = 0.2
    got = find_crossing(spec, lambda r: r.value - target, tol=1e-9)
    assert got == pytest.approx(target, abs=1e-8)


def test_failed_rows_are_recorded(monkeypatch):
    import annuitize.sensitivity as sens

    def boom(params):
        if params.mortality.delta > 0.05:
            raise RuntimeError("solver exploded")
        return real(params)

    real = sens.solve_shock
    monkeypatch.setattr(sens, "solve_shock", boom)
    rows = run_sweep(SweepSpec("Delta", 0.0, 0.09, 5, table1_params()))
    assert [r.status for r in rows] == ["ok", "ok", "ok", "failed", "failed"]
    assert rows[-1].message == "solver exploded" and rows[-1].delta_l is not None
    assert isinstance(rows[0], SweepRow)
