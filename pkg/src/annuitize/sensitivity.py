"""Parameter sweeps over shock severity and shock intensity."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .core_model import (
    AssumptionViolation,
    ModelParams,
    NearDegenerateShock,
    derive_coefficients,
    validate,
)
from .shock_solver import solve_shock

logger = logging.getLogger(__name__)

__all__ = [
    "SweepSpec",
    "SweepRow",
    "NoSignChange",
    "SKIP_BAND",
    "with_parameter",
    "run_sweep",
    "find_crossing",
    "CROSSING_QUANTITIES",
]

# Points with |Delta - lambda_l| <= SKIP_BAND * max(Delta, lambda_l) are skipped.
SKIP_BAND = 1e-6
# Relative gaps below this are rounding noise and carry no sign.
ZERO_TOL = 1e-9


class NoSignChange(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    """A one-dimensional sweep.

    Attributes:
        parameter: ``"Delta"`` (shock severity) or ``"Lambda"`` (intensity).
        lo, hi: Range of the swept value, ``lo < hi``.
        n_points: Number of equally spaced points, at least 2.
        base: Parameters of every other quantity.
    """

    parameter: str
    lo: float
    hi: float
    n_points: int
    base: ModelParams

    def __post_init__(self):
        if self.parameter not in ("Delta", "Lambda"):
            raise ValueError(f"parameter must be 'Delta' or 'Lambda', got {self.parameter!r}")
        if not self.lo < self.hi:
            raise ValueError(f"degenerate sweep range [{self.lo}, {self.hi}]")
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)


@dataclass(frozen=True)
class SweepRow:
    """Result at one sweep point.

    ``status`` is ``"ok"``, ``"skipped"`` (inside the degenerate-shock band or
    otherwise invalid) or ``"failed"`` (the solver raised).  Thresholds are
    None when the regime has none or the point did not solve.
    """

    param: str
    value: float
    delta_l: Optional[float] = None
    delta_h: Optional[float] = None
    M_l: Optional[float] = None
    M_h: Optional[float] = None
    x_l: Optional[float] = None
    x_h: Optional[float] = None
    regime: str = ""
    status: str = "ok"
    message: str = ""


def with_parameter(base: ModelParams, parameter: str, value: float) -> ModelParams:
    """Copy of ``base`` with the shock severity or intensity replaced."""
    field = {"Delta": "delta", "Lambda": "lambda_l"}[parameter]
    mort = dataclasses.replace(base.mortality, **{field: float(value)})
    return dataclasses.replace(base, mortality=mort)


def _row(spec_param: str, base: ModelParams, value: float) -> SweepRow:
    params = with_parameter(base, spec_param, value)
    q = params.mortality
    if abs(q.delta - q.lambda_l) <= SKIP_BAND * max(q.delta, q.lambda_l):
        return SweepRow(spec_param, float(value), status="skipped", message="degenerate shock band")
    try:
        validate(params)
    except (NearDegenerateShock, AssumptionViolation) as exc:
        return SweepRow(spec_param, float(value), status="skipped", message=str(exc))
    c = derive_coefficients(params)
    common = dict(delta_l=c.delta_l, delta_h=c.delta_h, M_l=c.M_l, M_h=c.M_h)
    try:
        sol = solve_shock(params)
    except Exception as exc:  # a failed row must not stop the sweep
        logger.warning("sweep %s=%g failed: %s", spec_param, value, exc)
        return SweepRow(spec_param, float(value), **common, status="failed", message=str(exc))
    return SweepRow(
        spec_param, float(value), **common,
        x_l=sol.threshold_l, x_h=sol.threshold_h, regime=sol.regime.value,
    )


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """One row per grid point; failures are recorded, never raised."""
    return [_row(spec.parameter, spec.base, v) for v in spec.values()]


def _m_gap(row: SweepRow) -> Optional[float]:
    if row.M_l is None or row.M_h is None:
        return None
    scale = abs(row.M_l) + abs(row.M_h)
    return (row.M_h - row.M_l) / scale if scale > 0 else 0.0


def _threshold_gap(row: SweepRow) -> Optional[float]:
    if row.status != "ok" or row.x_l is None or row.x_h is None:
        return None
    return (row.x_l - row.x_h) / max(row.x_l, row.x_h)


CROSSING_QUANTITIES: dict[str, Callable[[SweepRow], Optional[float]]] = {
    "M": _m_gap,
    "threshold": _threshold_gap,
}


def find_crossing(
    spec: SweepSpec,
    f: Union[str, Callable[[SweepRow], Optional[float]]],
    *,
    rows: Optional[list[SweepRow]] = None,
    tol: float = 1e-6,
    zero_tol: float = ZERO_TOL,
) -> float:
    """Parameter value where the row quantity ``f`` changes sign.

    Rows where ``|f| <= zero_tol`` are treated as ties without a sign, so a
    quantity that only touches zero (for instance ``x_l - x_h`` at
    ``Delta = 0``, where both problems coincide) has no crossing.  The first
    strict sign change between consecutive signed rows is refined by
    bisection, re-solving the model at every midpoint, until the bracket is
    narrower than ``tol``.

    Args:
        spec: Sweep defining the grid.
        f: ``"M"`` for ``M_h - M_l``, ``"threshold"`` for ``x_l - x_h`` (both
            relative to the size of the compared quantities), or any callable
            returning a signed float (None when undefined).
        rows: Precomputed rows of ``spec`` to reuse.
        tol: Absolute tolerance on the parameter.
        zero_tol: Magnitude of ``f`` regarded as zero.

    Raises:
        NoSignChange: if no two consecutive usable rows differ in sign.
    """
    fn = CROSSING_QUANTITIES[f] if isinstance(f, str) else f
    rows = run_sweep(spec) if rows is None else rows
    usable = [(r.value, fn(r)) for r in rows]
    usable = [(v, q) for v, q in usable if q is not None and np.isfinite(q) and abs(q) > zero_tol]
    bracket = None
    for (v0, q0), (v1, q1) in zip(usable, usable[1:]):
        if np.sign(q0) != np.sign(q1):
            bracket = (v0, q0, v1, q1)
            break
    if bracket is None:
        raise NoSignChange(f"quantity {f!r} keeps its sign on [{spec.lo}, {spec.hi}]")
    a, qa, b, _ = bracket
    while b - a > tol:
        mid = 0.5 * (a + b)
        qm = fn(_row(spec.parameter, spec.base, mid))
        if qm is None:
            raise NoSignChange(f"quantity {f!r} undefined at {mid} inside the bracket")
        if abs(qm) <= zero_tol:
            return mid
        if np.sign(qm) == np.sign(qa):
            a, qa = mid, qm
        else:
            b = mid
    return 0.5 * (a + b)
