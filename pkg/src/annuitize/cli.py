"""Command-line interface: ``annuitize <solve|simulate|sweep|verify>``.

Every command reads one JSON configuration document.  Required blocks are
``market``, ``prefs``, ``pricing`` and ``mortality``; ``sim``, ``sweep``,
``grid`` and ``verify`` are optional and only needed by the commands that use
them.  Unknown keys are rejected.  Values can be replaced from the command
line with ``--override block.key=value`` (the value is parsed as JSON when
possible).

Exit codes: 0 success, 1 verification failure, 2 configuration or assumption
error, 3 runtime or solver error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from . import __version__
from .constant_solver import ConstantSolution, solve_constant
from .core_model import (
    AssumptionViolation,
    MarketParams,
    ModelParams,
    MortalityParams,
    PreferenceParams,
    PricingParams,
    derive_coefficients,
    validate,
)
from .monte_carlo import SimConfig, life_expectancy, policy_from_solution, simulate_policy
from .sensitivity import CROSSING_QUANTITIES, NoSignChange, SweepSpec, find_crossing, run_sweep
from .shock_solver import ShockRegime, solve_shock
from .verify_oracles import (
    CheckResult,
    McOracleConfig,
    alpha_quadrature,
    mc_value_oracle,
    moneys_worth_quadrature,
    perturb_threshold,
    structural_checks,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


# ---------------------------------------------------------------------------
# configuration

_NUM, _INT, _STR = "number", "integer", "string"

# block -> key -> (type, default); a default of ... marks a required key and a
# default of None a key that may be null (chosen automatically)
_SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "market": {"theta": (_NUM, ...), "alpha": (_NUM, ...), "sigma": (_NUM, ...)},
    "prefs": {"rho": (_NUM, ...), "nu": (_NUM, ...)},
    "pricing": {"rho_hat": (_NUM, ...), "mu_hat": (_NUM, ...), "K": (_NUM, ...)},
    "mortality": {"mu_l": (_NUM, ...), "delta": (_NUM, ...), "lambda_l": (_NUM, ...)},
    "sim": {
        "n_paths": (_INT, 100_000), "dt": (_NUM, 1.0 / 252.0), "horizon": (_NUM, 20.0),
        "x0": (_NUM, 100_000.0), "seed": (_INT, 0),
    },
    "sweep": {"parameter": (_STR, ...), "lo": (_NUM, ...), "hi": (_NUM, ...), "n_points": (_INT, ...)},
    "grid": {"x_lo": (_NUM, 1.0), "x_hi": (_NUM, 1e7), "n": (_INT, 200)},
    "verify": {
        "threshold_scale": (_NUM, 1.0), "mc_paths": (_INT, 10_000), "mc_dt": (_NUM, 1.0 / 252.0),
        "mc_horizon": (_NUM, None), "x0": (_NUM, 100_000.0),
    },
}
_REQUIRED_BLOCKS = ("market", "prefs", "pricing", "mortality")


def _coerce(path: str, kind: str, value: Any, nullable: bool = False):
    if value is None and nullable:
        return None
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a {kind}")
    if kind == _INT:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{path}: expected an integer")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    return value


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration: model parameters plus optional command blocks.

    ``blocks`` maps each present block name to its complete key-value dict,
    defaults filled in, so that :meth:`to_dict` re-parses to an equal config.
    """

    blocks: dict

    @classmethod
    def from_dict(cls, doc: Any) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        for name in doc:
            if name not in _SCHEMA:
                raise ConfigError(f"{name}: unknown key")
        blocks = {}
        for name, schema in _SCHEMA.items():
            if name not in doc:
                if name in _REQUIRED_BLOCKS:
                    raise ConfigError(f"{name}: required")
                continue
            raw = doc[name]
            if not isinstance(raw, dict):
                raise ConfigError(f"{name}: expected an object")
            for key in raw:
                if key not in schema:
                    raise ConfigError(f"{name}.{key}: unknown key")
            block = {}
            for key, (kind, default) in schema.items():
                if key in raw:
                    block[key] = _coerce(f"{name}.{key}", kind, raw[key], default is None)
                elif default is ...:
                    raise ConfigError(f"{name}.{key}: required")
                else:
                    block[key] = default
            blocks[name] = block
        return cls(blocks)

    def to_dict(self) -> dict:
        return {name: dict(block) for name, block in self.blocks.items()}

    def block(self, name: str) -> Optional[dict]:
        return self.blocks.get(name)

    @property
    def params(self) -> ModelParams:
        b = self.blocks
        return ModelParams(
            market=MarketParams(**b["market"]),
            prefs=PreferenceParams(**b["prefs"]),
            pricing=PricingParams(**b["pricing"]),
            mortality=MortalityParams(**b["mortality"]),
        )


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``block.key=value`` overrides to a raw config document."""
    doc = json.loads(json.dumps(doc))
    for item in overrides:
        path, sep, text = item.partition("=")
        parts = path.strip().split(".")
        if not sep or len(parts) != 2 or not all(parts):
            raise ConfigError(f"override {item!r}: expected block.key=value")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        block = doc.setdefault(parts[0], {})
        if not isinstance(block, dict):
            raise ConfigError(f"{parts[0]}: expected an object")
        block[parts[1]] = value
    return doc


def _defaults(name: str) -> dict:
    return {key: default for key, (_, default) in _SCHEMA[name].items()}


def load_config(path: str, overrides: list[str], seed: Optional[int]) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    doc = apply_overrides(doc, overrides)
    if seed is not None and "sim" in doc and isinstance(doc["sim"], dict):
        doc["sim"]["seed"] = seed
    return RunConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# output helpers


def _num(v):
    """JSON-safe float: shortest round-trip repr, non-finite values as strings."""
    if v is None:
        return None
    if isinstance(v, (bool, str)):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _csv_field(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(header: list[str], rows: list[list], comments: list[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_field(v) for v in row])
    for line in comments:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _record(command: str, cfg: RunConfig, seed: Optional[int], results: dict) -> str:
    rec = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": cfg.to_dict(),
        "results": results,
    }
    return json.dumps(rec, indent=2) + "\n"


def _seed(cfg: RunConfig, seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    sim = cfg.block("sim")
    return sim["seed"] if sim else 0


# ---------------------------------------------------------------------------
# commands


def _solve(args, params: ModelParams):
    if args.constant:
        mu = params.mortality.mu_l if args.mu is None else args.mu
        return solve_constant(params, mu)
    validate(params)
    return solve_shock(params)


def _solution_summary(sol) -> dict:
    if isinstance(sol, ConstantSolution):
        c = sol.coeffs
        return {
            "model": "constant",
            "mu": _num(c.mu),
            "regime": sol.regime.value,
            "threshold": _num(sol.threshold),
            "region": sol.region.kind,
            "delta": _num(c.delta),
            "beta": _num(c.beta),
            "gamma_plus": _num(c.gamma_plus),
            "gamma_minus": _num(c.gamma_minus),
            "zeta": _num(sol.zeta),
        }
    c = sol.coeffs
    return {
        "model": "shock",
        "regime": sol.regime.value,
        "x_l": _num(sol.threshold_l),
        "x_h": _num(sol.threshold_h),
        "region_l": sol.stopping_region_l.kind,
        "region_h": sol.post_shock.region.kind,
        "post_shock_regime": sol.post_shock.regime.value,
        "delta_l": _num(c.delta_l),
        "delta_h": _num(c.delta_h),
        "beta_l": _num(c.beta_l),
        "beta_h": _num(c.beta_h),
        "M_l": _num(c.M_l),
        "M_h": _num(c.M_h),
        "M_delta_l": _num(c.M_delta_l),
        "M_beta_l": _num(c.M_beta_l),
        "gamma_plus_l": _num(c.gamma_plus_l),
        "gamma_minus_l": _num(c.gamma_minus_l),
        "gamma_plus_h": _num(c.gamma_plus_h),
        "gamma_minus_h": _num(c.gamma_minus_h),
        "constants": {k: _num(v) for k, v in sol.constants.items()},
    }


def _value_table(sol, grid: dict) -> list[dict]:
    xs = np.geomspace(grid["x_lo"], grid["x_hi"], grid["n"])
    if isinstance(sol, ConstantSolution):
        v = np.asarray(sol.value(xs))
        stop = np.asarray(sol.value.is_stopping(xs))
        return [{"x": _num(x), "V": _num(a), "stop": bool(s)} for x, a, s in zip(xs, v, stop)]
    vl, vh = np.asarray(sol.pre_shock(xs)), np.asarray(sol.post_shock.value(xs))
    sl = np.asarray(sol.pre_shock.is_stopping(xs))
    sh = np.asarray(sol.post_shock.value.is_stopping(xs))
    return [
        {"x": _num(x), "V_l": _num(a), "V_h": _num(b), "stop_l": bool(p), "stop_h": bool(q)}
        for x, a, b, p, q in zip(xs, vl, vh, sl, sh)
    ]


def cmd_solve(args, cfg: RunConfig) -> int:
    sol = _solve(args, cfg.params)
    results = _solution_summary(sol)
    grid = cfg.block("grid")
    if grid is not None:
        results["value_table"] = _value_table(sol, grid)
    _emit(_record("solve", cfg, args.seed, results), args.out)
    logger.info("regime %s", results["regime"])
    return EXIT_OK


SIM_COLUMNS = ["n_paths", "dt", "frac_total", "frac_pre", "frac_post",
               "mean_time", "se_frac", "se_time", "seed"]


def cmd_simulate(args, cfg: RunConfig) -> int:
    sim = cfg.block("sim")
    if sim is None:
        raise ConfigError("sim: required by simulate")
    sim_cfg = SimConfig(**sim)  # range errors are runtime errors (exit 3)
    params = cfg.params
    sol = _solve(args, params)
    stats = simulate_policy(params, policy_from_solution(sol), sim_cfg)
    if isinstance(sol, ConstantSolution):
        le, le_se = life_expectancy(sol.coeffs.mu, 1_000_000, seed=sim_cfg.seed)
    else:
        le, le_se = life_expectancy(params.mortality, 1_000_000, seed=sim_cfg.seed)
    row = [getattr(stats, col) for col in SIM_COLUMNS]
    comments = [
        f"regime = {sol.regime.value}",
        f"life_expectancy = {le!r}",
        f"life_expectancy_se = {le_se!r}",
    ]
    _emit(_csv_text(SIM_COLUMNS, [row], comments), args.out)
    print(
        f"{stats.frac_total:.4f} of paths annuitize within {sim_cfg.horizon:g} yr "
        f"(pre-shock {stats.frac_pre:.4f}, post-shock {stats.frac_post:.4f}); "
        f"mean time {stats.mean_time:.3f} yr; life expectancy {le:.3f} yr",
        file=sys.stderr,
    )
    return EXIT_OK


SWEEP_COLUMNS = ["param", "value", "delta_l", "delta_h", "M_l", "M_h", "x_l", "x_h", "regime", "status"]


def cmd_sweep(args, cfg: RunConfig) -> int:
    sw = cfg.block("sweep")
    if sw is None:
        raise ConfigError("sweep: required by sweep")
    spec = SweepSpec(sw["parameter"], sw["lo"], sw["hi"], sw["n_points"], cfg.params)
    rows = run_sweep(spec)
    if not any(r.status == "ok" for r in rows):
        raise RuntimeError("every sweep row failed or was skipped")
    table = [[getattr(r, col) for col in SWEEP_COLUMNS] for r in rows]
    comments = []
    for name in CROSSING_QUANTITIES:
        try:
            comments.append(f"crossing {name} = {find_crossing(spec, name, rows=rows)!r}")
        except NoSignChange as exc:
            comments.append(f"crossing {name} = none ({exc})")
    _emit(_csv_text(SWEEP_COLUMNS, table, comments), args.out)
    return EXIT_OK


def _verify_checks(args, cfg: RunConfig) -> list[CheckResult]:
    params = cfg.params
    ver = cfg.block("verify") or _defaults("verify")
    grid = cfg.block("grid") or _defaults("grid")
    sol = _solve(args, params)
    checks: list[CheckResult] = []

    # money's worth against quadrature of the survival expectation
    if isinstance(sol, ConstantSolution):
        # a shock of size zero leaves the force at mu in the post-shock state
        flat = dataclasses.replace(params, mortality=MortalityParams(sol.coeffs.mu, 0.0, 1.0))
        q = moneys_worth_quadrature(flat, "h")
        checks.append(_rel("moneys_worth", sol.coeffs.delta, q, 1e-8))
    else:
        c = derive_coefficients(params)
        checks.append(_rel("moneys_worth.delta_l", c.delta_l, moneys_worth_quadrature(params, "l"), 1e-8))
        checks.append(_rel("moneys_worth.delta_h", c.delta_h, moneys_worth_quadrature(params, "h"), 1e-8))

    scale = ver["threshold_scale"]
    if scale != 1.0:
        sol = perturb_threshold(sol, scale)
    checks.extend(structural_checks(sol, x_lo=grid["x_lo"], x_hi=grid["x_hi"], n=grid["n"]))

    if not isinstance(sol, ConstantSolution) and sol.regime is ShockRegime.P35ii:
        b = sol.threshold_h
        for x in (0.25 * b, 0.8 * b, 1.25 * b, 4.0 * b):
            for which in (1, 2, 3):
                checks.append(_rel(f"alpha{which}[x={x!r}]", sol.alphas(which, x),
                                   alpha_quadrature(params, sol, x, which), 1e-6))

    region = sol.region if isinstance(sol, ConstantSolution) else sol.stopping_region_l
    if region.kind in ("below", "above"):
        mu = sol.coeffs.mu if isinstance(sol, ConstantSolution) else None
        horizon = ver["mc_horizon"]
        if horizon is None:
            # long enough that discounting leaves less than 1e-6 of the value
            r = sol.coeffs.r if mu is not None else sol.coeffs.r_l
            horizon = math.log(1e6) / (r - sol.coeffs.drift)
        mc = McOracleConfig(n_paths=ver["mc_paths"], dt=ver["mc_dt"], horizon=horizon,
                            seed=_seed(cfg, args.seed))
        x0 = ver["x0"]
        est, se = mc_value_oracle(params, region, x0, mc, mu=mu)
        closed = float(sol.value(x0) if isinstance(sol, ConstantSolution) else sol.pre_shock(x0))
        z = abs(est - closed) / se if se > 0 else (0.0 if est == closed else math.inf)
        checks.append(CheckResult("mc_value[x0]", z, 3.0, bool(z <= 3.0),
                                  f"closed={closed!r} mc={est!r} se={se!r}"))
    else:
        logger.info("stopping region %r has no boundary; Monte Carlo check skipped", region.kind)
    return checks


def _rel(name: str, closed: float, oracle: float, tol: float) -> CheckResult:
    err = abs(closed - oracle) / max(abs(oracle), 1e-300)
    return CheckResult(name, err, tol, bool(err <= tol), f"closed={closed!r} oracle={oracle!r}")


def cmd_verify(args, cfg: RunConfig) -> int:
    checks = _verify_checks(args, cfg)
    rows = [[c.name, c.value, c.tol, "PASS" if c.passed else "FAIL", c.detail] for c in checks]
    _emit(_csv_text(["check", "value", "tol", "status", "detail"], rows), args.out)
    failed = [c for c in checks if not c.passed]
    for c in failed:
        print(f"FAIL {c.name}: {c.value:.3g} > {c.tol:g} {c.detail}", file=sys.stderr)
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annuitize", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--override", action="append", default=[], metavar="K=V",
                       help="replace block.key with a value (repeatable)")
        p.add_argument("--out", help="write the output here instead of stdout")
        p.add_argument("--seed", type=int, help="random seed (overrides sim.seed)")
        if name != "sweep":
            p.add_argument("--constant", action="store_true",
                           help="use the constant-force model instead of the shock model")
            p.add_argument("--mu", type=float,
                           help="constant mortality force (default mortality.mu_l)")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "mu", None) is not None and not args.constant:
        print("error: --mu requires --constant", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.override, args.seed)
        _ = cfg.params  # constructs the parameter objects
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, AssumptionViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # solver and simulation failures
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
