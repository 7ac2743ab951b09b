"""Command-line front end.

Configuration is a flat key-value text file with dotted keys
(``growth.mu_max=1.0``), overridable on the command line with repeated
``--set key=value`` flags; defaults reproduce the reference scenario
(Monod with mu_max = 1/h and ks = 1 g/L, r = 0.3, d = 0.1, s_bar = 1 g/L).
Every JSON output embeds the SHA-256 of the resolved configuration and the
units of each quantity, and identical configuration plus seed produces
byte-identical outputs.

Exit codes: 0 success, 2 configuration error, 3 horizon reached without
hitting the target, 4 partial or runtime failure (failed table cells, an
infeasible search, or a violated control contract), 5 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import FullParams, PhysicalParams, ReducedParams, SimConfig, integrate, to_reduced
from .errors import ContractViolation, InfeasibleSearch, NumericalFailure
from .growth import DrainTime, Monod, best_setpoint_grid, best_treatment_rate_grid
from .pmp import VerifyTolerances, hjb_residual_zero_diffusion, verify_extremal
from .strategies import (
    ConstantSetpoint,
    CorruptedTwoPump,
    OnePump,
    OptimalTwoPump,
    best_constant_search,
    parse_strategy,
)
from .value import value_grid, value_infinite_diffusion, value_simulated, value_zero_diffusion

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HORIZON = 3
EXIT_PARTIAL = 4
EXIT_VERIFY = 5

UNITS = {"time": "h", "concentration": "g/L", "rate": "1/h"}

_DEFAULTS = {
    "growth.kind": "monod",
    "growth.mu_max": "1.0",
    "growth.ks": "1.0",
    "params.r": "0.3",
    "params.d": "0.1",
    "params.s_bar": "1.0",
    "params.epsilon": "0.01",
    "sim.rel_tol": "1e-10",
    "sim.abs_tol": "1e-12",
    "sim.event_tol": "1e-10",
    "sim.t_max": "",
    "sim.diag_tol": "",
    "full.x_r0": "1.0",
    "full.s_r0": "",
    "seed": "42",
}

_PHYS_KEYS = ("phys.v1", "phys.v2", "phys.v_r", "phys.D")
_KNOWN_KEYS = set(_DEFAULTS) | set(_PHYS_KEYS) | {"x0", "strategy", "out.prefix"}


class ConfigError(Exception):
    pass


def parse_config_file(path: str) -> dict:
    items = {}
    try:
        with open(path) as fh:
            for ln, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{ln}: expected key=value, got {raw.strip()!r}")
                key, val = line.split("=", 1)
                items[key.strip()] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return items


def _parse_float(items: dict, key: str):
    raw = items.get(key, "")
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key}={raw!r} is not a number") from exc


@dataclass
class Scenario:
    model: object
    reduced: ReducedParams
    full: FullParams
    sim: SimConfig
    seed: int
    items: dict

    def config_hash(self) -> str:
        canon = "\n".join(f"{k}={self.items[k]}" for k in sorted(self.items))
        return hashlib.sha256(canon.encode()).hexdigest()

    def meta(self) -> dict:
        return {"config_sha256": self.config_hash(), "units": UNITS}


def build_scenario(config_path, overrides) -> Scenario:
    items = dict(_DEFAULTS)
    if config_path:
        items.update(parse_config_file(config_path))
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"--set expects key=value, got {ov!r}")
        key, val = ov.split("=", 1)
        items[key.strip()] = val.strip()

    unknown = set(items) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    if items.get("growth.kind", "monod") != "monod":
        raise ConfigError(
            f"unsupported growth.kind {items.get('growth.kind')!r} (CLI supports 'monod'; "
            "user models are available through the library API)"
        )
    try:
        model = Monod(float(items["growth.mu_max"]), float(items["growth.ks"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    s_bar = _parse_float(items, "params.s_bar")
    phys_given = [k for k in _PHYS_KEYS if k in items]
    if phys_given and len(phys_given) < len(_PHYS_KEYS):
        raise ConfigError(f"physical volumes need all of {_PHYS_KEYS}, got {phys_given}")
    try:
        if phys_given:
            for k in ("params.r", "params.d", "params.epsilon"):
                if k in items and items[k] != _DEFAULTS[k]:
                    raise ConfigError(
                        "give either physical volumes (phys.*) or normalized "
                        f"parameters ({k}), not both"
                    )
            phys = PhysicalParams(
                v1=_parse_float(items, "phys.v1"),
                v2=_parse_float(items, "phys.v2"),
                v_r=_parse_float(items, "phys.v_r"),
                D=_parse_float(items, "phys.D"),
            )
            reduced, full = to_reduced(phys, s_bar)
        else:
            reduced = ReducedParams(
                r=_parse_float(items, "params.r"),
                d=_parse_float(items, "params.d"),
                s_bar=s_bar,
            )
            full = FullParams(reduced.r, reduced.d, reduced.s_bar, _parse_float(items, "params.epsilon"))
        sim = SimConfig(
            rel_tol=_parse_float(items, "sim.rel_tol"),
            abs_tol=_parse_float(items, "sim.abs_tol"),
            event_tol=_parse_float(items, "sim.event_tol"),
            t_max=_parse_float(items, "sim.t_max"),
            diag_tol=_parse_float(items, "sim.diag_tol"),
        )
        x_r0 = _parse_float(items, "full.x_r0")
        if x_r0 is not None and x_r0 <= 0.0:
            raise ConfigError(f"full.x_r0 must be positive, got {x_r0}")
        seed = int(items["seed"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return Scenario(model=model, reduced=reduced, full=full, sim=sim, seed=seed, items=items)


def _parse_point(text: str) -> tuple:
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse point {text!r}") from exc
    if len(parts) != 2:
        raise ConfigError(f"a point needs two coordinates, got {text!r}")
    return tuple(parts)


def _parse_list(text: str, conv=float) -> list:
    try:
        return [conv(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}") from exc


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")


def _resolve_strategy(spec: str, scenario: Scenario, x0):
    if spec == "bestconst":
        alpha, zeta, _ = best_constant_search(x0, scenario.reduced, scenario.model, scenario.sim)
        return ConstantSetpoint(alpha, zeta * scenario.reduced.s_bar)
    return parse_strategy(spec)


def cmd_simulate(scenario: Scenario, args) -> int:
    x0 = _parse_point(args.x0 or scenario.items.get("x0", "") or "4,2")
    spec = args.strategy or scenario.items.get("strategy", "") or "optimal"
    strategy = _resolve_strategy(spec, scenario, x0)
    prefix = args.out or scenario.items.get("out.prefix", "") or "trajectory"
    traj = integrate("reduced", strategy, x0, scenario.reduced, scenario.model, scenario.sim)
    traj.to_csv(prefix + ".csv")
    payload = dict(traj.events_dict(), **scenario.meta(), strategy=spec, x0=list(x0))
    _write_json(prefix + ".events.json", payload)
    print(f"wrote {prefix}.csv and {prefix}.events.json (t_f={traj.t_f}, reason={traj.reason})")
    return EXIT_OK if traj.reason == "target" else EXIT_HORIZON


def cmd_value(scenario: Scenario, args) -> int:
    model, reduced = scenario.model, scenario.reduced
    d = reduced.d if args.d is None else args.d
    drain = DrainTime(model, reduced.s_bar)
    if args.point:
        x = _parse_point(args.point)
        if args.which == "v0":
            val = value_zero_diffusion(x, drain, reduced.r)
        elif args.which == "vinf":
            val = value_infinite_diffusion(x, drain, reduced.r)
        else:
            val = value_simulated(x, d, reduced, model, scenario.sim)
        print(repr(val))
        return EXIT_OK
    if not args.grid:
        raise ConfigError("value needs --point or --grid")
    domain = _parse_list(args.grid)
    if len(domain) != 4:
        raise ConfigError(f"--grid needs lo1,hi1,lo2,hi2, got {args.grid!r}")
    resolution = _parse_list(args.resolution or "21,21", int)
    grid = value_grid(args.which, domain, resolution, reduced, model, scenario.sim, d=d)
    prefix = args.out or scenario.items.get("out.prefix", "") or f"grid_{args.which}"
    grid.to_csv(prefix + ".csv")
    meta = dict(grid.meta, **scenario.meta())
    _write_json(prefix + ".json", meta)
    print(f"wrote {prefix}.csv and {prefix}.json")
    return EXIT_OK


def _compare_cell(x0, d, s_bar, scenario: Scenario) -> dict:
    model = scenario.model
    p = replace(scenario.reduced, d=d, s_bar=s_bar)
    cell = {"x0": list(x0), "d": d, "s_bar": s_bar}
    v_d = value_simulated(x0, d, p, model, scenario.sim)
    cell["v_d"] = v_d

    alpha, zeta, t_cst = best_constant_search(x0, p, model, scenario.sim)
    cell["t_cst"] = t_cst
    cell["cst_alpha"] = alpha
    cell["cst_sr_star"] = zeta * s_bar

    # One pump on the initially dirtier patch (tie: patch 1), matching the
    # published comparisons; the alternative patch is reported alongside.
    active = 1 if x0[0] >= x0[1] else 2
    times = {}
    for patch in (1, 2):
        try:
            tr = integrate("reduced", OnePump(patch), x0, p, model, scenario.sim)
            times[patch] = tr.t_f if tr.t_f is not None else float("inf")
        except (NumericalFailure, ContractViolation):
            times[patch] = float("inf")
    t_one = times[active]
    cell["t_one"] = None if np.isinf(t_one) else t_one
    cell["t_one_patch"] = active
    cell["t_one_other_patch"] = None if np.isinf(times[3 - active]) else times[3 - active]
    cell["inc_cst_pct"] = (t_cst - v_d) / v_d * 100.0
    cell["inc_one_pct"] = None if np.isinf(t_one) else (t_one - v_d) / v_d * 100.0
    return cell


def _format_compare_table(cells, s_bar, d_list) -> str:
    lines = []
    lines.append(f"Time comparisons (hours), s_bar = {s_bar} g/L")
    head = f"{'':16s}" + "".join(f"{'V_d, d=' + str(d):>16s}" for d in d_list)
    head += "".join(f"{'T*cst, d=' + str(d):>16s}" for d in d_list)
    head += "".join(f"{'T*one, d=' + str(d):>16s}" for d in d_list)
    lines.append(head)
    by_x0 = {}
    for c in cells:
        if c["s_bar"] == s_bar:
            by_x0.setdefault(tuple(c["x0"]), {})[c["d"]] = c
    for x0, group in by_x0.items():
        def col(key, d):
            c = group.get(d)
            if c is None or c.get(key) is None:
                return f"{'-':>16s}"
            return f"{c[key]:16.2f}"

        row = f"s(0)={str(x0):11s}"
        row += "".join(col("v_d", d) for d in d_list)
        row += "".join(col("t_cst", d) for d in d_list)
        row += "".join(col("t_one", d) for d in d_list)
        lines.append(row)
        inc = f"{'  increase (%)':16s}" + f"{'':16s}" * len(d_list)
        for key in ("inc_cst_pct", "inc_one_pct"):
            for d in d_list:
                c = group.get(d)
                if c is None or c.get(key) is None:
                    inc += f"{'-':>16s}"
                else:
                    inc += f"{'(+' + format(c[key], '.2f') + ' %)':>16s}"
        lines.append(inc)
    return "\n".join(lines)


def cmd_compare(scenario: Scenario, args) -> int:
    x0_list = [_parse_point(t) for t in (args.x0_list or "1.5,0;3,0;4,0.5;4,1.5;4,4").split(";")]
    d_list = _parse_list(args.d_list or "0.1,10")
    s_bar_list = _parse_list(args.s_bar_list) if args.s_bar_list else [scenario.reduced.s_bar]
    cells = []
    failed = 0
    for s_bar in s_bar_list:
        for x0 in x0_list:
            for d in d_list:
                try:
                    cells.append(_compare_cell(x0, d, s_bar, scenario))
                except (NumericalFailure, InfeasibleSearch, ContractViolation, ValueError) as exc:
                    failed += 1
                    cells.append(
                        {"x0": list(x0), "d": d, "s_bar": s_bar, "error": f"{type(exc).__name__}: {exc}"}
                    )
    for s_bar in s_bar_list:
        print(_format_compare_table(cells, s_bar, d_list))
        print()
    if args.out:
        payload = dict(scenario.meta(), cells=cells)
        _write_json(args.out + ".json", payload)
        print(f"wrote {args.out}.json")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_verify(scenario: Scenario, args) -> int:
    model = scenario.model
    rng = np.random.default_rng(args.seed if args.seed is not None else scenario.seed)
    d_list = _parse_list(args.d_list or "0.1,1,10")
    n = args.n
    sim = replace(scenario.sim, dense_output=True)
    strategy = CorruptedTwoPump() if args.corrupted else OptimalTwoPump()
    tol = VerifyTolerances()
    reports = []
    all_passed = True
    s_bar = scenario.reduced.s_bar
    for k in range(n):
        d = d_list[k % len(d_list)]
        x0 = rng.uniform(s_bar + 0.05, 4.0, size=2)
        p = replace(scenario.reduced, d=d)
        traj = integrate("reduced", strategy, x0, p, model, sim)
        rep = verify_extremal(traj, p, model, tol)
        reports.append(rep.summary_dict())
        all_passed &= rep.passed

    p0 = replace(scenario.reduced, d=0.0)
    g = args.hjb_grid
    axis = np.linspace(s_bar + (5.0 - s_bar) / g, 5.0, g)
    worst = 0.0
    for a in axis:
        for b in axis:
            worst = max(worst, hjb_residual_zero_diffusion((a, b), p0, model))
    kink_axis = np.linspace(s_bar + 0.1, 5.0, 10)
    for v in kink_axis:
        worst = max(worst, hjb_residual_zero_diffusion((s_bar, v), p0, model))
        worst = max(worst, hjb_residual_zero_diffusion((v, s_bar), p0, model))
    hjb_ok = worst < 1e-9

    payload = dict(
        scenario.meta(),
        strategy="corrupted" if args.corrupted else "optimal",
        extremal_reports=reports,
        hjb={"max_residual": worst, "grid": g, "kink_samples": 2 * len(kink_axis), "passed": hjb_ok},
        passed=bool(all_passed and hjb_ok),
    )
    if args.out:
        _write_json(args.out + ".json", payload)
        print(f"wrote {args.out}.json")
    print(f"extremal checks: {sum(r['passed'] for r in reports)}/{len(reports)} passed; "
          f"HJB max residual {worst:.3e}")
    return EXIT_OK if payload["passed"] else EXIT_VERIFY


def cmd_full(scenario: Scenario, args) -> int:
    model = scenario.model
    eps_list = _parse_list(args.epsilon_list or "0.1,0.01,0.001")
    x0 = _parse_point(args.x0 or scenario.items.get("x0", "") or "4,1.5")
    x_r0 = _parse_float(scenario.items, "full.x_r0")
    if x_r0 is None:
        x_r0 = 1.0
    if x_r0 <= 0.0:
        raise ConfigError(f"full.x_r0 must be positive, got {x_r0}")
    s_r0 = _parse_float(scenario.items, "full.s_r0")
    strategy = OptimalTwoPump()
    if s_r0 is None:
        u0 = strategy.control(np.asarray(x0), scenario.reduced, model)
        s_r0 = u0.sr_star
    v_d = value_simulated(x0, scenario.reduced.d, scenario.reduced, model, scenario.sim)
    rows = []
    any_horizon = False
    prefix = args.out or "full"
    for eps in eps_list:
        p = FullParams(scenario.reduced.r, scenario.reduced.d, scenario.reduced.s_bar, eps)
        traj = integrate("full", strategy, (s_r0, x_r0, x0[0], x0[1]), p, model, scenario.sim)
        path = f"{prefix}_eps{eps}.csv"
        traj.to_csv(path)
        any_horizon |= traj.reason != "target"
        rows.append(
            {
                "epsilon": eps,
                "t_f_slow": traj.t_f,
                "t_f_fast": None if traj.t_f is None else traj.t_f / eps,
                "reason": traj.reason,
                "gap_to_v_d": None if traj.t_f is None else traj.t_f - v_d,
                "csv": path,
            }
        )
        print(f"epsilon={eps}: reach={traj.t_f} (slow h), reason={traj.reason}")
    payload = dict(scenario.meta(), x0=list(x0), x_r0=x_r0, s_r0=s_r0, v_d=v_d, runs=rows)
    _write_json(prefix + ".json", payload)
    print(f"V_d (reduced) = {v_d}; wrote {prefix}.json")
    return EXIT_HORIZON if any_horizon else EXIT_OK


def cmd_gamma(scenario: Scenario, args) -> int:
    model = scenario.model
    drain = DrainTime(model, scenario.reduced.s_bar)
    sig = np.linspace(0.0, args.sigma_max, args.n)
    setpoints = best_setpoint_grid(model, sig)
    rates = best_treatment_rate_grid(model, sig)
    prefix = args.out or "growth"
    with open(prefix + ".csv", "w") as fh:
        fh.write("sigma,mu,setpoint,rate,drain_time\n")
        for s, sp, ra in zip(sig, setpoints, rates):
            fh.write(
                f"{float(s)!r},{float(model.mu(s))!r},{float(sp)!r},{float(ra)!r},{drain(float(s))!r}\n"
            )
    _write_json(prefix + ".json", dict(scenario.meta(), sigma_max=args.sigma_max, n=args.n))
    print(f"wrote {prefix}.csv and {prefix}.json")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="twopatch",
        description="Minimal-time decontamination of a two-patch water resource",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="integrate one strategy and write CSV + events JSON")
    p.add_argument("--strategy", help="optimal | onepump:1 | onepump:2 | homog | const:a:z | constsr:a:s | bestconst")
    p.add_argument("--x0", help="initial patch concentrations, e.g. 4,0.5")
    p.add_argument("--out", help="output prefix")

    p = sub.add_parser("value", parents=[common], help="evaluate a value function at a point or on a grid")
    p.add_argument("--which", choices=("v0", "vinf", "vd"), required=True)
    p.add_argument("--d", type=float, help="diffusion override for vd")
    p.add_argument("--point", help="evaluate at one point, e.g. 4,4")
    p.add_argument("--grid", help="grid domain lo1,hi1,lo2,hi2")
    p.add_argument("--resolution", help="grid resolution n1,n2 (default 21,21)")
    p.add_argument("--out", help="output prefix for grid mode")

    p = sub.add_parser("compare", parents=[common], help="strategy comparison table (optimal, best constant, one pump)")
    p.add_argument("--x0-list", help="semicolon-separated initial states")
    p.add_argument("--d-list", help="comma-separated diffusion values")
    p.add_argument("--s-bar-list", help="comma-separated thresholds")
    p.add_argument("--out", help="output prefix for the JSON table")

    p = sub.add_parser("verify", parents=[common], help="maximum-principle and HJB verification")
    p.add_argument("--n", type=int, default=20, help="number of random scenarios")
    p.add_argument("--d-list", help="comma-separated diffusion values (default 0.1,1,10)")
    p.add_argument("--seed", type=int, help="random seed (default from config)")
    p.add_argument("--corrupted", action="store_true", help="swap the bang branches (negative test)")
    p.add_argument("--hjb-grid", type=int, default=50)
    p.add_argument("--out", help="output prefix for the JSON report")

    p = sub.add_parser("full", parents=[common], help="full slow-fast model runs across epsilon values")
    p.add_argument("--epsilon-list", help="comma-separated epsilon values")
    p.add_argument("--x0", help="initial patch concentrations")
    p.add_argument("--out", help="output prefix")

    p = sub.add_parser("gamma", parents=[common], help="tabulate growth rate, best setpoint, removal rate, drain time")
    p.add_argument("--sigma-max", type=float, default=10.0)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--out", help="output prefix")
    return ap


_COMMANDS = {
    "simulate": cmd_simulate,
    "value": cmd_value,
    "compare": cmd_compare,
    "verify": cmd_verify,
    "full": cmd_full,
    "gamma": cmd_gamma,
}


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        scenario = build_scenario(args.config, getattr(args, "set", None))
        return _COMMANDS[args.command](scenario, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, InfeasibleSearch, ContractViolation) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
