"""Command line interface: ``quasilab <subcommand> [options]``.

Every subcommand writes CSV (default) or JSON to ``--out`` or stdout.
Exit status: 0 on success, 2 on invalid input, 3 when a size guard refuses
the request, 1 on any other library error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import yaml

from . import experiments as ex
from .coupling import THETAS, hitting_times, reduced_kernel, state_tag, z_enter, z_exit, z_step
from .dynamics import iterate_to_fixed_point, limit_map_F, rho_star
from .model import GuardError, ModelParams, QuasilabError, ValidationError, replica_rng, validate
from .occupancy import simulate_occupancy
from .sequence_wf import simulate_wf

PARAM_KEYS = {"ell": int, "m": int, "kappa": int, "q": float, "sigma": float, "K": int, "a": float,
              "alpha": float, "seed": int}

BIAS_NOTE = ("finite-size estimate; the limit theorem is only approached as m and ell grow, "
             "so agreement is judged with the tolerance max(abs_tol, se_mult * se)")


def load_config(path) -> dict:
    """Flat key-value mapping from a YAML or JSON file; unknown keys are rejected."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as err:
        raise ValidationError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ValidationError(f"config {path} is not valid YAML/JSON: {err}") from err
    if not isinstance(data, dict):
        raise ValidationError("config must be a flat mapping")
    unknown = set(data) - set(PARAM_KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, value in data.items():
        try:
            out[key] = PARAM_KEYS[key](value)
        except (TypeError, ValueError) as err:
            raise ValidationError(f"config key {key}: {err}") from err
    return out


def resolve(args) -> dict:
    """Config values overridden by explicit flags."""
    values = load_config(args.config)
    for key in PARAM_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def build_params(values: dict, need_m: bool = True) -> ModelParams:
    """Model parameters from resolved values; ``q = a/ell`` and ``m = round(alpha ell)`` fill gaps."""
    v = dict(values)
    if "ell" not in v:
        raise ValidationError("ell is required")
    if "q" not in v:
        if "a" not in v:
            raise ValidationError("give q or a")
        v["q"] = v["a"] / v["ell"]
    if "m" not in v:
        if "alpha" in v:
            v["m"] = max(1, int(round(v["alpha"] * v["ell"])))
        elif need_m:
            raise ValidationError("give m or alpha")
        else:
            v["m"] = 1
    v.pop("seed", None)
    return validate(ModelParams(**v))


def _seed(args, values) -> int:
    seed = values.get("seed", 0)
    if seed < 0:
        raise ValidationError("seed must be non-negative")
    return seed


def _grid(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise ValidationError(f"bad grid {text!r}: {err}") from err


def _metadata(args, **extra):
    meta = {"command": args.command}
    meta.update(extra)
    return meta


def emit(args, rows, metadata, columns=None):
    rows = list(rows)
    text = ex.to_json(rows, metadata) if args.format == "json" else ex.to_csv(rows, metadata, columns)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


# --- subcommands --------------------------------------------------------------

def cmd_simulate(args):
    values = resolve(args)
    params = build_params(values)
    seed = _seed(args, values)
    rows = []
    for rep in range(args.replicas):
        rng = replica_rng(seed, rep)
        if args.command == "simulate-wf":
            traj = simulate_wf(params, args.steps, rng)
        else:
            traj = simulate_occupancy(params, args.steps, rng)
        rows.extend(ex.trajectory_rows(traj, params.K, params.m, rep))
    emit(args, rows, _metadata(args, params=params, seed=seed))


def cmd_bounds(args):
    values = resolve(args)
    params = build_params(values)
    seed = _seed(args, values)
    kern = reduced_kernel(params, args.theta)
    start = z_enter(args.theta, params) if args.start == "enter" else z_exit(args.theta, params)
    rows = []
    for rep in range(args.replicas):
        rng = replica_rng(seed, rep)
        z = start
        for n in range(args.steps + 1):
            row = {"replica": rep, "step": n}
            row.update({f"z_{k}": z[k] for k in range(params.K + 1)})
            row["state_tag"] = state_tag(z, args.theta, params)
            rows.append(row)
            z = z_step(z, params, args.theta, rng, kern)
    emit(args, rows, _metadata(args, params=params, seed=seed, theta=args.theta))


def cmd_hitting(args):
    values = resolve(args)
    params = build_params(values)
    seed = _seed(args, values)
    h = hitting_times(params, args.theta, args.replicas, seed, cap=args.cap)
    emit(args, h.rows(), _metadata(args, params=params, seed=seed, theta=args.theta, cap=args.cap))


def cmd_dynamics(args):
    values = resolve(args)
    a, sigma, K = values.get("a"), values.get("sigma", 2.0), values.get("K", 0)
    if a is None:
        if "q" in values and "ell" in values:
            a = values["ell"] * values["q"]
        else:
            raise ValidationError("give a (or ell and q)")
    if not (a > 0 and sigma > 1 and K >= 0):
        raise ValidationError("need a > 0, sigma > 1, K >= 0")
    target = rho_star(a, sigma, K)
    if args.z0 is None:
        z0 = np.zeros(K + 1)
        z0[0] = 1.0
    else:
        z0 = np.array(_grid(args.z0))
        if len(z0) != K + 1:
            raise ValidationError(f"z0 needs K+1 = {K + 1} entries")
    z, n, orbit = iterate_to_fixed_point(z0, a, sigma, tol=args.tol, max_iters=args.max_iters, return_orbit=True)
    residuals = [float(np.abs(orbit[i] - target.rho_star).sum()) for i in range(len(orbit))]
    fixed_residual = float(np.abs(limit_map_F(target.rho_star, a, sigma) - target.rho_star).sum())
    meta = _metadata(args, a=a, sigma=sigma, K=K)
    if args.format == "csv":
        rows = [{"iteration": i, **{f"z_{k}": float(orbit[i][k]) for k in range(K + 1)},
                 "l1_to_rho_star": residuals[i]} for i in range(len(orbit))]
        meta.update(rho_star=target.rho_star.tolist(), iterations=n)
        emit(args, rows, meta)
        return
    report = {"metadata": meta, "rho_star": target.rho_star.tolist(), "supercritical": target.supercritical,
              "fixed_point_residual": fixed_residual, "iterations": n, "final": z.tolist(),
              "orbit_residuals": residuals}
    text = json.dumps(report, indent=2) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


def _a_sigma_kappa(values):
    a, sigma, kappa = values.get("a"), values.get("sigma", 2.0), values.get("kappa", 2)
    if not sigma > 1 or kappa < 2:
        raise ValidationError("need sigma > 1 and kappa >= 2")
    return a, sigma, kappa


def cmd_psi(args):
    values = resolve(args)
    a, sigma, kappa = _a_sigma_kappa(values)
    if a is None or not a > 0:
        raise ValidationError("psi needs a > 0")
    from .ldp import critical_alpha, psi_details

    res = psi_details(a, sigma, l_max=args.lmax, alt_denominator=args.alt_denominator)
    rows = [{"a": a, "psi": res.value, "alpha_c": critical_alpha(a, sigma, kappa, res.value)}]
    emit(args, rows, _metadata(args, sigma=sigma, kappa=kappa, l_max=res.l_max, best_l=res.l,
                               stabilized=res.stabilized, alt_denominator=args.alt_denominator))


def cmd_phase(args):
    values = resolve(args)
    _, sigma, kappa = _a_sigma_kappa(values)
    a_grid = _grid(args.a_grid)
    if not a_grid or min(a_grid) <= 0:
        raise ValidationError("a-grid must hold positive values")
    meta = _metadata(args, sigma=sigma, kappa=kappa, l_max=args.lmax)
    if args.alpha_grid is None:
        emit(args, ex.phase_rows(a_grid, sigma, kappa, args.lmax), meta)
        return
    alpha_grid = _grid(args.alpha_grid)
    if not alpha_grid or min(alpha_grid) <= 0:
        raise ValidationError("alpha-grid must hold positive values")
    ell = values.get("ell", 20)
    seed = _seed(args, values)
    rows = ex.phase_scan(a_grid, alpha_grid, ell, kappa, sigma, args.burn_in, args.steps, args.replicas, seed,
                         args.lmax)
    meta.update(ell=ell, seed=seed, steps=args.steps, replicas=args.replicas)
    emit(args, rows, meta)


def cmd_renewal(args):
    values = resolve(args)
    seed = _seed(args, values)
    if args.chain == "two-state":
        if not (0 < args.p01 <= 1 and 0 < args.p10 <= 1):
            raise ValidationError("switching probabilities must lie in (0, 1]")
        res = ex.renewal_check(ex.two_state_chain(args.p01, args.p10), 0, lambda x: float(x == 1),
                               args.horizon, args.replicas, seed)
        res.exact = args.p01 / (args.p01 + args.p10)
        meta = _metadata(args, chain="two-state", p01=args.p01, p10=args.p10, f="indicator of state 1")
    else:
        params = build_params(values)
        res = ex.reduced_renewal_check(params, args.theta, args.horizon, args.replicas, seed,
                                       exact=True if args.exact else None)
        meta = _metadata(args, chain="reduced", params=params, theta=args.theta, f="z_0/m")
    meta.update(seed=seed, discrepancy_in_se=res.discrepancy)
    emit(args, res.rows(), meta)


def cmd_stationary(args):
    values = resolve(args)
    params = build_params(values)
    seed = _seed(args, values)
    est = ex.estimate_stationary(params, args.chain, args.burn_in, args.steps, args.replicas, seed)
    target = rho_star(params.effective_a, params.sigma, params.K).rho_star
    meta = _metadata(args, params=params, seed=seed, chain=args.chain, burn_in=est.burn_in, steps=est.steps,
                     replicas=est.replicas, abs_tol=args.abs_tol, se_mult=args.se_mult,
                     half_gap_in_se=est.half_gap, note=BIAS_NOTE)
    emit(args, est.rows(target, args.abs_tol, args.se_mult), meta)


# --- parser -------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON file of flat parameter keys")
    p.add_argument("--seed", type=int, help="master seed (non-negative)")
    p.add_argument("--out", help="output path, '-' or omitted for stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    for key, typ in PARAM_KEYS.items():
        if key != "seed":
            p.add_argument(f"--{key}", type=typ)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasilab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("simulate-wf", "simulate-occupancy"):
        p = sub.add_parser(name)
        _common(p)
        p.add_argument("--steps", type=int, default=100)
        p.add_argument("--replicas", type=int, default=1)
        p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("simulate-bounds")
    _common(p)
    p.add_argument("--theta", choices=THETAS, default="upper")
    p.add_argument("--start", choices=("enter", "exit"), default="enter")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--replicas", type=int, default=1)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("hitting-times")
    _common(p)
    p.add_argument("--theta", choices=THETAS, default="upper")
    p.add_argument("--replicas", type=int, default=10)
    p.add_argument("--cap", type=int, default=10**6)
    p.set_defaults(func=cmd_hitting)

    p = sub.add_parser("dynamics")
    _common(p)
    p.set_defaults(format="json")
    p.add_argument("--z0", help="comma-separated start point, default all master")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iters", type=int, default=10**6)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("psi")
    _common(p)
    p.add_argument("--lmax", type=int, default=20)
    p.add_argument("--alt-denominator", action="store_true",
                   help="use (sigma-1) r - 1 in the selection denominator")
    p.set_defaults(func=cmd_psi)

    p = sub.add_parser("phase-diagram")
    _common(p)
    p.add_argument("--a-grid", required=True, help="comma-separated values of a")
    p.add_argument("--alpha-grid", help="comma-separated values of alpha; adds simulated master fractions")
    p.add_argument("--lmax", type=int, default=20)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--replicas", type=int, default=4)
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("renewal-check")
    _common(p)
    p.add_argument("--chain", choices=("two-state", "reduced"), default="two-state")
    p.add_argument("--p01", type=float, default=0.3)
    p.add_argument("--p10", type=float, default=0.6)
    p.add_argument("--theta", choices=THETAS, default="upper")
    p.add_argument("--horizon", type=int, default=20000)
    p.add_argument("--exact", action="store_true",
                   help="require the enumerated stationary value (reduced chain, m <= 12, K <= 2)")
    p.add_argument("--replicas", type=int, default=8)
    p.set_defaults(func=cmd_renewal)

    p = sub.add_parser("stationary")
    _common(p)
    p.add_argument("--chain", choices=ex.CHAINS, default="occupancy")
    p.add_argument("--burn-in", type=int, help="default: ten deterministic relaxation times")
    p.add_argument("--steps", type=int, default=10**4)
    p.add_argument("--replicas", type=int, default=32)
    p.add_argument("--abs-tol", type=float, default=ex.ABS_TOL)
    p.add_argument("--se-mult", type=float, default=ex.SE_MULT)
    p.set_defaults(func=cmd_stationary)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("steps", "replicas", "cap", "horizon"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) < 1:
            print(f"error: --{name} must be positive", file=sys.stderr)
            return 2
    try:
        args.func(args)
    except ValidationError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return 2
    except GuardError as err:
        print(f"guard violation: {err}", file=sys.stderr)
        return 3
    except QuasilabError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
