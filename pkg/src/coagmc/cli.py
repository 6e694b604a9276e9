"""Configuration-driven command line front end with reproducible artifacts.

Subcommands: collide (pair collision Monte Carlo), smolu (coagulation-
diffusion solver), density-check (density bound property suites), oracle
(space-homogeneous ODE reference).  Every run writes resolved-config.json, a
manifest, and CSV artifacts into its own output directory; artifacts are
byte-identical for identical (config, seed).

Exit codes: 0 all checks pass, 1 check failure, 2 budget exceeded (partial
artifacts), 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import densities, experiments, kernels, smoluchowski

EXIT_PASS, EXIT_CHECK_FAIL, EXIT_BUDGET, EXIT_CONFIG = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# schema: field -> (type, default, validator or None); None default = required
_POSITIVE = ("must be strictly positive", lambda v: v > 0)
_NONNEG = ("must be nonnegative", lambda v: v >= 0)

SCHEMAS = {
    "collide": {
        "regime": (str, "ever_collide",
                   ("must be one of " + ", ".join(experiments.REGIMES),
                    lambda v: v in experiments.REGIMES)),
        "d": (int, 3, ("must be >= 3", lambda v: v >= 3)),
        "separation": (float, 1.0, _POSITIVE),
        "a1": (float, 0.5, _POSITIVE),
        "a2": (float, 0.5, _POSITIVE),
        "tau1": (float, 1.0, _POSITIVE),
        "tau2": (float, 1.0, _POSITIVE),
        "b1": (float, 1.0, _POSITIVE),
        "b2": (float, 1.0, _POSITIVE),
        "r_N": (float, 0.01, _POSITIVE),
        "horizon": (float, 10.0, _POSITIVE),
        "t0": (float, 0.1, _POSITIVE),
        "t1": (float, 1.0, _POSITIVE),
        "N": (float, 10000.0, _POSITIVE),
        "alpha": (float, None, None),
        "n_paths": (int, 100000, ("must be >= 100", lambda v: v >= 100)),
        "tolerance": (float, 0.25, _POSITIVE),
        "g": (str, "indicator", ("must be 'indicator' or 'bump'",
                                 lambda v: v in ("indicator", "bump"))),
    },
    "smolu": {
        "kernel": (str, "constant", ("must be 'constant', 'product' or 'ou'",
                                     lambda v: v in ("constant", "product", "ou"))),
        "homogeneous": (bool, True, None),
        "d": (int, 3, ("must be in 1..3 for the solver grid", lambda v: 1 <= v <= 3)),
        "L": (float, 16.0, _POSITIVE),
        "n": (int, 16, ("must be >= 2", lambda v: v >= 2)),
        "delta": (float, 1.0, _POSITIVE),
        "rho": (float, 2.0, ("must exceed 1", lambda v: v > 1)),
        "J": (int, 16, ("must be >= 2", lambda v: v >= 2)),
        "n0": (float, 1.0, _POSITIVE),
        "T": (float, 1.0, _POSITIVE),
        "n_steps": (int, 80, ("must be >= 1", lambda v: v >= 1)),
        "method": (str, "strang", ("must be 'strang' or 'picard'",
                                   lambda v: v in ("strang", "picard"))),
    },
    "density-check": {
        "n_draws": (int, 1000, ("must be >= 1", lambda v: v >= 1)),
        "d": (int, 3, ("must be >= 1", lambda v: v >= 1)),
    },
    "oracle": {
        "kernel": (str, "constant", ("must be 'constant', 'product' or 'ou'",
                                     lambda v: v in ("constant", "product", "ou"))),
        "delta": (float, 1.0, _POSITIVE),
        "rho": (float, 2.0, ("must exceed 1", lambda v: v > 1)),
        "J": (int, 16, ("must be >= 2", lambda v: v >= 2)),
        "n0": (float, 1.0, _POSITIVE),
        "T": (float, 2.0, _POSITIVE),
    },
}

GLOBAL_FIELDS = {
    "seed": (int, 0, _NONNEG),
    "threads": (int, 1, ("must be >= 1", lambda v: v >= 1)),
    "max_paths": (int, None, None),
    "max_wall_s": (float, None, None),
}


def parse_config(command: str, raw: dict) -> dict:
    """Validate a flat JSON config against the command schema; fill defaults.

    Unknown keys are rejected; every violation names the offending field.
    """
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = dict(SCHEMAS[command])
    schema.update(GLOBAL_FIELDS)
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for name, (typ, default, check) in schema.items():
        if name in raw:
            val = raw[name]
            if typ is float and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
            if typ is int and isinstance(val, bool):
                raise ConfigError(f"field {name!r} must be {typ.__name__}, got bool")
            if not isinstance(val, typ):
                raise ConfigError(
                    f"field {name!r} must be {typ.__name__}, got {type(val).__name__}")
        else:
            val = default
        if val is not None and check is not None and not check[1](val):
            raise ConfigError(f"field {name!r} {check[0]} (got {val})")
        out[name] = val
    return out


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    return data


def _write_manifest(out_dir: Path, command: str, config: dict, wall: float,
                    partial: bool = False) -> None:
    canon = json.dumps(config, sort_keys=True)
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": config["seed"],
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": round(wall, 3),
        "partial": partial,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _write_checks(out_dir: Path, checks: list[tuple[str, bool, str]]) -> bool:
    lines = []
    ok = True
    for name, passed, detail in checks:
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    (out_dir / "checks.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return ok


def _run_collide(config: dict, out_dir: Path) -> tuple[int, list]:
    rng = np.random.default_rng(np.random.SeedSequence(config["seed"]))
    d = config["d"]
    x1 = np.zeros(d)
    x2 = np.zeros(d)
    x2[0] = config["separation"]
    n_paths = config["n_paths"]
    partial = False
    if config["max_paths"] is not None and n_paths > config["max_paths"]:
        n_paths = config["max_paths"]
        partial = True
    regime = config["regime"]
    if regime in ("ever_collide", "brownian_limit"):
        cfg = experiments.PairConfig(
            d=d, x1=x1, x2=x2, a1=config["a1"], a2=config["a2"],
            r_N=config["r_N"], horizon=config["horizon"], seed=config["seed"])
        g = (experiments.indicator_before(config["horizon"])
             if regime == "brownian_limit" else None)
        est = experiments.mc_estimate(regime, cfg, g, n_paths,
                                      N=config["N"] if regime == "brownian_limit" else None,
                                      rng=rng)
    else:
        cfg = experiments.OUPairConfig(
            d=d, x1=x1, x2=x2, N=config["N"], tau1=config["tau1"],
            tau2=config["tau2"], b1=config["b1"], b2=config["b2"],
            r_N=config["r_N"], t0=config["t0"], t1=config["t1"],
            alpha=config["alpha"], seed=config["seed"])
        g = (experiments.time_bump(config["t0"], config["t1"])
             if config["g"] == "bump"
             else experiments.time_window_indicator(config["t0"], config["t1"]))
        est = experiments.mc_estimate(regime, cfg, g, n_paths, rng=rng)
    row = {"regime": est.regime, "params": f"d={d};r_N={config['r_N']}",
           "estimate": est.scaled_value, "se": est.std_error,
           "reference": est.reference if est.reference is not None else "",
           "ratio": est.ratio if est.ratio is not None else "",
           "n_paths": est.n_paths, "censored_fraction": est.censored_fraction,
           "wall_time_s": ""}
    experiments.write_rows_csv(out_dir / "results.csv", [row])
    checks = [("censored_fraction",
               est.censored_fraction <= 0.01,
               f"{est.censored_fraction:.4%} <= 1%")]
    if est.reference is not None:
        if regime == "ever_collide":
            band = 3.0 * est.std_error
            ok = abs(est.scaled_value - est.reference) <= band
            checks.append(("estimate_vs_reference", ok,
                           f"|{est.scaled_value:.5g} - {est.reference:.5g}| <= 3 SE"))
        else:
            tol = config["tolerance"]
            ok = abs(est.scaled_value - est.reference) <= tol * abs(est.reference)
            checks.append(("estimate_vs_reference", ok,
                           f"relative error {abs(est.scaled_value / est.reference - 1):.3f}"
                           f" <= {tol}"))
    return (EXIT_BUDGET if partial else EXIT_PASS), checks


def _solver_problem(config: dict) -> smoluchowski.Problem:
    grid = smoluchowski.MassGrid(delta=config["delta"], rho=config["rho"],
                                 J=config["J"])
    if config["kernel"] == "constant":
        kern = lambda y1, y2: np.ones(np.broadcast(y1, y2).shape)
        # sqrt weight: <w^2, mu> is the (conserved) mass, keeping the explicit
        # step's stability bound time-uniform
        weight = kernels.WeightSpec(c1=1.0, u=0.5)
    elif config["kernel"] == "product":
        kern = lambda y1, y2: np.asarray(y1) * np.asarray(y2)
        weight = kernels.WeightSpec(c1=1.0, u=1.0)
    else:
        kern = kernels.ou_mass_kernel
        weight = kernels.pair_bound_weight()
    a_law = (lambda y: np.cbrt(np.asarray(y, dtype=float)) ** -1.0) \
        if config["kernel"] == "ou" else (lambda y: np.ones(np.shape(y)))
    return smoluchowski.Problem(grid=grid, kernel=kern, a=a_law, weight=weight,
                                d=config.get("d", 3))


def _run_smolu(config: dict, out_dir: Path) -> tuple[int, list]:
    problem = _solver_problem(config)
    grid = problem.grid
    bins = np.zeros(grid.J)
    bins[0] = config["n0"]
    fld = smoluchowski.uniform_field(grid, config["d"], config["L"],
                                     config["n"], bins)
    checks = []
    dt = config["T"] / config["n_steps"]
    if config["method"] == "picard":
        path, report = smoluchowski.picard_solve(fld, config["T"], problem,
                                                 n_steps=config["n_steps"])
    else:
        path = [fld]
        cur = fld
        for _ in range(config["n_steps"]):
            cur = smoluchowski.strang_step(cur, dt, problem)
            path.append(cur)
        report = smoluchowski.moment_monitor(path, problem)
    report.to_csv(out_dir / "moments.csv")
    with open(out_dir / "trajectory.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "total_number", "mass_l1", "overflow", "clipped"])
        for f in path:
            writer.writerow([f.t, f.number_total(), f.mass_l1(), f.overflow,
                             f.clipped])
    smoluchowski.save_checkpoint(path[-1], out_dir / "final_state.npz",
                                 kernel_id=config["kernel"])
    mass0, mass1 = path[0].mass_l1(), path[-1].mass_l1()
    checks.append(("nonnegativity", all(f.values.min() >= -1e-12 for f in path),
                   "all fields >= -1e-12"))
    checks.append(("mass_non_increase",
                   mass1 <= mass0 * (1 + 1e-8),
                   f"{mass1:.9g} <= {mass0:.9g} (rel 1e-8)"))
    if config["homogeneous"] and config["kernel"] == "constant":
        exact = smoluchowski.constant_kernel_number(config["n0"], config["T"]) \
            * config["L"] ** config["d"]
        err = abs(path[-1].number_total() - exact) / exact
        checks.append(("oracle_match", err <= 0.01,
                       f"relative error {err:.5f} <= 1%"))
    return EXIT_PASS, checks


def _run_density_check(config: dict, out_dir: Path) -> tuple[int, list]:
    rng = np.random.default_rng(np.random.SeedSequence(config["seed"]))
    d = config["d"]
    rows = []
    violations = {"A": 0, "B": 0}
    for regime in ("A", "B"):
        for _ in range(config["n_draws"]):
            # power-law families keep the regime's monotonicity by construction
            p = rng.uniform(0.0, 1.0)
            q = (rng.uniform(p / 2.0, p / 2.0 + 1.0) if regime == "A"
                 else rng.uniform(0.0, p / 2.0))
            ca, cb = rng.uniform(0.5, 2.0, size=2)
            a_law = lambda y, _p=p, _c=ca: _c * y ** (-_p)
            B_law = lambda y, _q=q, _c=cb: _c * y ** (-_q)
            y_small = rng.uniform(0.5, 4.0)
            y = y_small * rng.uniform(1.5, 8.0)
            t = rng.uniform(0.1, 2.0)
            delta = rng.uniform(0.0, 3.0)
            x = np.zeros(d)
            x_start = np.zeros(d)
            x_start[0] = delta
            ok = densities.density_ratio_check(regime, a_law, B_law, y, y_small,
                                               t, x, x_start)
            if not ok:
                violations[regime] += 1
        rows.append({"regime": regime, "draws": config["n_draws"],
                     "violations": violations[regime]})
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["regime", "draws", "violations"])
        writer.writeheader()
        writer.writerows(rows)
    checks = [(f"ratio_bound_regime_{r}", violations[r] == 0,
               f"{violations[r]} violations in {config['n_draws']} draws")
              for r in ("A", "B")]
    return EXIT_PASS, checks


def _run_oracle(config: dict, out_dir: Path) -> tuple[int, list]:
    cfg = dict(config)
    cfg.setdefault("d", 3)
    problem = _solver_problem(cfg)
    bins = np.zeros(problem.grid.J)
    bins[0] = config["n0"]
    times, traj = smoluchowski.homogeneous_oracle(problem, bins, config["T"])
    with open(out_dir / "trajectory.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "total_number", "total_mass"])
        for t, mu in zip(times, traj):
            writer.writerow([t, float(mu.sum()),
                             float(mu @ problem.grid.pivots)])
    checks = []
    if config["kernel"] == "constant":
        exact = smoluchowski.constant_kernel_number(config["n0"], times[-1])
        err = abs(float(traj[-1].sum()) - exact) / exact
        checks.append(("constant_kernel_closed_form", err <= 1e-6,
                       f"relative error {err:.2e} <= 1e-6"))
    mass_drift = abs(float(traj[-1] @ problem.grid.pivots)
                     - float(traj[0] @ problem.grid.pivots))
    rel = mass_drift / float(traj[0] @ problem.grid.pivots)
    checks.append(("mass_conservation", rel <= 1e-6,
                   f"relative drift {rel:.2e}"))
    return EXIT_PASS, checks


RUNNERS = {"collide": _run_collide, "smolu": _run_smolu,
           "density-check": _run_density_check, "oracle": _run_oracle}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="coagmc",
        description="collision-rate Monte Carlo and coagulation-diffusion solver")
    parser.add_argument("command", choices=sorted(SCHEMAS))
    parser.add_argument("--config", metavar="PATH", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, metavar="U64")
    parser.add_argument("--out", default="coagmc-out", metavar="DIR")
    parser.add_argument("--threads", type=int, default=None, metavar="N")
    parser.add_argument("--paths", type=int, default=None, metavar="N",
                        help="override n_paths for collide runs")
    parser.add_argument("--json-summary", action="store_true",
                        help="print the check summary as JSON")
    args = parser.parse_args(argv)

    try:
        raw = _load_config_file(args.config) if args.config else {}
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.threads is not None:
            raw["threads"] = args.threads
        if args.paths is not None and args.command == "collide":
            raw["n_paths"] = args.paths
        config = parse_config(args.command, raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved-config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n")

    start = time.perf_counter()
    try:
        code, checks = RUNNERS[args.command](config, out_dir)
    except (ValueError, RuntimeError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        _write_manifest(out_dir, args.command, config,
                        time.perf_counter() - start, partial=True)
        return EXIT_CHECK_FAIL
    wall = time.perf_counter() - start
    if config.get("max_wall_s") is not None and wall > config["max_wall_s"]:
        code = EXIT_BUDGET
    _write_manifest(out_dir, args.command, config, wall,
                    partial=(code == EXIT_BUDGET))
    ok = _write_checks(out_dir, checks)
    if args.json_summary:
        print(json.dumps({"checks": [{"name": n, "passed": p, "detail": d}
                                     for n, p, d in checks],
                          "exit_code": code if ok else EXIT_CHECK_FAIL}))
    if not ok:
        return EXIT_CHECK_FAIL
    return code


if __name__ == "__main__":
    sys.exit(main())
