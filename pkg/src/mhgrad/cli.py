"""Command-line front end: seeded experiments with CSV outputs.

Subcommands::

    mhgrad sweep config.toml        # step-size sweep of the lag-1 objective
    mhgrad tune config.toml         # Adam proposal tuning trajectory
    mhgrad sensitivity config.toml  # power-scaling prior sensitivities
    mhgrad diagnose config.toml     # ESS / R-hat / MC s.e. table

Configs are TOML files with flat keys; unknown keys are rejected. Every CSV
starts with comment lines echoing the fully resolved configuration and
seed, so identical config + seed reproduce identical bytes. The exit code
is 0 iff every requested estimate is finite.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics, regression, targets
from .chain import ChainConfig, sample_chains
from .estimator import EstimatorOptions, gradient_run
from .functionals import det_gradient_assemble, lag1_outer, lag1_product
from .optimize import tune_proposal
from .proposals import GaussianRandomWalk


class ConfigError(ValueError):
    pass


_TARGETS = {
    "gaussian_mean_shift": lambda c: targets.gaussian_mean_shift(int(c.get("dim", 1))),
    "standard_gaussian": lambda c: targets.standard_gaussian(int(c.get("dim", 1))),
    "two_point": lambda c: targets.two_point(),
    "correlated_gaussian": lambda c: targets.correlated_gaussian(float(c.get("rho", 0.5))),
    "dual_moon": lambda c: targets.dual_moon(),
    "rosenbrock": lambda c: targets.rosenbrock(),
}

_COMMON_KEYS = {"seed", "out", "n_chains", "n_steps", "burn_in", "pruning"}
_KEYS = {
    "sweep": _COMMON_KEYS | {"target", "dim", "rho", "grid_start", "grid_stop", "grid_step", "grid"},
    "tune": _COMMON_KEYS
    | {"target", "dim", "rho", "init_scale", "iters", "steps_per_iter", "lr", "diagonal_only", "max_horizon"},
    "sensitivity": _COMMON_KEYS
    | {"dataset", "response", "prior", "synthetic_n", "synthetic_covariates", "synthetic_seed", "power_scaled"},
    "diagnose": _COMMON_KEYS | {"target", "dim", "rho", "proposal_scale", "theta", "initial_state"},
}

_DEFAULTS = {
    "sweep": {"target": "standard_gaussian", "dim": 1, "n_chains": 20, "n_steps": 50_000,
              "burn_in": 1_000, "seed": 0, "pruning": 1.0, "out": "sweep.csv"},
    "tune": {"target": "correlated_gaussian", "rho": 0.5, "init_scale": 1.0, "iters": 200,
             "steps_per_iter": 50_000, "lr": 0.005, "n_chains": 1, "n_steps": 0,
             "burn_in": 1_000, "seed": 0, "pruning": 1.0, "diagonal_only": False,
             "out": "tune.csv"},
    "sensitivity": {"prior": "both", "n_chains": 4, "n_steps": 50_000, "burn_in": 10_000,
                    "seed": 0, "pruning": 1.0, "power_scaled": True, "response": "response",
                    "synthetic_n": 200, "synthetic_covariates": 5, "synthetic_seed": 0,
                    "out": "sensitivity.csv"},
    "diagnose": {"target": "correlated_gaussian", "rho": 0.5, "n_chains": 4,
                 "n_steps": 50_000, "burn_in": 5_000, "seed": 0, "pruning": 1.0,
                 "theta": 0.0, "out": "diagnose.csv"},
}

_PAPER_SCALE = {
    "sweep": {"n_chains": 100, "n_steps": 250_000},
    "tune": {"iters": 800, "steps_per_iter": 250_000},
    "sensitivity": {"n_steps": 350_000, "burn_in": 100_000},
    "diagnose": {"n_steps": 250_000},
}


def load_config(path: str, command: str, overrides: dict) -> dict:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    allowed = _KEYS[command]
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    cfg = dict(_DEFAULTS[command])
    cfg.update(raw)
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    return cfg


def _make_target(cfg):
    name = cfg["target"]
    if name not in _TARGETS:
        raise ConfigError(f"unknown target {name!r}; choose from {sorted(_TARGETS)}")
    return _TARGETS[name](cfg)


def write_csv(path: str, command: str, cfg: dict, header: list[str], rows: list[list]):
    """CSV with the resolved config echoed as leading comment lines."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# mhgrad {command}\n")
        for key in sorted(cfg):
            fh.write(f"# {key} = {cfg[key]!r}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _all_finite(rows) -> bool:
    for row in rows:
        for v in row:
            if isinstance(v, float) and not np.isfinite(v):
                return False
    return True


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def sweep_point(target, sigma, n_chains, n_steps, burn_in, seed, pruning=1.0):
    """Lag-1 objective and its step-size derivative at one grid point."""
    d = target.dim
    kernel = GaussianRandomWalk(sigma * np.ones(d))
    func = lag1_product(0, 0) if d == 1 else lag1_outer(d)
    config = ChainConfig(
        n_steps=n_steps, burn_in=burn_in, seed=seed, theta=sigma, initial_state=np.zeros(d)
    )
    options = EstimatorOptions(n_chains=n_chains, pruning_prob=pruning)
    res = gradient_run(
        target, kernel, func, config, options, directions=np.eye(d)[None, :, :]
    )
    if d == 1:
        obj_c = res.pair_mean[:, 0] - res.state_mean[:, 0] ** 2
        grad_c = res.per_chain[:, 0, 0]
    else:
        obj_c = np.empty(n_chains)
        grad_c = np.empty(n_chains)
        for c in range(n_chains):
            C = res.pair_mean[c].reshape(d, d) - np.outer(res.state_mean[c], res.state_mean[c])
            obj_c[c] = np.linalg.det(C)
            grad_c[c] = det_gradient_assemble(C, res.per_chain[c, 0].reshape(d, d))
    rt = np.sqrt(n_chains)
    return {
        "sigma": float(sigma),
        "gamma1": float(obj_c.mean()),
        "gamma1_se": float(obj_c.std(ddof=1) / rt),
        "dgamma1_dsigma": float(grad_c.mean()),
        "dgamma1_se": float(grad_c.std(ddof=1) / rt),
        "accept_rate": res.accept_rate,
    }


def cmd_sweep(cfg: dict, threads: int = 1) -> int:
    target = _make_target(cfg)
    if "grid" in cfg:
        grid = [float(g) for g in cfg["grid"]]
    else:
        try:
            start, stop, step = float(cfg["grid_start"]), float(cfg["grid_stop"]), float(cfg["grid_step"])
        except KeyError as e:
            raise ConfigError(f"sweep needs grid or grid_start/stop/step ({e} missing)")
        grid = list(np.arange(start, stop + 0.5 * step, step))
    if not grid:
        raise ConfigError("sweep grid is empty")

    def run_one(item):
        i, sigma = item
        return sweep_point(
            target, sigma, int(cfg["n_chains"]), int(cfg["n_steps"]), int(cfg["burn_in"]),
            seed=int(np.random.SeedSequence([int(cfg["seed"]), i]).generate_state(1)[0]),
            pruning=float(cfg["pruning"]),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_one, enumerate(grid)))
    else:
        results = [run_one(x) for x in enumerate(grid)]
    header = ["sigma", "gamma1", "gamma1_se", "dgamma1_dsigma", "dgamma1_se", "accept_rate"]
    rows = [[r[h] for h in header] for r in results]
    write_csv(cfg["out"], "sweep", cfg, header, rows)
    return 0 if _all_finite(rows) else 1


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------


def cmd_tune(cfg: dict, threads: int = 1) -> int:
    target = _make_target(cfg)
    d = target.dim
    init = cfg["init_scale"]
    init = float(init) * np.ones(d) if np.isscalar(init) else np.asarray(init, dtype=float)
    res = tune_proposal(
        target,
        init_chol=init,
        iters=int(cfg["iters"]),
        steps_per_iter=int(cfg["steps_per_iter"]),
        lr=float(cfg["lr"]),
        burn_in=int(cfg["burn_in"]),
        seed=int(cfg["seed"]),
        n_chains=int(cfg["n_chains"]),
        diagonal_only=bool(cfg["diagonal_only"]),
        pruning_prob=float(cfg["pruning"]),
        max_horizon=cfg.get("max_horizon"),
    )
    n_params = len(res.records[0].params) if res.records else 0
    header = (
        ["iter"]
        + [f"p{k + 1}" for k in range(n_params)]
        + ["objective", "objective_se", "grad_norm", "accept_rate", "n_capped"]
    )
    rows = [
        [r.iteration, *[float(v) for v in r.params], r.objective, r.objective_se,
         r.grad_norm, r.accept_rate, r.n_capped]
        for r in res.records
    ]
    write_csv(cfg["out"], "tune", cfg, header, rows)
    # the cross-chain objective SE is undefined (nan) for single-chain runs;
    # the finiteness contract covers the estimates themselves
    estimates = [[*map(float, r.params), r.objective, r.grad_norm] for r in res.records]
    return 0 if _all_finite(estimates) else 1


# ---------------------------------------------------------------------------
# sensitivity
# ---------------------------------------------------------------------------


def cmd_sensitivity(cfg: dict, threads: int = 1) -> int:
    priors = ["original", "adjusted"] if cfg["prior"] == "both" else [cfg["prior"]]
    rows = []
    for spec in priors:
        if "dataset" in cfg:
            try:
                model = regression.load_csv(cfg["dataset"], cfg["response"], prior_spec=spec)
            except FileNotFoundError:
                print(f"error: dataset file not found: {cfg['dataset']}", file=sys.stderr)
                return 2
        else:
            model, _, _, _ = regression.synthetic_model(
                n_obs=int(cfg["synthetic_n"]),
                n_covariates=int(cfg["synthetic_covariates"]),
                seed=int(cfg["synthetic_seed"]),
                prior_spec=spec,
            )
        sens = regression.sensitivity_run(
            model,
            n_chains=int(cfg["n_chains"]),
            n_steps=int(cfg["n_steps"]),
            burn_in=int(cfg["burn_in"]),
            seed=int(cfg["seed"]),
            pruning_prob=float(cfg["pruning"]),
            power_scaled=bool(cfg["power_scaled"]),
        )
        for i, name in enumerate(sens.param_names):
            e = sens.estimates[i]
            rows.append(
                [name, spec, float(sens.posterior_means[i]), float(sens.posterior_mean_ses[i]),
                 e.value, e.std_error]
            )
    header = ["param", "prior_spec", "mean", "mean_se", "sensitivity", "sensitivity_se"]
    write_csv(cfg["out"], "sensitivity", cfg, header, rows)
    return 0 if _all_finite(rows) else 1


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def cmd_diagnose(cfg: dict, threads: int = 1) -> int:
    target = _make_target(cfg)
    n_chains = int(cfg["n_chains"])
    if n_chains < 2:
        raise ConfigError("diagnose needs at least 2 chains (R-hat is undefined for 1)")
    d = target.dim
    scale = cfg.get("proposal_scale", 2.38 / np.sqrt(d))
    # scalar or per-coordinate list -> diagonal; list of rows -> Cholesky factor
    scale = float(scale) * np.ones(d) if np.isscalar(scale) else np.asarray(scale, dtype=float)
    init = cfg.get("initial_state")
    init = np.zeros(d) if init is None else np.asarray(init, dtype=float)
    config = ChainConfig(
        n_steps=int(cfg["n_steps"]), burn_in=int(cfg["burn_in"]), seed=int(cfg["seed"]),
        theta=float(cfg["theta"]), initial_state=init,
    )
    draws, accept = sample_chains(target, GaussianRandomWalk(scale), config, n_chains)
    rows = diagnose_rows(draws, accept)
    header = ["param", "mean", "std", "mc_se", "ess_bulk", "ess_tail", "rhat", "accept_rate"]
    write_csv(cfg["out"], "diagnose", cfg, header, rows)
    return 0 if _all_finite(rows) else 1


def diagnose_rows(draws, accept_rate: float) -> list[list]:
    """Diagnostic table rows from draws (chains, steps, params); the test
    hook for injecting synthetic chains."""
    rows = []
    for r in diagnostics.summarize(draws):
        rows.append(
            [r["param"], r["mean"], r["std"], r["mc_se"], r["ess_bulk"], r["ess_tail"],
             r["rhat"], float(accept_rate)]
        )
    return rows


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mhgrad", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sweep", "tune", "sensitivity", "diagnose"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="TOML configuration file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="override the output CSV path")
        sp.add_argument("--threads", type=int, default=1,
                        help="max concurrent runs for independent sub-tasks")
        sp.add_argument("--paper-scale", action="store_true",
                        help="restore the publication-scale step counts")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.command, {"seed": args.seed, "out": args.out})
        if args.paper_scale:
            cfg.update(_PAPER_SCALE[args.command])
        handler = {
            "sweep": cmd_sweep,
            "tune": cmd_tune,
            "sensitivity": cmd_sensitivity,
            "diagnose": cmd_diagnose,
        }[args.command]
        code = handler(cfg, threads=max(1, args.threads))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if code == 0:
        print(f"wrote {cfg['out']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
