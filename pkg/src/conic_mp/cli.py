"""Command line entry point: ``conic-mp <command> --config cfg.json``.

Exit codes: 0 on success, 2 when an assertion-mode check fails, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from .errors import ConicMPError
from .harness import (
    ExperimentConfig,
    cmd_bound_check,
    cmd_conewidth,
    cmd_garrote,
    cmd_nmf,
    cmd_synthetic,
    cmd_tightness,
    reference_optimum,
    run_solver,
    synthetic_instance,
    theta_family,
    trace_rho,
)
from .atoms import radius
from .geometry import theoretical_beta
from .objectives import least_squares

COMMANDS = ("synthetic", "bound-check", "tightness", "garrote", "nmf", "conewidth")
RATIO_LIMIT = 1.0 + 1e-9

log = logging.getLogger("conic_mp")


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def _bound_check(cfg):
    theorem = cfg.params.get("theorem", "Sublinear")
    solver = cfg.params.get("solver", "nnmp")
    out = []
    if theorem == "Sublinear":
        d = int(cfg.sizes.get("d", 50))
        n_atoms = int(cfg.sizes.get("n_atoms", 100))
        for seed in cfg.seeds:
            aset, obj, _ = synthetic_instance(seed, d, n_atoms)
            f_star, x_star, prov = reference_optimum(obj, aset)
            tr = run_solver(solver, obj, aset, cfg.solver_config(seed=seed, keep_history=True))
            f_star = min(f_star, float(tr.f_values.min()))
            # Euclidean ratios bound the gauge from below, weight sums from above
            for mode, star in (("euclidean", np.linalg.norm(x_star) / radius(aset)),
                               ("weights", prov["weight_sum"])):
                rho = trace_rho(tr, aset, star, mode)
                res = cmd_bound_check(tr, aset, obj, "Sublinear", f_star=f_star, rho=rho, reference=prov)
                out.append({"seed": seed, "rho_mode": mode, "rho": rho,
                            "min_margin": res.min_margin, "passed": res.passed})
    else:
        theta = float(cfg.params.get("theta", math.pi / 2))
        aset = theta_family(theta)
        for y in cfg.params.get("targets", [[-1.0, 1.0]]):
            obj = least_squares(y)
            beta = theoretical_beta(aset, obj.L, obj.mu, cfg.delta)
            tr = run_solver(solver, obj, aset, cfg.solver_config())
            res = cmd_bound_check(tr, aset, obj, "Linear", f_star=0.0, beta=beta)
            out.append({"target": y, "beta": res.beta, "checked_steps": res.checked_steps,
                        "min_margin": res.min_margin, "passed": res.passed})
    _emit({"theorem": theorem, "solver": solver, "results": out})
    return 0 if all(r["passed"] for r in out) else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="conic-mp", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, help="run a single seed (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if args.out:
            raw["out_dir"] = args.out
        if args.seed is not None:
            raw["seeds"] = [args.seed]
        raw.setdefault("experiment", args.command)
        cfg = ExperimentConfig.from_dict(raw)

        if args.command == "synthetic":
            res = cmd_synthetic(cfg)
            _emit({n: v[-1] for n, v in res["summary"]["median_eps"].items()})
            return 0
        if args.command == "bound-check":
            return _bound_check(cfg)
        if args.command == "tightness":
            res = cmd_tightness(cfg)
            _emit(res["rows"])
            worst = max((r["ratio_max"] for r in res["rows"] if r["n_good"]), default=0.0)
            return 0 if worst <= RATIO_LIMIT else 2
        if args.command == "garrote":
            dataset = cfg.params.get("dataset")
            if dataset is None:
                raise ValueError("garrote needs 'dataset' in the config")
            _emit(cmd_garrote(cfg, dataset)["summary"])
            return 0
        if args.command == "nmf":
            res = cmd_nmf(cfg)
            _emit([{k: r[k] for k in ("seed", "solver", "n_atoms", "monotone", "nonnegative")}
                   | {"final_relative_residual": r["relative_residual"][-1]} for r in res["results"]])
            return 0 if all(r["monotone"] and r["nonnegative"] for r in res["results"]) else 2
        _emit(cmd_conewidth(cfg))
        return 0
    except (ConicMPError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"conic-mp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
