"""Experiment drivers and rate checks.

Each ``cmd_*`` function takes an :class:`ExperimentConfig`, runs its solvers
sequentially (runs are deterministic given the seed) and, when an output
directory is configured, writes plot-ready CSV files plus JSON sidecars.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .atoms import FiniteDictionary, RankOneNonNeg, atomic_norm, radius
from .coneproj import min_over_cone
from .errors import MissingReferenceOptimum
from .geometry import cone_width_2d, mdw_report, theoretical_beta
from .objectives import (
    GarroteProblem,
    least_squares,
    load_labeled_csv,
    logistic_garrote,
    matrix_ls,
)
from .solvers import (
    SolverConfig,
    StepType,
    Trace,
    run_amp,
    run_fcmp,
    run_fw_rescaled,
    run_gmp,
    run_nnmp,
    run_pwmp,
    write_trace_csv,
    write_trace_json,
)

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "BoundCheckResult",
    "SOLVERS",
    "run_solver",
    "synthetic_instance",
    "theta_family",
    "reference_optimum",
    "trace_rho",
    "cmd_bound_check",
    "cmd_synthetic",
    "cmd_tightness",
    "cmd_garrote",
    "cmd_nmf",
    "cmd_conewidth",
    "certificate_gap",
]

SOLVERS = ("nnmp", "amp", "pwmp", "fcmp0", "fcmp1", "fw", "gmp0", "gmp1")
BOUND_SLACK = 1e-9


@dataclass
class ExperimentConfig:
    """JSON-backed settings shared by all experiments.

    ``sizes`` and ``params`` hold experiment-specific knobs; unknown keys are
    kept so configs can carry notes.
    """

    experiment: str = "synthetic"
    sizes: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    solvers: list = field(default_factory=list)
    out_dir: Optional[str] = None
    delta: float = 1.0
    tolerances: dict = field(default_factory=dict)
    max_iters: int = 200
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        self.seeds = [int(s) for s in self.seeds]
        for s in self.solvers:
            if s not in SOLVERS:
                raise ValueError(f"unknown solver {s!r}; choose from {SOLVERS}")
        if self.out_dir is not None:
            Path(self.out_dir).mkdir(parents=True, exist_ok=True)
            if not os.access(self.out_dir, os.W_OK):
                raise PermissionError(f"output directory {self.out_dir} is not writable")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        extra = {k: v for k, v in d.items() if k not in cls.__dataclass_fields__}
        cfg = cls(**known)
        cfg.params = {**extra, **cfg.params}
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def solver_config(self, **overrides) -> SolverConfig:
        kw = dict(max_iters=self.max_iters, delta=self.delta, tol=self.tolerances.get("solver"))
        kw.update(overrides)
        return SolverConfig(**kw)


@dataclass
class BoundCheckResult:
    margins: np.ndarray
    min_margin: float
    passed: bool
    rho: Optional[float]
    reference: dict
    theorem: str = "Sublinear"
    beta: Optional[float] = None
    checked_steps: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["margins"] = [float(m) for m in self.margins]
        return d


def run_solver(name, obj, aset, cfg: SolverConfig, tau: Optional[float] = None) -> Trace:
    if name == "nnmp":
        return run_nnmp(obj, aset, cfg)
    if name == "amp":
        return run_amp(obj, aset, cfg)
    if name == "pwmp":
        return run_pwmp(obj, aset, cfg)
    if name in ("fcmp0", "fcmp1"):
        return run_fcmp(obj, aset, cfg, variant=int(name[-1]))
    if name in ("gmp0", "gmp1"):
        return run_gmp(obj, aset, cfg, variant=int(name[-1]))
    if name == "fw":
        if tau is None:
            raise ValueError("fw needs tau")
        return run_fw_rescaled(obj, aset, tau, cfg)
    raise ValueError(f"unknown solver {name!r}")


# ---------------------------------------------------------------------------
# instances


def synthetic_instance(seed: int, d: int = 50, n_atoms: int = 100, y_norm: float = 5.0):
    """Unit-norm first-orthant atoms and a non-negative target of norm ``y_norm``."""
    rng = np.random.default_rng(seed)
    V = np.abs(rng.normal(size=(n_atoms, d)))
    V /= np.linalg.norm(V, axis=1)[:, None]
    y = np.abs(rng.normal(size=d))
    y *= y_norm / np.linalg.norm(y)
    meta = {"seed": seed, "d": d, "n_atoms": n_atoms, "y_norm": y_norm,
            "target_rule": "iid |N(0,1)| entries rescaled to the given norm"}
    return FiniteDictionary(V, name=f"synthetic-{seed}"), least_squares(y), meta


def theta_family(theta: float, symmetric: bool = True) -> FiniteDictionary:
    """``{0, (-1, 0), (cos t, sin t)}``, optionally with the negated atoms."""
    c, s = math.cos(theta), math.sin(theta)
    rows = [[0.0, 0.0], [-1.0, 0.0], [c, s]]
    if symmetric:
        rows += [[1.0, 0.0], [-c, -s]]
    return FiniteDictionary(rows, name=f"theta-{theta:.6g}")


def reference_optimum(obj, aset, max_iters: int = 100_000):
    """Long FCMP-V1 run; returns ``(f_star, x_star, provenance)``."""
    tr = run_fcmp(obj, aset, SolverConfig(max_iters=max_iters), variant=1)
    prov = {"method": "fcmp1", "max_iters": max_iters, "iterations": tr.n_steps,
            "termination": tr.metadata["termination"], "weight_sum": float(tr.active.weights.sum())}
    return tr.final_f, tr.x.copy(), prov


# ---------------------------------------------------------------------------
# rate checks


def trace_rho(trace: Trace, aset, star: Optional[float] = None, mode: str = "gauge") -> float:
    """ρ over the recorded iterates, joined with ``star`` (the value for x*).

    ``gauge`` solves the gauge LP per iterate; ``weights`` uses the weight
    sum of each iterate's decomposition (an upper bound on the gauge);
    ``euclidean`` uses ``||x|| / radius`` (a lower bound).  The first two need
    a trace run with ``keep_history=True``.
    """
    if mode == "euclidean":
        vals = [trace.metadata["max_iterate_norm"] / radius(aset)]
    elif not trace.iterates:
        raise ValueError("trace has no stored iterates; run with keep_history=True")
    elif mode == "weights":
        vals = [sum(w for _, w in sup) for sup in trace.supports]
    elif mode == "gauge":
        vals = [atomic_norm(x, aset) for x in trace.iterates]
    else:
        raise ValueError(f"unknown rho mode {mode!r}")
    if star is not None:
        vals.append(float(star))
    return float(max(vals))


def cmd_bound_check(trace: Trace, atoms, objective, theorem: str = "Sublinear",
                    f_star: Optional[float] = None, rho: Optional[float] = None,
                    beta: Optional[float] = None, noise_floor: float = 1e-12,
                    reference: Optional[dict] = None) -> BoundCheckResult:
    """Check a trace against the sublinear or the per-good-step linear rate.

    Sublinear: ``eps_t <= 4 (2 L rho^2 R^2 + eps_0) / (t + 4)`` at every
    record, with ``1e-9`` slack for reference error.  Linear:
    ``eps_{t+1} <= (1 - beta) eps_t`` after every good step whose
    ``eps_t`` is above ``noise_floor``; ``beta`` is halved for AMP traces.
    """
    if f_star is None:
        raise MissingReferenceOptimum("a reference optimum f(x*) is required")
    eps = trace.eps(f_star)
    ref = dict(reference or {})
    if theorem == "Sublinear":
        if rho is None:
            raise ValueError("the sublinear check needs rho")
        R = radius(atoms)
        L = objective.L
        t = np.arange(len(eps))
        bound = 4.0 * (2.0 * L * rho ** 2 * R ** 2 + eps[0]) / (t + 4.0)
        margins = bound + BOUND_SLACK - eps
        checked = len(eps)
        b_eff = None
    elif theorem == "Linear":
        if beta is None:
            raise ValueError("the linear check needs beta")
        b_eff = beta / 2.0 if trace.metadata.get("solver") == "amp" else beta
        margins = []
        for i, r in enumerate(trace.records[:-1]):
            if r.good_step and eps[i] > noise_floor:
                margins.append((1.0 - b_eff) * eps[i] - eps[i + 1])
        margins = np.array(margins)
        checked = len(margins)
    else:
        raise ValueError("theorem must be 'Sublinear' or 'Linear'")
    margins = np.asarray(margins, dtype=float)
    min_margin = float(margins.min()) if margins.size else math.inf
    passed = bool(min_margin >= 0.0)
    return BoundCheckResult(margins, min_margin, passed, rho, ref, theorem, b_eff, checked)


def certificate_gap(trace: Trace, obj, aset: FiniteDictionary) -> float:
    """Decrease a full-cone polish achieves from the final iterate.

    The polish warm-starts from the trace's weights expressed over all atoms.
    """
    atoms = [a for a in aset.atoms if not a.is_zero()]
    index = {a.id: i for i, a in enumerate(atoms)}
    warm = np.zeros(len(atoms))
    for a, w in trace.active.items():
        warm[index[a.id]] += w
    sol = min_over_cone(atoms, obj, warm_start=warm)
    x = np.asarray(sol.weights) @ np.stack([a.vector for a in atoms])
    return float(trace.final_f - obj(x))


# ---------------------------------------------------------------------------
# experiments


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_synthetic(cfg: ExperimentConfig) -> dict:
    """Least-squares benchmark on random first-orthant atoms.

    Returns ``{"runs": [...], "summary": {...}}``; each run carries the trace
    and the effective reference value used for its suboptimality.
    """
    d = int(cfg.sizes.get("d", 50))
    n_atoms = int(cfg.sizes.get("n_atoms", 100))
    y_norm = float(cfg.params.get("y_norm", 5.0))
    solvers = cfg.solvers or ["nnmp", "amp", "pwmp", "fcmp0", "fcmp1", "fw"]
    keep = bool(cfg.params.get("keep_history", False))
    ref_iters = int(cfg.params.get("reference_iters", 100_000))
    tau_factor = float(cfg.params.get("tau_factor", 10.0))
    runs = []
    for seed in cfg.seeds:
        aset, obj, meta = synthetic_instance(seed, d, n_atoms, y_norm)
        f_ref, x_star, prov = reference_optimum(obj, aset, ref_iters)
        tau = tau_factor * float(np.linalg.norm(obj.target))
        traces = {}
        for name in solvers:
            scfg = cfg.solver_config(seed=seed, keep_history=keep)
            traces[name] = run_solver(name, obj, aset, scfg, tau=tau)
        # every observed value is attainable, so the reference cannot sit above it
        f_star = min([f_ref] + [float(tr.f_values.min()) for tr in traces.values()])
        for name, tr in traces.items():
            runs.append({"seed": seed, "solver": name, "trace": tr, "f_star": f_star,
                         "x_star": x_star, "aset": aset, "obj": obj,
                         "reference": {**prov, "f_ref": f_ref, "f_star_effective": f_star},
                         "instance": meta})

    T = cfg.max_iters
    summary = {"iterations": T, "median_eps": {}}
    for name in solvers:
        curves = []
        for r in runs:
            if r["solver"] != name:
                continue
            e = r["trace"].eps(r["f_star"])
            # a terminated run stays at its last value
            curves.append(np.concatenate([e, np.full(max(0, T + 1 - len(e)), e[-1])])[: T + 1])
        summary["median_eps"][name] = np.median(np.array(curves), axis=0).tolist()

    if cfg.out_dir:
        out = Path(cfg.out_dir)
        for r in runs:
            stem = out / f"synthetic_seed{r['seed']}_{r['solver']}"
            write_trace_csv(r["trace"], f"{stem}.csv", f_star=r["f_star"])
            write_trace_json(r["trace"], f"{stem}.json",
                             extra={"reference": r["reference"], "instance": r["instance"]})
        rows = [[t] + [summary["median_eps"][n][t] for n in solvers] for t in range(T + 1)]
        _write_rows(out / "synthetic_median_eps.csv", ["iter"] + solvers, rows)
        (out / "synthetic_summary.json").write_text(json.dumps(
            {"config": asdict(cfg), "final_median_eps": {n: summary["median_eps"][n][-1] for n in solvers}},
            indent=2, sort_keys=True) + "\n")
    return {"runs": runs, "summary": summary}


def tightness_targets(seed: int, n: int = 20):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 2.0, size=(n, 2))
    return np.column_stack([-a[:, 0], a[:, 1]])


def cmd_tightness(cfg: ExperimentConfig) -> dict:
    """Empirical versus theoretical per-good-step decrease on the 2D family.

    For each good step with ``eps_t`` above the noise floor the ratio
    ``beta / (1 - eps_{t+1} / eps_t)`` is recorded; values <= 1 mean the
    theoretical factor is an upper bound on the observed one.
    """
    thetas = cfg.params.get("thetas")
    if thetas is None:
        thetas = np.linspace(math.pi / 16, math.pi / 2, 8).tolist()
    n_targets = int(cfg.params.get("n_targets", 20))
    floor = float(cfg.tolerances.get("noise_floor", 1e-12))
    solvers = cfg.solvers or ["pwmp", "amp"]
    targets = cfg.params.get("targets")
    rows, checks = [], []
    for theta in thetas:
        aset = theta_family(theta)
        cw = cone_width_2d(aset.matrix).value
        Y = np.array(targets, dtype=float) if targets is not None else tightness_targets(cfg.seeds[0], n_targets)
        for name in solvers:
            ratios = []
            for y in Y:
                obj = least_squares(y)
                beta = theoretical_beta(aset, obj.L, obj.mu, cfg.delta, cone_width=cw)
                tr = run_solver(name, obj, aset, cfg.solver_config(max_iters=cfg.max_iters))
                # cone(A) is the whole plane, so x* = y
                res = cmd_bound_check(tr, aset, obj, "Linear", f_star=0.0, beta=beta, noise_floor=floor)
                checks.append({"theta": theta, "solver": name, "target": y.tolist(), "result": res})
                eps = tr.f_values
                b_eff = res.beta
                for i, r in enumerate(tr.records[:-1]):
                    # a step that lands on the optimum carries no rate information
                    if r.good_step and eps[i] > floor and eps[i + 1] > floor:
                        dec = 1.0 - eps[i + 1] / eps[i]
                        ratios.append(b_eff / dec if dec > 0 else math.inf)
            r = np.array(ratios)
            rows.append({"theta": float(theta), "solver": name, "cone_width": cw,
                         "beta": theoretical_beta(aset, 1.0, 1.0, cfg.delta, cone_width=cw),
                         "n_good": int(r.size),
                         "ratio_min": float(r.min()) if r.size else math.nan,
                         "ratio_mean": float(r.mean()) if r.size else math.nan,
                         "ratio_max": float(r.max()) if r.size else math.nan})
    if cfg.out_dir:
        header = ["theta", "solver", "cone_width", "beta", "n_good", "ratio_min", "ratio_mean", "ratio_max"]
        _write_rows(Path(cfg.out_dir) / "tightness.csv", header, [[row[h] for h in header] for row in rows])
    return {"rows": rows, "checks": checks}


def _accuracy(X, y, beta, c):
    logits = (X * beta[None, :]) @ c
    return float(np.mean((logits > 0).astype(float) == y))


def garrote_split(X, y, seed: int, train_frac: float = 0.5):
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(y))
    k = int(round(train_frac * len(y)))
    tr, te = idx[:k], idx[k:]
    mean = X[tr].mean(axis=0)
    std = X[tr].std(axis=0)
    std[std == 0] = 1.0

    def prep(A):
        Z = (A - mean) / std
        return np.column_stack([Z, np.ones(len(A))])

    return prep(X[tr]), y[tr], prep(X[te]), y[te]


def cmd_garrote(cfg: ExperimentConfig, dataset) -> dict:
    """Non-negative garrote on a logistic fit, over random train/test splits."""
    X, y = load_labeled_csv(dataset)
    n_splits = int(cfg.params.get("n_splits", 100))
    train_frac = float(cfg.params.get("train_frac", 0.5))
    solvers = cfg.solvers or ["nnmp", "pwmp", "fcmp1"]
    # separable splits have no attained optimum, so cap the inner solver
    inner = int(cfg.params.get("inner_max_iters", 100))
    max_iters = int(cfg.params.get("garrote_max_iters", 100))
    base = cfg.seeds[0]
    acc = {n: {"train": [], "test": []} for n in solvers}
    for k in range(n_splits):
        Xtr, ytr, Xte, yte = garrote_split(X, y, base + k, train_frac)
        prob = GarroteProblem.fit(Xtr, ytr)
        obj = logistic_garrote(prob)
        aset = FiniteDictionary(np.eye(prob.n_features), name="standard-basis")
        for name in solvers:
            tr = run_solver(name, obj, aset, cfg.solver_config(
                seed=base + k, max_iters=max_iters, inner_max_iters=inner))
            c = tr.x
            acc[name]["train"].append(_accuracy(Xtr, ytr, prob.base_coefficients, c))
            acc[name]["test"].append(_accuracy(Xte, yte, prob.base_coefficients, c))
    summary = {n: {f"{part}_{stat}": float(fn(acc[n][part]))
                   for part in ("train", "test") for stat, fn in (("median", np.median), ("std", np.std))}
               for n in solvers}
    meta = {"n_splits": n_splits, "train_frac": train_frac, "split_rule": "seeded permutation",
            "base_fit": "damped Newton, ridge 1e-6, 100 iterations", "dataset": str(dataset),
            "max_iters": max_iters, "inner_max_iters": inner}
    if cfg.out_dir:
        (Path(cfg.out_dir) / "garrote_summary.json").write_text(
            json.dumps({"summary": summary, "meta": meta}, indent=2, sort_keys=True) + "\n")
    return {"summary": summary, "accuracies": acc, "meta": meta}


def nmf_matrix(seed: int, m: int = 20, n: int = 20, rank: int = 5) -> np.ndarray:
    """Product of uniform non-negative factors."""
    rng = np.random.default_rng(seed)
    return rng.uniform(size=(m, rank)) @ rng.uniform(size=(rank, n))


def cmd_nmf(cfg: ExperimentConfig) -> dict:
    """Greedy rank-one NMF with the truncated power method oracle.

    The budget ``K`` is the number of iterations; iteration ``k`` adds at
    most one atom.  Reports the objective and the relative residual
    ``||M - X||_F / ||M||_F`` after each iteration.
    """
    m = int(cfg.sizes.get("m", 20))
    n = int(cfg.sizes.get("n", 20))
    rank = int(cfg.sizes.get("rank", 5))
    K = int(cfg.params.get("budget", 8))
    lmo_iters = int(cfg.params.get("lmo_iters", 200))
    solvers = cfg.solvers or ["pwmp", "fcmp1"]
    results = []
    for seed in cfg.seeds:
        M = nmf_matrix(seed, m, n, rank)
        obj = matrix_ls(M)
        aset = RankOneNonNeg(m, n, seed=seed)
        normM = float(np.linalg.norm(M))
        for name in solvers:
            tr = run_solver(name, obj, aset, cfg.solver_config(max_iters=K, seed=seed, lmo_iters=lmo_iters))
            f = tr.f_values
            f = np.concatenate([f, np.full(max(0, K + 1 - len(f)), f[-1])])
            monotone = bool(np.all(np.diff(f) <= 1e-12 * max(1.0, f[0])))
            nonneg = all(np.all(a.u >= 0) and np.all(a.v >= 0) for a in tr.active.atoms) and \
                bool(np.all(tr.active.weights >= 0))
            results.append({"seed": seed, "solver": name, "objective": f.tolist(),
                            "relative_residual": (np.sqrt(np.maximum(2.0 * f, 0.0)) / normM).tolist(),
                            "n_atoms": len(tr.active), "monotone": monotone, "nonnegative": nonneg})
    if cfg.out_dir:
        rows = [[r["seed"], r["solver"], k, r["objective"][k], r["relative_residual"][k]]
                for r in results for k in range(K + 1)]
        _write_rows(Path(cfg.out_dir) / "nmf.csv", ["seed", "solver", "budget", "objective", "relative_residual"], rows)
    return {"results": results, "budget": K,
            "reference_values": {"CBCL_K10_FCMP": 2.2364e3, "note": "published full-size value, not reproduced"}}


def cmd_conewidth(cfg: ExperimentConfig) -> dict:
    """Cone width and mdw of a planar set given by ``atoms``, ``atoms_csv`` or ``theta``."""
    p = cfg.params
    if "atoms" in p:
        aset = FiniteDictionary(p["atoms"])
    elif "atoms_csv" in p:
        aset = FiniteDictionary.from_csv(p["atoms_csv"])
    elif "theta" in p:
        aset = theta_family(float(p["theta"]), symmetric=bool(p.get("symmetric", True)))
    else:
        raise ValueError("conewidth needs 'atoms', 'atoms_csv' or 'theta' in the config")
    report = cone_width_2d(aset.matrix)
    out = {"cone_width": report.to_dict(), "mdw": mdw_report(aset.matrix).to_dict(),
           "atoms": aset.matrix.tolist()}
    if cfg.out_dir:
        (Path(cfg.out_dir) / "conewidth.json").write_text(json.dumps(out, indent=2) + "\n")
    return out
