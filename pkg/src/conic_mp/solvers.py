"""Greedy solvers over the conic hull of an atom set.

Every runner returns a :class:`Trace`.  ``trace.records[t]`` holds ``f(x_t)``
together with the step that was taken *from* ``x_t``; the last record is
always of type ``Terminated`` and carries the final objective value.

Implemented engines:

* :func:`run_gmp` -- generalized matching pursuit over ``lin(A)`` (baseline).
* :func:`run_nnmp` -- non-negative matching pursuit with the toward-origin
  direction.
* :func:`run_amp`, :func:`run_pwmp` -- away-step and pairwise variants.
* :func:`run_fcmp` -- fully corrective variants 0 and 1.
* :func:`run_fw_rescaled` -- Frank-Wolfe over ``conv(tau * A)``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .atoms import (
    Atom,
    FiniteDictionary,
    RankOneNonNeg,
    atom_inner,
    atomic_norm,
    lmo_approx,
    lmo_exact,
)
from .coneproj import min_over_cone, nnls_cone
from .errors import (
    ConicMPError,
    DegenerateQuery,
    NonFiniteValue,
    SetTooLarge,
    SingularCorrection,
    SubproblemFailure,
)

__all__ = [
    "ActiveSet",
    "StepType",
    "StepRecord",
    "SolverConfig",
    "Trace",
    "run_gmp",
    "run_nnmp",
    "run_amp",
    "run_pwmp",
    "run_fcmp",
    "run_fw_rescaled",
    "good_step_count",
    "write_trace_csv",
    "read_trace_csv",
    "write_trace_json",
]

REFRESH_EVERY = 100


class ActiveSet:
    """Atoms with non-zero weight and the iterate they reconstruct.

    Weights are kept strictly above ``prune_eps``; zero-payload atoms are
    never stored since they contribute nothing to the iterate.  With
    ``signed=True`` (GMP over ``lin(A)``) weights may be of either sign and
    only ``|w| <= prune_eps`` is pruned.
    """

    def __init__(self, shape, prune_eps: float = 1e-12, signed: bool = False):
        self.shape = tuple(shape)
        self.prune_eps = float(prune_eps)
        self.signed = signed
        self._entries: dict = {}
        self._x = np.zeros(self.shape)
        self._updates = 0

    # -- queries -----------------------------------------------------------
    def __len__(self):
        return len(self._entries)

    def __contains__(self, atom):
        return atom.id in self._entries

    @property
    def atoms(self) -> list:
        return [a for a, _ in self._entries.values()]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self._entries.values()], dtype=float)

    def weight(self, atom) -> float:
        entry = self._entries.get(atom.id)
        return 0.0 if entry is None else entry[1]

    def items(self):
        return list(self._entries.values())

    @property
    def x(self) -> np.ndarray:
        return self._x

    def recompute(self) -> np.ndarray:
        x = np.zeros(self.shape)
        for a, w in self._entries.values():
            x += w * a.dense()
        return x

    def copy(self) -> "ActiveSet":
        other = ActiveSet(self.shape, self.prune_eps, self.signed)
        other._entries = dict(self._entries)
        other._x = self._x.copy()
        other._updates = self._updates
        return other

    # -- updates -----------------------------------------------------------
    def _tick(self):
        self._updates += 1
        if self._updates % REFRESH_EVERY == 0:
            self._x = self.recompute()

    def _keep(self, w) -> bool:
        return abs(w) > self.prune_eps if self.signed else w > self.prune_eps

    def add(self, atom: Atom, amount: float) -> None:
        """Add ``amount`` to the weight of ``atom``, merging duplicates."""
        if atom.is_zero() or amount == 0.0:
            return
        old = self.weight(atom)
        new = old + amount
        if not self.signed and new < 0.0:
            new = 0.0
        if not self._keep(new):
            new = 0.0
        self._x = self._x + (new - old) * atom.dense()
        if new != 0.0:
            self._entries[atom.id] = (atom, new)
        else:
            self._entries.pop(atom.id, None)
        self._tick()

    def remove(self, atom: Atom) -> None:
        entry = self._entries.pop(atom.id, None)
        if entry is not None:
            self._x = self._x - entry[1] * atom.dense()
            self._tick()

    def scale(self, factor: float) -> None:
        if factor <= 0.0 and not self.signed:
            self._entries.clear()
            self._x = np.zeros(self.shape)
            self._tick()
            return
        before = len(self._entries)
        self._entries = {k: (a, w * factor) for k, (a, w) in self._entries.items()
                         if self._keep(w * factor)}
        self._x = self.recompute() if len(self._entries) < before else self._x * factor
        self._tick()

    def set_weights(self, atoms, weights) -> list:
        """Replace the whole representation; returns ids that got pruned."""
        self._entries = {}
        pruned = []
        for a, w in zip(atoms, weights):
            w = float(w)
            if a.is_zero():
                continue
            if self._keep(w):
                if a.id in self._entries:
                    w += self._entries[a.id][1]
                self._entries[a.id] = (a, w)
            else:
                pruned.append(a.id)
        self._x = self.recompute()
        self._tick()
        return pruned


class StepType(str, enum.Enum):
    REGULAR = "Regular"
    TOWARD_ORIGIN = "TowardOrigin"
    AWAY = "Away"
    PAIRWISE = "Pairwise"
    DROP = "Drop"
    FULL_CORRECTION = "FullCorrection"
    TERMINATED = "Terminated"


@dataclass(frozen=True)
class StepRecord:
    iter: int
    f_value: float
    step_type: StepType
    gamma: float = 0.0
    gamma_was_clipped: bool = False
    good_step: bool = False
    active_size: int = 0
    lmo_score: float = 0.0


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters shared by every engine.

    ``tol=None`` means ``1e-10 * (1 + |f(x_0)|)``.  ``normalization`` picks
    how the toward-origin direction ``-x / ||x||`` is scaled: ``"euclidean"``
    or ``"atomic"`` (gauge LP, finite dictionaries only).
    """

    max_iters: int = 1000
    tol: Optional[float] = None
    delta: float = 1.0
    normalization: str = "euclidean"
    prune_eps: float = 1e-12
    seed: int = 0
    lmo_iters: int = 100
    inner_max_iters: int = 20_000
    keep_history: bool = False

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.tol is not None and self.tol < 0:
            raise ValueError("tol must be >= 0")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.normalization not in ("euclidean", "atomic"):
            raise ValueError("normalization must be 'euclidean' or 'atomic'")


@dataclass
class Trace:
    records: list
    active: ActiveSet
    metadata: dict = field(default_factory=dict)
    iterates: list = field(default_factory=list)
    supports: list = field(default_factory=list)

    @property
    def f_values(self) -> np.ndarray:
        return np.array([r.f_value for r in self.records])

    @property
    def n_steps(self) -> int:
        return sum(r.step_type is not StepType.TERMINATED for r in self.records)

    @property
    def final_f(self) -> float:
        return self.records[-1].f_value

    @property
    def x(self) -> np.ndarray:
        return self.active.x

    def eps(self, f_star: float) -> np.ndarray:
        return self.f_values - f_star


def good_step_count(trace: Trace) -> int:
    """Number of good steps k(t) in the trace."""
    return sum(1 for r in trace.records if r.good_step)


# ---------------------------------------------------------------------------
# shared plumbing


def _check_finite(value, what, it):
    if not np.all(np.isfinite(value)):
        raise NonFiniteValue(f"{what} is not finite at iteration {it}")


class _Run:
    """Book-keeping common to all engines."""

    def __init__(self, name, obj, aset, cfg, active):
        self.name = name
        self.obj = obj
        self.aset = aset
        self.cfg = cfg
        self.active = active
        self.records = []
        self.iterates = []
        self.supports = []
        self.max_norm = 0.0
        self.inner_iters = 0
        self.t0 = time.perf_counter()
        self.it = 0
        self.f, self.g = self.evaluate()
        self.tol = cfg.tol if cfg.tol is not None else 1e-10 * (1.0 + abs(self.f))

    def evaluate(self):
        x = self.active.x
        f = float(self.obj.eval(x))
        _check_finite(f, "objective", self.it)
        g = np.asarray(self.obj.grad(x), dtype=float)
        _check_finite(g, "gradient", self.it)
        self.max_norm = max(self.max_norm, float(np.linalg.norm(x)))
        if self.cfg.keep_history:
            self.iterates.append(x.copy())
            self.supports.append(self.active.items())
        return f, g

    def lmo(self):
        """(atom, score); atom is None when no usable direction was found."""
        if isinstance(self.aset, RankOneNonNeg):
            try:
                ans = lmo_approx(self.g, self.aset, self.cfg.delta,
                                 iters=self.cfg.lmo_iters, seed=self.cfg.seed)
            except DegenerateQuery:
                return None, 0.0
            if not ans.score < 0.0:
                return None, 0.0
            return ans.atom, ans.score
        ans = lmo_exact(self.g, self.aset)
        return ans.atom, ans.score

    def record(self, step_type, gamma=0.0, clipped=False, good=False, score=0.0):
        self.records.append(StepRecord(self.it, self.f, StepType(step_type), float(gamma),
                                       bool(clipped), bool(good), len(self.active), float(score)))

    def advance(self):
        self.it += 1
        self.f, self.g = self.evaluate()

    def finish(self, reason, score=0.0, extra=None):
        self.record(StepType.TERMINATED, score=score)
        meta = {
            "solver": self.name,
            "objective": self.obj.name,
            "atom_set": self.aset.describe(),
            "config": asdict(self.cfg),
            "tol": self.tol,
            "termination": reason,
            "max_iterate_norm": self.max_norm,
            "inner_iterations": self.inner_iters,
            "wall_time": time.perf_counter() - self.t0,
        }
        if extra:
            meta.update(extra)
        return Trace(self.records, self.active, meta, self.iterates, self.supports)


def _start(aset, cfg, initial, signed=False):
    if cfg.normalization == "atomic" and not isinstance(aset, FiniteDictionary):
        raise SetTooLarge("atomic normalization needs a finite dictionary")
    if initial is not None:
        active = initial.copy()
    else:
        active = ActiveSet(aset.ambient_shape, cfg.prune_eps, signed=signed)
    return active


def _direction_sqnorm(z: Atom, v: Optional[Atom]) -> float:
    if v is None:
        return z.sqnorm()
    return z.sqnorm() + v.sqnorm() - 2.0 * atom_inner(z, v)


# ---------------------------------------------------------------------------
# engines


def run_gmp(obj, aset: FiniteDictionary, cfg: SolverConfig = SolverConfig(), variant: int = 0) -> Trace:
    """Generalized matching pursuit over ``lin(A)``.

    Variant 0 takes the step ``gamma = <-grad, z> / (L ||z||^2)``; variant 1
    refits ``x - grad / L`` over the span of the selected atoms.
    """
    if variant not in (0, 1):
        raise ValueError("variant must be 0 or 1")
    if not isinstance(aset, FiniteDictionary):
        raise SetTooLarge("run_gmp needs a finite dictionary")
    run = _Run(f"gmp{variant}", obj, aset, cfg, _start(aset, cfg, None, signed=True))
    selected = {}
    while run.it < cfg.max_iters:
        z, s = run.lmo()
        if abs(s) <= run.tol or z.is_zero():
            return run.finish("certificate", s)
        if variant == 0:
            gamma = -s / (obj.L * z.sqnorm())
            run.active.add(z, gamma)
            run.record(StepType.REGULAR, gamma, False, True, s)
        else:
            selected[z.id] = z
            atoms = list(selected.values())
            b = (run.active.x - run.g / obj.L).ravel()
            Z = np.stack([a.dense().ravel() for a in atoms], axis=1)
            try:
                w, *_ = np.linalg.lstsq(Z, b, rcond=None)
            except np.linalg.LinAlgError as exc:
                raise SingularCorrection(str(exc)) from exc
            if not np.all(np.isfinite(w)):
                raise SingularCorrection("non-finite least-squares correction")
            run.active.set_weights(atoms, w)
            run.record(StepType.FULL_CORRECTION, 1.0, False, True, s)
        run.advance()
    return run.finish("max_iters")


def _origin_norm(run, x):
    if run.cfg.normalization == "atomic":
        return atomic_norm(x, run.aset)
    return float(np.linalg.norm(x))


def run_nnmp(obj, aset, cfg: SolverConfig = SolverConfig(), initial: Optional[ActiveSet] = None) -> Trace:
    """Non-negative matching pursuit from ``x_0 = 0``.

    Each iteration compares the oracle atom with the toward-origin direction
    ``-x / ||x||`` (skipped while ``x = 0``) and steps along the better one.
    """
    run = _Run("nnmp", obj, aset, cfg, _start(aset, cfg, initial))
    L = obj.L
    while run.it < cfg.max_iters:
        z, s_z = run.lmo()
        x = run.active.x
        s_o = math.inf
        if np.any(x):
            nx = _origin_norm(run, x)
            s_o = -float(np.vdot(run.g, x)) / nx
        if min(s_z, s_o) >= -run.tol:
            return run.finish("certificate", min(s_z, s_o))
        if z is not None and s_z <= s_o:
            gamma = -s_z / (L * z.sqnorm())
            run.active.add(z, gamma)
            run.record(StepType.REGULAR, gamma, False, True, s_z)
        else:
            dsq = float(np.vdot(x, x)) / nx ** 2
            gamma = -s_o / (L * dsq)
            factor = 1.0 - gamma / nx
            clipped = factor < 0.0
            if clipped:
                gamma, factor = nx, 0.0
            run.active.scale(factor)
            run.record(StepType.TOWARD_ORIGIN, gamma, clipped, True, s_o)
        run.advance()
    return run.finish("max_iters")


def _away_atom(run):
    """Active atom with the largest gradient score, or (None, 0)."""
    best, best_s = None, -math.inf
    for a, _ in run.active.items():
        s = a.inner(run.g)
        if s > best_s:
            best, best_s = a, s
    return best, best_s


def run_pwmp(obj, aset, cfg: SolverConfig = SolverConfig(), initial: Optional[ActiveSet] = None) -> Trace:
    """Pairwise non-negative matching pursuit.

    Weight moves from the worst active atom ``v`` to the oracle atom ``z``.
    The origin takes part in the ``v`` scan with unlimited weight, so when no
    active atom has a positive score the step is a plain regular step.  When
    the oracle returns the origin the step only removes weight from ``v`` and
    is recorded as ``Away``.
    """
    run = _Run("pwmp", obj, aset, cfg, _start(aset, cfg, initial))
    L = obj.L
    while run.it < cfg.max_iters:
        z, s_z = run.lmo()
        v, s_v = _away_atom(run)
        if v is None or s_v <= 0.0:
            v, s_v = None, 0.0
        if z is None:
            if v is None:
                return run.finish("certificate", s_z)
            z_atom = None
        else:
            z_atom = z
        score = s_z - s_v
        if score >= -run.tol:
            return run.finish("certificate", score)
        if z_atom is None or z_atom.is_zero():
            dsq = v.sqnorm()
        else:
            dsq = _direction_sqnorm(z_atom, v)
        if dsq <= 0.0:
            return run.finish("empty_direction", score)
        gamma = -score / (L * dsq)
        gmax = math.inf if v is None else run.active.weight(v)
        clipped = gamma >= gmax
        if clipped:
            gamma = gmax
        if z_atom is not None:
            run.active.add(z_atom, gamma)
        if v is not None:
            if clipped:
                run.active.remove(v)
            else:
                run.active.add(v, -gamma)
        if clipped:
            kind, good = StepType.DROP, False
        elif v is None:
            kind, good = StepType.REGULAR, True
        elif z_atom is None or z_atom.is_zero():
            # weight moved onto the origin: geometrically an away step from v
            kind, good = StepType.AWAY, True
        else:
            kind, good = StepType.PAIRWISE, True
        run.record(kind, gamma, clipped, good, score)
        run.advance()
    return run.finish("max_iters")


def run_amp(obj, aset, cfg: SolverConfig = SolverConfig(), initial: Optional[ActiveSet] = None) -> Trace:
    """Away-step non-negative matching pursuit.

    Chooses between the oracle atom ``z`` and the away direction ``-v`` for
    the worst active atom ``v`` (the origin is never an away candidate).
    Away steps are capped at the weight of ``v``; a capped step drops ``v``.
    """
    run = _Run("amp", obj, aset, cfg, _start(aset, cfg, initial))
    L = obj.L
    while run.it < cfg.max_iters:
        z, s_z = run.lmo()
        v, s_v = _away_atom(run)
        s_away = -s_v if v is not None else math.inf
        best = min(s_z, s_away)
        if best >= -run.tol:
            return run.finish("certificate", best)
        if z is not None and s_z <= s_away:
            gamma = -s_z / (L * z.sqnorm())
            run.active.add(z, gamma)
            run.record(StepType.REGULAR, gamma, False, True, s_z)
        else:
            gamma = s_v / (L * v.sqnorm())
            gmax = run.active.weight(v)
            clipped = gamma >= gmax
            if clipped:
                run.active.remove(v)
                run.record(StepType.DROP, gmax, True, False, s_away)
            else:
                run.active.add(v, -gamma)
                run.record(StepType.AWAY, gamma, False, True, s_away)
        run.advance()
    return run.finish("max_iters")


def run_fcmp(obj, aset, cfg: SolverConfig = SolverConfig(), variant: int = 1,
             initial: Optional[ActiveSet] = None) -> Trace:
    """Fully corrective non-negative matching pursuit.

    Variant 0 projects ``x - grad / L`` onto ``cone(S)`` (NNLS); variant 1
    minimizes ``f`` over ``cone(S)``.  Inner solves are warm-started from the
    previous weights, extended by 0 for the new atom.
    """
    if variant not in (0, 1):
        raise ValueError("variant must be 0 or 1")
    run = _Run(f"fcmp{variant}", obj, aset, cfg, _start(aset, cfg, initial))
    unconverged = 0
    while run.it < cfg.max_iters:
        z, s_z = run.lmo()
        x = run.active.x
        nx = float(np.linalg.norm(x))
        s_o = -float(np.vdot(run.g, x))
        add = z is not None and s_z < -run.tol
        if not add and s_o >= -run.tol * max(nx, 1e-300):
            return run.finish("certificate", s_z, {"inner_unconverged": unconverged})
        atoms = run.active.atoms
        warm = list(run.active.weights)
        if add and z not in run.active:
            atoms.append(z)
            warm.append(0.0)
        warm = np.maximum(np.array(warm, dtype=float), 0.0)
        before = {a.id for a in run.active.atoms}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                if variant == 0:
                    b = x - run.g / obj.L
                    sol = nnls_cone(atoms, b, warm_start=warm)
                else:
                    sol = min_over_cone(atoms, obj, warm_start=warm, max_iters=cfg.inner_max_iters)
        except ConicMPError as exc:
            raise SubproblemFailure(str(exc), run.it) from exc
        run.inner_iters += sol.inner_iterations
        unconverged += not sol.converged
        pruned = run.active.set_weights(atoms, sol.weights)
        good = variant == 1 or not (before & set(pruned))
        run.record(StepType.FULL_CORRECTION, 1.0, False, good, s_z)
        run.advance()
    return run.finish("max_iters", extra={"inner_unconverged": unconverged})


def run_fw_rescaled(obj, aset: FiniteDictionary, tau: float,
                    cfg: SolverConfig = SolverConfig()) -> Trace:
    """Frank-Wolfe with exact quadratic-bound line search over ``conv(tau * A)``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not isinstance(aset, FiniteDictionary):
        raise SetTooLarge("run_fw_rescaled needs a finite dictionary")
    run = _Run("fw", obj, aset, cfg, _start(aset, cfg, None))
    while run.it < cfg.max_iters:
        z, s_z = run.lmo()
        x = run.active.x
        d = tau * z.dense() - x
        gap = -float(np.vdot(run.g, d))
        if gap <= run.tol:
            return run.finish("certificate", tau * s_z, {"tau": tau})
        dsq = float(np.vdot(d, d))
        gamma = gap / (obj.L * dsq)
        clipped = gamma > 1.0
        gamma = min(gamma, 1.0)
        run.active.scale(1.0 - gamma)
        run.active.add(z, tau * gamma)
        run.record(StepType.REGULAR, gamma, clipped, not clipped, tau * s_z)
        run.advance()
    return run.finish("max_iters", extra={"tau": tau})


# ---------------------------------------------------------------------------
# serialization

CSV_COLUMNS = ["iter", "f", "eps", "step_type", "gamma", "clipped", "good", "active_size", "lmo_score"]


def write_trace_csv(trace: Trace, path, f_star: Optional[float] = None) -> None:
    """Write one row per record; floats use ``repr`` so they round-trip."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in trace.records:
            eps = "" if f_star is None else repr(r.f_value - f_star)
            w.writerow([r.iter, repr(r.f_value), eps, r.step_type.value, repr(r.gamma),
                        int(r.gamma_was_clipped), int(r.good_step), r.active_size,
                        repr(r.lmo_score)])


def read_trace_csv(path) -> list:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(StepRecord(
                iter=int(row["iter"]),
                f_value=float(row["f"]),
                step_type=StepType(row["step_type"]),
                gamma=float(row["gamma"]),
                gamma_was_clipped=bool(int(row["clipped"])),
                good_step=bool(int(row["good"])),
                active_size=int(row["active_size"]),
                lmo_score=float(row["lmo_score"]),
            ))
    return records


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_trace_json(trace: Trace, path, extra: Optional[dict] = None, timings: bool = True) -> None:
    """Metadata sidecar.  ``timings=False`` drops wall time for byte-stable output."""
    meta = dict(trace.metadata)
    if not timings:
        meta.pop("wall_time", None)
    if extra:
        meta.update(extra)
    Path(path).write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
