"""Subproblem solvers over finitely generated cones.

* :func:`nnls_cone` -- Lawson-Hanson active-set NNLS over ``cone(S)``.
* :func:`min_over_cone` -- projected gradient in the weight space.
* :func:`solve_gauge_lp` -- the atomic-norm LP, by a dense two-phase simplex
  method with Bland's rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .atoms import GAUGE_MAX_ATOMS, GAUGE_MAX_DIM, Atom, FiniteDictionary, gram_matrix
from .errors import Infeasible, MaxIterationsExceeded, SetTooLarge

__all__ = [
    "ConeSolution",
    "ConicSubproblem",
    "nnls_cone",
    "nnls_gram",
    "min_over_cone",
    "simplex_lp",
    "solve_gauge_lp",
    "kkt_residual",
]


@dataclass(frozen=True)
class ConeSolution:
    weights: np.ndarray
    inner_iterations: int
    kkt_residual: float
    converged: bool = True


@dataclass(frozen=True)
class ConicSubproblem:
    """Bundle of inputs for a cone-restricted solve, mostly for logging."""

    atoms: tuple
    target: np.ndarray = None
    warm_start: np.ndarray = None
    tol: float = 1e-10
    max_iters: int = 10_000

    def __post_init__(self):
        if self.warm_start is not None:
            w = np.asarray(self.warm_start, dtype=float)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("warm start must be non-negative and finite")


def kkt_residual(G, c, alpha) -> float:
    """Violation of the NNLS optimality conditions at ``alpha``."""
    g = G @ alpha - c
    res = max(0.0, float(-g.min())) if g.size else 0.0
    pos = alpha > 0
    if np.any(pos):
        res = max(res, float(np.abs(g[pos]).max()))
    return res


def _as_matrix(atoms):
    """Stack vector atoms as columns; None when any atom is rank-one."""
    if any(a.is_rank_one for a in atoms):
        return None
    return np.stack([a.vector.ravel() for a in atoms], axis=1)


def nnls_gram(G, c, warm_start=None, tol=None, max_iter=None, A=None, b=None) -> ConeSolution:
    """Minimize ``0.5 a^T G a - c^T a`` subject to ``a >= 0``.

    When the column matrix ``A`` and target ``b`` are supplied (``G = A^T A``,
    ``c = A^T b``) the passive-set solves use ``A`` directly for accuracy.
    """
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    k = c.size
    if tol is None:
        tol = 1e-10 * max(1.0, float(np.abs(c).max()) if k else 1.0)
    if max_iter is None:
        max_iter = 30 * k + 50
    alpha = np.zeros(k) if warm_start is None else np.maximum(np.asarray(warm_start, dtype=float), 0.0)

    def neg_grad(a):
        if A is not None:
            return A.T @ (b - A @ a)
        return c - G @ a

    def solve(P):
        idx = np.flatnonzero(P)
        s = np.zeros(k)
        if idx.size:
            if A is not None:
                s[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            else:
                s[idx] = np.linalg.lstsq(G[np.ix_(idx, idx)], c[idx], rcond=None)[0]
        return s

    P = alpha > 0
    iters = 0
    converged = True

    def inner(P, alpha):
        nonlocal iters
        while True:
            s = solve(P)
            bad = P & (s <= 0)
            if not np.any(bad):
                return P, s
            iters += 1
            if iters > max_iter:
                return P, alpha
            ratio = alpha[bad] / (alpha[bad] - s[bad])
            t = float(ratio.min())
            alpha = alpha + t * (s - alpha)
            alpha[~P] = 0.0
            drop = P & (alpha <= 1e-300)
            drop[np.flatnonzero(bad)[np.argmin(ratio)]] = True
            P = P & ~drop
            alpha[~P] = 0.0

    if np.any(P):
        P, alpha = inner(P, alpha)
        alpha = np.where(P, alpha, 0.0)
    blocked = np.zeros(k, dtype=bool)
    while True:
        w = neg_grad(alpha)
        cand = ~P & ~blocked & (w > tol)
        if not np.any(cand):
            break
        iters += 1
        if iters > max_iter:
            converged = False
            break
        j = int(np.flatnonzero(cand)[np.argmax(w[cand])])
        P[j] = True
        prev = alpha.copy()
        P, alpha = inner(P, alpha)
        alpha = np.where(P, np.maximum(alpha, 0.0), 0.0)
        if not P[j] and np.array_equal(prev, alpha):
            # numerically unusable column: the new index bounced straight out
            blocked[j] = True
        else:
            blocked[:] = False
        if iters > max_iter:
            converged = False
            break
    res = kkt_residual(G, c, alpha)
    if not converged:
        warnings.warn("NNLS hit its iteration limit; returning best feasible weights", RuntimeWarning)
    return ConeSolution(alpha, iters, res, converged)


def nnls_cone(atoms, b, warm_start=None, tol=None, max_iter=None, strict: bool = False) -> ConeSolution:
    """Weights ``a >= 0`` minimizing ``||sum_i a_i atoms[i] - b||^2``."""
    atoms = list(atoms)
    if not atoms:
        raise ValueError("nnls_cone needs at least one atom")
    b = np.asarray(b, dtype=float)
    if tuple(atoms[0].shape) != b.shape:
        raise ValueError(f"target shape {b.shape} does not match atoms {atoms[0].shape}")
    G = gram_matrix(atoms)
    c = np.array([a.inner(b) for a in atoms])
    A = _as_matrix(atoms)
    sol = nnls_gram(G, c, warm_start, tol, max_iter,
                    A=A, b=None if A is None else b.ravel())
    if strict and not sol.converged:
        raise MaxIterationsExceeded("NNLS did not converge")
    return sol


def _combine(atoms, alpha, shape):
    x = np.zeros(shape)
    for a, w in zip(atoms, alpha):
        if w != 0.0:
            x = x + w * a.dense()
    return x


def min_over_cone(atoms, objective, warm_start=None, tol: float = 1e-9,
                  max_iters: int = 20_000, strict: bool = False) -> ConeSolution:
    """Minimize ``objective(sum_i a_i atoms[i])`` over ``a >= 0``.

    Least-squares objectives go to :func:`nnls_cone`.  Everything else runs
    accelerated projected gradient with the fixed step
    ``1 / (L * lambda_max(Gram))``; momentum is reset whenever a step would
    raise the objective, so values never increase.  Stops when the
    projected-gradient norm drops to ``tol``.
    """
    atoms = list(atoms)
    if not atoms:
        raise ValueError("min_over_cone needs at least one atom")
    if objective.target is not None:
        return nnls_cone(atoms, objective.target, warm_start=warm_start, strict=strict)
    k = len(atoms)
    shape = atoms[0].shape
    G = gram_matrix(atoms)
    lam = float(np.linalg.eigvalsh(G)[-1]) if k else 0.0
    step = 1.0 / max(objective.L * lam, 1e-300)
    alpha = np.zeros(k) if warm_start is None else np.maximum(np.asarray(warm_start, dtype=float), 0.0)
    A = _as_matrix(atoms)

    def point(a):
        return (A @ a).reshape(shape) if A is not None else _combine(atoms, a, shape)

    def weight_grad(a):
        g = objective.grad(point(a))
        if A is not None:
            return A.T @ np.asarray(g).ravel()
        return np.array([at.inner(g) for at in atoms])

    def pg_norm(a, g):
        pg = np.where(a > 0, g, np.minimum(g, 0.0))
        return float(np.linalg.norm(pg))

    g = weight_grad(alpha)
    f = objective.eval(point(alpha))
    y, t = alpha.copy(), 1.0
    it = 0
    converged = pg_norm(alpha, g) <= tol
    while not converged and it < max_iters:
        gy = g if t == 1.0 else weight_grad(y)
        cand = np.maximum(y - step * gy, 0.0)
        f_cand = objective.eval(point(cand))
        if f_cand > f:
            if t == 1.0:
                break  # even a plain step fails to descend: rounding level
            # restart from the current point with a plain projected step
            y, t = alpha.copy(), 1.0
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = cand + ((t - 1.0) / t_next) * (cand - alpha)
        y = np.maximum(y, 0.0)
        alpha, f, t = cand, f_cand, t_next
        g = weight_grad(alpha)
        it += 1
        converged = pg_norm(alpha, g) <= tol
    if not converged:
        if strict:
            raise MaxIterationsExceeded("projected gradient did not converge")
        warnings.warn("projected gradient hit its iteration limit", RuntimeWarning)
    return ConeSolution(alpha, it, pg_norm(alpha, g), converged)


def _pivot(T, basis, r, col):
    T[r] /= T[r, col]
    for i in range(T.shape[0]):
        if i != r and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[r]
    basis[r] = col


def _bland_pivots(T, basis, n_allowed, ftol, max_pivots):
    m = len(basis)
    for _ in range(max_pivots):
        obj = T[-1, :n_allowed]
        entering = next((j for j in range(n_allowed) if obj[j] < -ftol), None)
        if entering is None:
            return
        col = T[:m, entering]
        rows = [i for i in range(m) if col[i] > ftol]
        if not rows:
            raise ValueError("LP is unbounded")
        ratios = [T[i, -1] / col[i] for i in rows]
        best = min(ratios)
        # Bland: among ratio ties, the smallest basic index leaves
        r = min((i for i, q in zip(rows, ratios) if q <= best + ftol), key=lambda i: basis[i])
        _pivot(T, basis, r, entering)
    raise RuntimeError("simplex pivot limit reached")


def simplex_lp(c, A_eq, b_eq, tol: float = 1e-11, max_pivots: int = 50_000):
    """Solve ``min c^T x`` s.t. ``A_eq x = b_eq``, ``x >= 0``.

    Dense tableau, two phases, Bland's smallest-index rule throughout so that
    degenerate problems cannot cycle.  Returns ``(x, value)``; raises
    :class:`Infeasible` when no feasible point exists.  Unbounded problems
    raise ``ValueError`` (they never arise for the gauge LP).
    """
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0, float(np.abs(b).max()) if b.size else 1.0)
    ftol = tol * scale

    # columns: x (n), artificials (m), rhs; last row holds reduced costs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))

    T[-1, n:n + m] = 1.0
    for i in range(m):
        T[-1] -= T[i]
    _bland_pivots(T, basis, n + m, ftol, max_pivots)
    if -T[-1, -1] > ftol * max(1, m):
        raise Infeasible("no non-negative solution of the equality system")

    # drive artificials out of the basis; rows where that fails are redundant
    keep = []
    for r in range(m):
        if basis[r] >= n:
            js = [j for j in range(n) if abs(T[r, j]) > ftol]
            if not js:
                continue
            _pivot(T, basis, r, js[0])
        keep.append(r)
    T = np.vstack([T[keep], T[-1:]])
    basis = [basis[r] for r in keep]

    T[-1, :] = 0.0
    T[-1, :n] = c
    for i, bj in enumerate(basis):
        if T[-1, bj] != 0.0:
            T[-1] -= T[-1, bj] * T[i]
    _bland_pivots(T, basis, n, ftol, max_pivots)

    x = np.zeros(n)
    for i, bj in enumerate(basis):
        if bj < n:
            x[bj] = max(T[i, -1], 0.0)
    return x, float(c @ x)


def solve_gauge_lp(atoms, x, max_dim: int = GAUGE_MAX_DIM, max_atoms: int = GAUGE_MAX_ATOMS):
    """Atomic norm of ``x``: ``min sum(lam)`` s.t. ``sum_i lam_i a_i = x``, ``lam >= 0``.

    ``atoms`` is a :class:`FiniteDictionary`, a sequence of vector atoms, or
    an ``(n_atoms, d)`` array.  Returns ``(value, lam)``.
    """
    if isinstance(atoms, FiniteDictionary):
        M = atoms.matrix
    elif len(atoms) and isinstance(atoms[0], Atom):
        M = np.stack([a.vector.ravel() for a in atoms])
    else:
        M = np.atleast_2d(np.asarray(atoms, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    n_atoms, d = M.shape
    if d > max_dim or n_atoms > max_atoms:
        raise SetTooLarge(f"gauge LP limited to d <= {max_dim}, |A| <= {max_atoms}")
    if x.size != d:
        raise ValueError("point and atoms differ in dimension")
    if not np.any(x):
        return 0.0, np.zeros(n_atoms)
    lam, value = simplex_lp(np.ones(n_atoms), M.T, x)
    return value, lam
