"""Atom sets and their linear minimization oracles.

Two kinds of dictionary are supported:

* :class:`FiniteDictionary` -- an explicit list of vectors, one of which is the
  origin when the set is meant for conic solvers.
* :class:`RankOneNonNeg` -- all matrices ``u v^T`` with non-negative unit-norm
  factors.  Atoms are kept as factor pairs; only the oracle and inner products
  touch them, as ``<G, u v^T> = u^T G v``.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateQuery,
    DimensionMismatch,
    ExactLmoUnavailable,
    SetTooLarge,
)

__all__ = [
    "Atom",
    "AtomSet",
    "FiniteDictionary",
    "RankOneNonNeg",
    "LmoAnswer",
    "atom_inner",
    "gram_matrix",
    "lmo_exact",
    "lmo_approx",
    "atomic_norm",
    "radius",
    "diameter",
]

GAUGE_MAX_DIM = 64
GAUGE_MAX_ATOMS = 256


class Atom:
    """A single dictionary element with a stable identifier.

    Either ``vector`` is set (dense payload) or both ``u`` and ``v`` are set
    (rank-one payload ``u v^T``).  Equality and hashing go through ``id``.
    """

    __slots__ = ("id", "vector", "u", "v")

    def __init__(self, id, vector=None, u=None, v=None):
        if vector is None and (u is None or v is None):
            raise ValueError("atom needs a vector or a (u, v) factor pair")
        if vector is not None:
            vector = np.array(vector, dtype=float)
            vector.setflags(write=False)
            if not np.all(np.isfinite(vector)):
                raise ValueError("atom payload must be finite")
        else:
            u = np.array(u, dtype=float).ravel()
            v = np.array(v, dtype=float).ravel()
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise ValueError("atom payload must be finite")
            if np.any(u < 0) or np.any(v < 0):
                raise ValueError("rank-one factors must be non-negative")
            u.setflags(write=False)
            v.setflags(write=False)
        self.id = id
        self.vector = vector
        self.u = u
        self.v = v

    @property
    def is_rank_one(self) -> bool:
        return self.vector is None

    @property
    def shape(self):
        if self.is_rank_one:
            return (self.u.size, self.v.size)
        return self.vector.shape

    def inner(self, g) -> float:
        """``<g, atom>`` without materializing rank-one payloads."""
        if self.is_rank_one:
            return float(self.u @ g @ self.v)
        return float(np.vdot(self.vector, g))

    def sqnorm(self) -> float:
        if self.is_rank_one:
            return float(self.u @ self.u) * float(self.v @ self.v)
        return float(self.vector @ self.vector)

    def is_zero(self) -> bool:
        if self.is_rank_one:
            return not (np.any(self.u) and np.any(self.v))
        return not np.any(self.vector)

    def dense(self) -> np.ndarray:
        if self.is_rank_one:
            return np.outer(self.u, self.v)
        return self.vector

    def __eq__(self, other):
        return isinstance(other, Atom) and other.id == self.id

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        kind = "rank-one" if self.is_rank_one else "vector"
        return f"Atom(id={self.id!r}, {kind}, shape={self.shape})"


def atom_inner(a: Atom, b: Atom) -> float:
    if a.is_rank_one and b.is_rank_one:
        return float(a.u @ b.u) * float(a.v @ b.v)
    if a.is_rank_one:
        return b.inner(a.dense())
    return b.inner(a.vector)


def gram_matrix(atoms) -> np.ndarray:
    atoms = list(atoms)
    if not atoms:
        return np.zeros((0, 0))
    if all(a.is_rank_one for a in atoms):
        U = np.stack([a.u for a in atoms])
        V = np.stack([a.v for a in atoms])
        return (U @ U.T) * (V @ V.T)
    if not any(a.is_rank_one for a in atoms):
        A = np.stack([a.vector.ravel() for a in atoms])
        return A @ A.T
    k = len(atoms)
    G = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            G[i, j] = G[j, i] = atom_inner(atoms[i], atoms[j])
    return G


@dataclass(frozen=True)
class LmoAnswer:
    atom: Atom
    score: float
    delta: float = 1.0


class AtomSet:
    """Common base; concrete sets are immutable after construction."""

    contains_origin: bool = True

    @property
    def ambient_shape(self) -> tuple:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class FiniteDictionary(AtomSet):
    """An explicit, finite list of atoms in R^d.

    Atom ids are the row indices.  With ``add_origin=True`` a zero atom is
    appended (id ``n``) unless some row is already exactly zero.
    """

    def __init__(self, vectors, add_origin: bool = True, name: str = "finite"):
        M = np.array(vectors, dtype=float)
        if M.ndim == 1:
            M = M[None, :]
        if M.ndim != 2 or M.shape[0] == 0:
            raise ValueError("a finite dictionary needs at least one atom")
        if not np.all(np.isfinite(M)):
            raise ValueError("atom payload must be finite")
        zero_rows = np.flatnonzero(~M.any(axis=1))
        if add_origin and zero_rows.size == 0:
            M = np.vstack([M, np.zeros(M.shape[1])])
            zero_rows = np.array([M.shape[0] - 1])
        M.setflags(write=False)
        self.matrix = M
        self.name = name
        self.contains_origin = zero_rows.size > 0
        self.origin_index = int(zero_rows[0]) if zero_rows.size else None
        self.atoms = tuple(Atom(i, M[i]) for i in range(M.shape[0]))

    @classmethod
    def from_csv(cls, path, add_origin: bool = True):
        """One atom per row; a non-numeric first row is treated as a header."""
        rows = []
        with open(path, newline="") as fh:
            for k, row in enumerate(csv.reader(fh)):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError:
                    if k == 0:
                        continue
                    raise
        return cls(rows, add_origin=add_origin, name=Path(path).name)

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def __getitem__(self, i) -> Atom:
        return self.atoms[i]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def ambient_shape(self):
        return (self.dim,)

    @property
    def origin(self):
        return None if self.origin_index is None else self.atoms[self.origin_index]

    def is_symmetric(self, atol: float = 1e-12) -> bool:
        M = self.matrix
        for row in M:
            if not np.any(np.all(np.abs(M + row) <= atol, axis=1)):
                return False
        return True

    def describe(self):
        return {
            "kind": "FiniteDictionary",
            "name": self.name,
            "n_atoms": len(self),
            "dim": self.dim,
            "contains_origin": self.contains_origin,
        }


class RankOneNonNeg(AtomSet):
    """All ``u v^T`` with ``u`` in R^m, ``v`` in R^n, non-negative, unit norm."""

    def __init__(self, m: int, n: int, seed: int = 0):
        if m < 1 or n < 1:
            raise ValueError("factor lengths must be positive")
        self.m = int(m)
        self.n = int(n)
        self.seed = int(seed)
        self.contains_origin = True

    @property
    def ambient_shape(self):
        return (self.m, self.n)

    def describe(self):
        return {"kind": "RankOneNonNeg", "m": self.m, "n": self.n, "seed": self.seed}

    @staticmethod
    def make_atom(u, v) -> Atom:
        u = np.asarray(u, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        digest = hashlib.sha1(u.tobytes() + b"|" + v.tobytes()).hexdigest()[:16]
        return Atom(f"r1:{digest}", u=u, v=v)


def _check_query(query, aset: AtomSet) -> np.ndarray:
    q = np.asarray(query, dtype=float)
    if q.shape != tuple(aset.ambient_shape):
        raise DimensionMismatch(f"query shape {q.shape} != atom space {aset.ambient_shape}")
    return q


def lmo_exact(query, aset: AtomSet) -> LmoAnswer:
    """Atom minimizing ``<query, z>``; ties go to the smallest id."""
    if isinstance(aset, RankOneNonNeg):
        raise ExactLmoUnavailable("no exact oracle for the rank-one cone")
    q = _check_query(query, aset)
    scores = aset.matrix @ q
    i = int(np.argmin(scores))
    return LmoAnswer(aset.atoms[i], float(scores[i]), 1.0)


def lmo_approx(query, aset: AtomSet, delta: float = 1.0, iters: int = 100, seed=None) -> LmoAnswer:
    """Approximate oracle.

    Finite dictionaries are answered exactly.  For the rank-one cone this runs
    the non-negative truncated power method on ``-query``.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    if isinstance(aset, FiniteDictionary):
        return lmo_exact(query, aset)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    P = -_check_query(query, aset)
    rng = np.random.default_rng(aset.seed if seed is None else seed)
    v = rng.uniform(0.5, 1.5, size=aset.n)
    v /= np.linalg.norm(v)
    u = None
    for _ in range(iters):
        u = np.maximum(P @ v, 0.0)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            raise DegenerateQuery("power iteration produced a zero left factor")
        u /= nu
        v = np.maximum(P.T @ u, 0.0)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            raise DegenerateQuery("power iteration produced a zero right factor")
        v /= nv
    atom = RankOneNonNeg.make_atom(u, v)
    return LmoAnswer(atom, -float(u @ P @ v), float(delta))


def _finite_only(aset, what):
    if not isinstance(aset, FiniteDictionary):
        raise SetTooLarge(f"{what} needs an explicit finite dictionary")


def atomic_norm(x, aset: FiniteDictionary, max_dim: int = GAUGE_MAX_DIM,
                max_atoms: int = GAUGE_MAX_ATOMS) -> float:
    """Gauge of conv(A) at ``x``, i.e. the least coefficient sum of a conic decomposition."""
    from .coneproj import solve_gauge_lp

    _finite_only(aset, "atomic norm")
    x = _check_query(x, aset)
    if not np.any(x):
        return 0.0
    value, _ = solve_gauge_lp(aset, x, max_dim=max_dim, max_atoms=max_atoms)
    return value


def radius(aset: AtomSet) -> float:
    if isinstance(aset, RankOneNonNeg):
        return 1.0
    _finite_only(aset, "radius")
    return float(np.max(np.linalg.norm(aset.matrix, axis=1)))


def diameter(aset: AtomSet) -> float:
    _finite_only(aset, "diameter")
    M = aset.matrix
    sq = np.sum(M * M, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (M @ M.T)
    # exact re-evaluation of the maximizing pair removes cancellation error
    i, j = np.unravel_index(int(np.argmax(D)), D.shape)
    return float(np.linalg.norm(M[i] - M[j]))
