"""Width constants of atom sets.

All widths here are built from the quantity

    h_S(u) = max_{z in K} <u, z> - min_{v in S} <u, v>,

with ``u`` a unit direction, ``K`` the atoms of a face and ``S`` a subset of
them.  In the plane ``h_S`` is a piecewise sinusoid whose pieces change only
where ``u`` is orthogonal to a difference of two atoms, and it is
non-negative, so its minimum over an arc sits at an arc endpoint or at one of
those breakpoints.  That gives exact 2D values from a finite candidate list.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull

from .atoms import FiniteDictionary, diameter
from .errors import (
    DegenerateCone,
    DegenerateSet,
    NotInHull,
    NotTwoDimensional,
    SetTooLarge,
    ZeroDirection,
)

__all__ = [
    "WidthReport",
    "Face2D",
    "dir_width",
    "pdir_width",
    "hull_edges_2d",
    "cone_width_2d",
    "mdw",
    "mdw_report",
    "theoretical_beta",
]

PDIR_MAX_ATOMS = 12
CONE_WIDTH_MAX_ATOMS = 32
MDW_SAMPLES = 4096


@dataclass(frozen=True)
class WidthReport:
    value: float
    kind: str
    certificate: dict = field(default_factory=dict)
    method: str = "Exact2D"

    def to_dict(self) -> dict:
        cert = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.certificate.items()}
        return {"value": self.value, "kind": self.kind, "method": self.method, "certificate": cert}


@dataclass(frozen=True)
class Face2D:
    """A supporting edge or vertex of a planar convex hull.

    ``atom_ids`` are the generating atoms; ``normal`` is the outward unit
    normal of the supporting line.
    """

    atom_ids: tuple
    normal: np.ndarray

    def is_supporting(self, points, atol: float = 1e-12) -> bool:
        P = np.asarray(points, dtype=float)
        level = float(P[self.atom_ids[0]] @ self.normal)
        on = np.array([abs(P[i] @ self.normal - level) <= atol for i in self.atom_ids])
        return bool(on.all() and np.all(P @ self.normal <= level + atol))


def _points(atoms):
    if isinstance(atoms, FiniteDictionary):
        return np.asarray(atoms.matrix, dtype=float)
    if hasattr(atoms, "__iter__") and not isinstance(atoms, np.ndarray):
        atoms = list(atoms)
        if atoms and hasattr(atoms[0], "vector"):
            return np.stack([a.vector for a in atoms]).astype(float)
    P = np.asarray(atoms, dtype=float)
    return P[None, :] if P.ndim == 1 else P


def _unit(r):
    r = np.asarray(r, dtype=float)
    n = float(np.linalg.norm(r))
    if n == 0.0:
        raise ZeroDirection("direction must be non-zero")
    return r / n


def dir_width(atoms, r) -> float:
    """``max_{s, v} <r/|r|, s - v>`` over the atoms."""
    u = _unit(r)
    p = _points(atoms) @ u
    return float(p.max() - p.min())


def _affinely_independent(S, tol):
    if len(S) <= 1:
        return True
    D = S[1:] - S[0]
    return np.linalg.matrix_rank(D, tol=tol) == len(S) - 1


def _proper_weights(S, x, tol):
    """Barycentric weights of ``x`` in affinely independent ``S``, or None."""
    k = len(S)
    M = np.vstack([S.T, np.ones(k)])
    rhs = np.append(x, 1.0)
    lam, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if np.linalg.norm(M @ lam - rhs) > tol or np.any(lam <= tol):
        return None
    return lam


def _proper_subsets(P, x, max_size, tol):
    """Index tuples of affinely independent subsets with ``x`` in their relative interior."""
    out = []
    n = len(P)
    for k in range(1, min(max_size, n) + 1):
        for idx in itertools.combinations(range(n), k):
            S = P[list(idx)]
            if not _affinely_independent(S, tol):
                continue
            if _proper_weights(S, x, tol) is not None:
                out.append(idx)
    return out


def _proper_subsets_2d(P, x, tol):
    """Vectorized :func:`_proper_subsets` for planar points, sizes up to 3."""
    n = len(P)
    D = P - x
    out = [(i,) for i in range(n) if np.linalg.norm(D[i]) <= tol]
    if n >= 2:
        I, J = np.array(list(itertools.combinations(range(n), 2))).T
        cross = D[I, 0] * D[J, 1] - D[I, 1] * D[J, 0]
        dot = np.einsum("ij,ij->i", D[I], D[J])
        gap = np.linalg.norm(P[I] - P[J], axis=1)
        ok = (np.abs(cross) <= tol * np.maximum(gap, 1.0)) & (dot < -tol * tol) & (gap > tol)
        out += [(int(i), int(j)) for i, j in zip(I[ok], J[ok])]
    if n >= 3:
        I, J, K = np.array(list(itertools.combinations(range(n), 3))).T
        c = lambda a, b: D[a, 0] * D[b, 1] - D[a, 1] * D[b, 0]
        w = np.stack([c(J, K), c(K, I), c(I, J)])  # twice the signed sub-areas
        area = w.sum(axis=0)
        lam = w / np.where(np.abs(area) > tol, area, np.inf)
        ok = (np.abs(area) > tol) & np.all(lam > tol, axis=0)
        out += [(int(i), int(j), int(k)) for i, j, k in zip(I[ok], J[ok], K[ok])]
    return out


def pdir_width(atoms, r, x, with_origin: bool = False) -> float:
    """Pyramidal directional width at reference point ``x``.

    Minimizing subsets are affinely independent (a larger support only lowers
    ``min_S <r, v>``), so only those are enumerated; membership is then an
    exact barycentric solve.  ``with_origin=True`` lets the origin act as an
    extra away candidate in every ``S``, which is the convention
    :func:`cone_width_2d` uses.
    """
    P = _points(atoms)
    if len(P) > PDIR_MAX_ATOMS:
        raise SetTooLarge(f"pdir_width enumerates subsets of at most {PDIR_MAX_ATOMS} atoms")
    u = _unit(r)
    x = np.asarray(x, dtype=float)
    tol = 1e-10 * max(1.0, float(np.abs(P).max()))
    subsets = _proper_subsets(P, x, P.shape[1] + 1, tol)
    if not subsets:
        raise NotInHull("no subset of the atoms has x as a proper convex combination")
    p = P @ u
    top = p.max()
    floor = 0.0 if with_origin else np.inf
    return float(min(top - min(p[list(S)].min(), floor) for S in subsets))


def hull_edges_2d(points, atol: float = 1e-12) -> list:
    """Edges of the planar hull, each listing every atom on it in order."""
    P = np.asarray(points, dtype=float)
    hull = ConvexHull(P)
    verts = list(hull.vertices)  # counter-clockwise in 2D
    faces = []
    for a, b in zip(verts, verts[1:] + verts[:1]):
        t = P[b] - P[a]
        normal = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        on = [i for i in range(len(P)) if abs((P[i] - P[a]) @ normal) <= atol]
        on.sort(key=lambda i: float((P[i] - P[a]) @ t))
        faces.append(Face2D(tuple(on), normal))
    return faces


def _perp(w):
    return np.array([-w[1], w[0]])


def _breakpoints(K):
    """Unit directions orthogonal to some difference of two face atoms."""
    dirs = []
    for i, j in itertools.combinations(range(len(K)), 2):
        w = K[i] - K[j]
        n = np.linalg.norm(w)
        if n > 0:
            p = _perp(w) / n
            dirs.extend([p, -p])
    return dirs


class _Arc:
    """Closed set of unit directions: the plane, a half-plane or a wedge."""

    def __init__(self, kind, a=None, b=None):
        self.kind = kind
        self.a = a
        self.b = b

    def endpoints(self):
        if self.kind == "full":
            return []
        return [self.a, self.b]

    def contains(self, u, tol=1e-12):
        if self.kind == "full":
            return True
        if self.kind == "half":
            # a, b = -t, t; half-plane on the left of a -> b, i.e. inward normal
            n = _perp(self.b)
            return float(u @ n) >= -tol
        cross = lambda p, q: p[0] * q[1] - p[1] * q[0]
        return cross(self.a, u) >= -tol and cross(u, self.b) >= -tol


def _polygon_arc(x, hull_faces, P, tol):
    """Directions from ``x`` into the 2D hull."""
    on = [f for f in hull_faces if abs((x - P[f.atom_ids[0]]) @ f.normal) <= tol]
    if not on:
        return _Arc("full")
    if len(on) == 1:
        f = on[0]
        t = P[f.atom_ids[-1]] - P[f.atom_ids[0]]
        t = t / np.linalg.norm(t)
        return _Arc("half", -t, t)
    # vertex: incoming edge ends at x, outgoing edge starts at x (ccw order)
    f_in = next(f for f in on if np.allclose(P[f.atom_ids[-1]], x, atol=tol))
    f_out = next(f for f in on if np.allclose(P[f.atom_ids[0]], x, atol=tol))
    a = P[f_out.atom_ids[-1]] - x
    b = P[f_in.atom_ids[0]] - x
    return _Arc("wedge", a / np.linalg.norm(a), b / np.linalg.norm(b))


def _segment_directions(x, K, tol):
    """Directions from ``x`` along a 1D face spanned by the points ``K``."""
    e = K[-1] - K[0]
    for i, j in itertools.combinations(range(len(K)), 2):
        if np.linalg.norm(K[i] - K[j]) > np.linalg.norm(e):
            e = K[i] - K[j]
    e = e / np.linalg.norm(e)
    s = K @ e
    t = float(x @ e)
    out = []
    if t < s.max() - tol:
        out.append(e)
    if t > s.min() + tol:
        out.append(-e)
    return out


def _face_width(P, ids, x, directions, tol):
    """Min over S in S_x and the given directions of h_S; returns (value, cert)."""
    K = P[list(ids)]
    subsets = _proper_subsets_2d(K, x, tol)
    if not subsets or not directions:
        return np.inf, None
    U = np.array(directions)
    proj = U @ K.T  # (n_dir, |K|)
    top = proj.max(axis=1)
    # the origin is always available as an away candidate
    floor = 0.0 if np.any(np.all(K == 0.0, axis=1)) else np.inf
    best, cert = np.inf, None
    for S in subsets:
        h = top - np.minimum(proj[:, list(S)].min(axis=1), floor)
        k = int(np.argmin(h))
        if h[k] < best:
            best = float(h[k])
            cert = {"subset": tuple(ids[i] for i in S), "direction": U[k]}
    return best, cert


def _witnesses(P, ids, edges):
    pts = [P[i] for i in ids]
    for a, b in edges:
        pts.append(0.5 * (P[a] + P[b]))
    return pts


def cone_width_2d(atoms) -> WidthReport:
    """Exact cone width of a planar atom set containing the origin.

    Generating faces follow from where the origin sits in the hull:
    interior -> the hull only; on an edge -> the hull and that edge; a vertex
    -> the hull and its two edges.  Collinear sets have the segment as their
    only face.  Each face is probed at its atoms and edge midpoints, and the
    origin counts as an away candidate in every subset ``S``.
    """
    P = _points(atoms)
    if P.ndim != 2 or P.shape[1] != 2:
        raise NotTwoDimensional("cone_width_2d needs atoms in R^2")
    if len(P) > CONE_WIDTH_MAX_ATOMS:
        raise SetTooLarge(f"cone_width_2d handles at most {CONE_WIDTH_MAX_ATOMS} atoms")
    if not np.any(np.all(P == 0.0, axis=1)):
        raise ValueError("cone_width_2d needs the origin among the atoms")
    if not np.any(P):
        raise DegenerateCone("all atoms are zero")
    scale = float(np.abs(P).max())
    tol = 1e-10 * scale
    all_ids = tuple(range(len(P)))

    faces = []  # (label, atom ids, witness points, direction rule)
    if np.linalg.matrix_rank(P, tol=tol) == 1:
        K = P
        s = K @ _unit(K[np.argmax(np.linalg.norm(K, axis=1))])
        ends = (int(np.argmin(s)), int(np.argmax(s)))
        faces.append(("hull", all_ids, _witnesses(P, all_ids, [ends]), "segment"))
    else:
        edges = hull_edges_2d(P, atol=tol)
        corners = [(f.atom_ids[0], f.atom_ids[-1]) for f in edges]
        faces.append(("hull", all_ids, _witnesses(P, all_ids, corners), edges))
        for f in edges:
            if any(np.all(P[i] == 0.0) for i in f.atom_ids):
                ends = (f.atom_ids[0], f.atom_ids[-1])
                faces.append(("edge", f.atom_ids, _witnesses(P, f.atom_ids, [ends]), "segment"))

    best = WidthReport(np.inf, "ConeWidth")
    for label, ids, witnesses, rule in faces:
        K = P[list(ids)]
        breaks = _breakpoints(K) if rule != "segment" else []
        for x in witnesses:
            if rule == "segment":
                dirs = _segment_directions(x, K, tol)
            else:
                arc = _polygon_arc(x, rule, P, tol)
                dirs = [u for u in breaks + arc.endpoints() if arc.contains(u)]
            val, cert = _face_width(P, ids, x, dirs, tol)
            if cert is not None and val < best.value:
                best = WidthReport(
                    val, "ConeWidth",
                    {"face": label, "face_atoms": tuple(ids), "point": np.array(x),
                     "subset": cert["subset"], "direction": cert["direction"]},
                    "Exact2D",
                )
    if not np.isfinite(best.value):
        raise DegenerateCone("no feasible direction on any generating face")
    return best


def _span_basis(P, tol):
    _, s, Vt = np.linalg.svd(P, full_matrices=False)
    r = int(np.sum(s > tol))
    return Vt[:r]


def mdw_report(atoms, n_samples: int = MDW_SAMPLES, seed: int = 0) -> WidthReport:
    """Minimal directional width ``min_d max_z <d/|d|, z>`` over ``d`` in ``lin(A)``.

    Exact from breakpoint candidates when ``lin(A)`` has dimension <= 2,
    otherwise sampled (``n_samples`` seeded directions) and labelled so.
    """
    P = _points(atoms)
    tol = 1e-12 * max(1.0, float(np.abs(P).max()))
    B = _span_basis(P, tol)
    if B.shape[0] == 0:
        raise DegenerateSet("lin(A) is {0}")
    Q = P @ B.T  # coordinates in lin(A)
    if B.shape[0] == 1:
        U = np.array([[1.0], [-1.0]])
        method = "Exact2D"
    elif B.shape[0] == 2:
        cand = _breakpoints(Q)
        cand += [-q / np.linalg.norm(q) for q in Q if np.any(q)]
        U = np.array(cand)
        method = "Exact2D"
    else:
        rng = np.random.default_rng(seed)
        U = rng.normal(size=(n_samples, B.shape[0]))
        U /= np.linalg.norm(U, axis=1)[:, None]
        method = f"Sampled({n_samples})"
    h = (U @ Q.T).max(axis=1)
    k = int(np.argmin(h))
    return WidthReport(float(h[k]), "Mdw", {"direction": U[k] @ B}, method)


def mdw(atoms, n_samples: int = MDW_SAMPLES, seed: int = 0) -> float:
    return mdw_report(atoms, n_samples, seed).value


def theoretical_beta(atoms, L: float, mu: float, delta: float = 1.0, cone_width: Optional[float] = None) -> float:
    """``delta^2 mu CW^2 / (L diam^2)`` clipped to (0, 1]; 0 when ``mu = 0``."""
    if L <= 0:
        raise ValueError("L must be positive")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    if mu == 0:
        return 0.0
    cw = cone_width if cone_width is not None else cone_width_2d(atoms).value
    aset = atoms if isinstance(atoms, FiniteDictionary) else FiniteDictionary(_points(atoms))
    beta = delta ** 2 * mu * cw ** 2 / (L * diameter(aset) ** 2)
    return float(min(beta, 1.0))
