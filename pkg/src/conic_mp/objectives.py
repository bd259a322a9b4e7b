"""Smooth convex objectives with analytic gradients and smoothness bounds."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import DatasetNotFound, InvalidLabels

__all__ = [
    "Objective",
    "GarroteProblem",
    "least_squares",
    "matrix_ls",
    "logistic_garrote",
    "fit_logistic",
    "check_gradient",
    "load_labeled_csv",
]


@dataclass(frozen=True)
class Objective:
    """A smooth convex function.

    ``L`` bounds the Lipschitz constant of the gradient; ``mu`` is a
    strong-convexity bound (0 when unknown).  Least-squares objectives carry
    their ``target`` so subproblem solvers can switch to an exact NNLS.
    """

    name: str
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    L: float
    mu: float = 0.0
    target: Optional[np.ndarray] = field(default=None, repr=False)

    def __call__(self, x) -> float:
        return self.eval(x)


def least_squares(y) -> Objective:
    """``f(x) = 0.5 * ||y - x||^2``."""
    y = np.array(y, dtype=float)
    y.setflags(write=False)

    def f(x):
        r = np.asarray(x, dtype=float) - y
        return 0.5 * float(np.vdot(r, r))

    def g(x):
        return np.asarray(x, dtype=float) - y

    return Objective("least_squares", f, g, L=1.0, mu=1.0, target=y)


def matrix_ls(M) -> Objective:
    """``f(X) = 0.5 * ||M - X||_F^2`` over m x n matrices."""
    M = np.array(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("matrix_ls needs a 2-d target")
    obj = least_squares(M)
    return Objective("matrix_ls", obj.eval, obj.grad, L=1.0, mu=1.0, target=obj.target)


@dataclass(frozen=True)
class GarroteProblem:
    """Non-negative garrote on top of a logistic fit.

    The decision variable ``c`` rescales each base coefficient, so the logits
    are ``Z @ c`` with ``Z[:, j] = features[:, j] * base_coefficients[j]``.
    """

    features: np.ndarray
    labels: np.ndarray
    base_coefficients: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float).ravel()
        b = np.asarray(self.base_coefficients, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size or X.shape[1] != b.size:
            raise ValueError("inconsistent garrote problem shapes")
        _check_labels(y)
        if not np.all(np.isfinite(b)):
            raise ValueError("base coefficients must be finite")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "base_coefficients", b)

    @classmethod
    def fit(cls, features, labels, ridge: float = 1e-6, iters: int = 100):
        X = np.asarray(features, dtype=float)
        y = np.asarray(labels, dtype=float).ravel()
        _check_labels(y, require_both=True)
        beta = fit_logistic(X, y, ridge=ridge, iters=iters)
        return cls(X, y, beta, meta={"base_fit": "damped_newton", "ridge": ridge, "iters": iters})

    @property
    def design(self) -> np.ndarray:
        return self.features * self.base_coefficients[None, :]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _check_labels(y, require_both=False):
    if y.size < 1:
        raise InvalidLabels("need at least one sample")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidLabels("labels must be 0 or 1")
    if require_both and (np.all(y == 0) or np.all(y == 1)):
        raise InvalidLabels("labels contain a single class")


def load_labeled_csv(path):
    """Rows of features with the label in the last column.

    String labels (e.g. the sonar file's ``R``/``M``) are mapped to 0/1 in
    sorted order; a non-numeric first row is taken as a header.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFound(str(path))
    feats, raw = [], []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                feats.append([float(c) for c in row[:-1]])
            except ValueError:
                if k == 0:
                    continue
                raise
            raw.append(row[-1].strip())
    try:
        y = np.array([float(r) for r in raw])
    except ValueError:
        classes = sorted(set(raw))
        if len(classes) != 2:
            raise InvalidLabels(f"expected two label values, got {classes}")
        y = np.array([classes.index(r) for r in raw], dtype=float)
    _check_labels(y)
    return np.array(feats, dtype=float), y


def fit_logistic(X, y, ridge: float = 1e-6, iters: int = 100) -> np.ndarray:
    """Unconstrained ridge-damped logistic regression by Newton's method."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    beta = np.zeros(p)

    def loss(b):
        z = X @ b
        return float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * ridge * float(b @ b)

    cur = loss(beta)
    for _ in range(iters):
        s = expit(X @ beta)
        g = X.T @ (s - y) / n + ridge * beta
        if np.linalg.norm(g) < 1e-12:
            break
        H = (X * (s * (1 - s))[:, None]).T @ X / n + ridge * np.eye(p)
        step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            cand = beta - t * step
            val = loss(cand)
            if val <= cur - 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        else:
            break
        beta, cur = cand, val
    return beta


def logistic_garrote(problem: GarroteProblem) -> Objective:
    """Mean logistic loss of the garrote logits ``Z @ c``."""
    Z = problem.design
    y = problem.labels
    n = y.size
    L = float(np.sum(Z * Z)) / (4.0 * n)

    def f(c):
        z = Z @ np.asarray(c, dtype=float)
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def g(c):
        z = Z @ np.asarray(c, dtype=float)
        return Z.T @ (expit(z) - y) / n

    # an all-zero design has a constant objective; keep L strictly positive
    return Objective("logistic_garrote", f, g, L=max(L, 1e-12), mu=0.0)


def check_gradient(obj: Objective, x, h: float = 1e-6) -> float:
    """Largest relative deviation between ``obj.grad`` and central differences."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=float)
    g = np.asarray(obj.grad(x), dtype=float)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = obj.eval(x)
        flat[i] = old - h
        fm = obj.eval(x)
        flat[i] = old
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(fd - gflat[i]) / max(1.0, abs(gflat[i])))
    return worst
