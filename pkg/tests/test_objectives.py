import math

import numpy as np
import pytest

from conic_mp.errors import DatasetNotFound, InvalidLabels
from conic_mp.objectives import (
    GarroteProblem,
    Objective,
    check_gradient,
    fit_logistic,
    least_squares,
    load_labeled_csv,
    logistic_garrote,
    matrix_ls,
)


def _garrote(seed=0, n=30, p=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = (X @ rng.normal(size=p) + 0.5 * rng.normal(size=n) > 0).astype(float)
    return GarroteProblem(X, y, rng.normal(size=p))


def test_least_squares_examples():
    obj = least_squares([1.0, 0.0])
    assert obj(np.zeros(2)) == 0.5
    np.testing.assert_array_equal(obj.grad(np.zeros(2)), [-1.0, 0.0])
    assert obj([1.0, 0.0]) == 0.0
    np.testing.assert_array_equal(obj.grad([1.0, 0.0]), [0.0, 0.0])
    assert obj.L == 1.0 and obj.mu == 1.0


def test_least_squares_formula():
    rng = np.random.default_rng(1)
    y, x = rng.normal(size=6), rng.normal(size=6)
    obj = least_squares(y)
    np.testing.assert_allclose(obj(x), 0.5 * np.sum((y - x) ** 2), rtol=1e-14)
    np.testing.assert_allclose(obj.grad(x), x - y, rtol=1e-14)
    assert check_gradient(obj, x, h=1e-6) < 1e-7


def test_least_squares_strong_convexity_equality():
    rng = np.random.default_rng(2)
    obj = least_squares(rng.normal(size=5))
    for _ in range(20):
        x, z = rng.normal(size=5), rng.normal(size=5)
        lower = obj(x) + obj.grad(x) @ (z - x) + 0.5 * np.sum((z - x) ** 2)
        np.testing.assert_allclose(obj(z), lower, rtol=1e-12, atol=1e-12)


def test_matrix_ls_examples():
    rng = np.random.default_rng(3)
    M = rng.uniform(size=(3, 4))
    obj = matrix_ls(M)
    assert obj(M) == 0.0
    np.testing.assert_allclose(obj(np.zeros_like(M)), 0.5 * np.sum(M ** 2), rtol=1e-14)
    X = rng.normal(size=(3, 4))
    np.testing.assert_allclose(obj(X), 0.5 * np.sum((M - X) ** 2), rtol=1e-14)
    np.testing.assert_allclose(obj.grad(X), X - M, rtol=1e-14)
    with pytest.raises(ValueError):
        matrix_ls(np.ones(3))


def test_garrote_at_zero_is_log2():
    obj = logistic_garrote(_garrote())
    np.testing.assert_allclose(obj(np.zeros(4)), math.log(2.0), rtol=1e-15)
    assert obj.mu == 0.0


def test_garrote_scalar_value():
    prob = GarroteProblem(np.array([[1.0]]), np.array([1.0]), np.array([1.0]))
    obj = logistic_garrote(prob)
    expected = math.log1p(math.exp(10.0)) - 10.0
    np.testing.assert_allclose(obj(np.array([10.0])), expected, rtol=1e-12)
    np.testing.assert_allclose(expected, 4.54e-5, rtol=1e-3)


def test_garrote_gradient_and_L():
    prob = _garrote()
    obj = logistic_garrote(prob)
    assert check_gradient(obj, np.zeros(4), h=1e-5) < 1e-5
    rng = np.random.default_rng(4)
    for _ in range(5):
        assert check_gradient(obj, rng.uniform(size=4), h=1e-5) < 1e-5
    Z = prob.design
    np.testing.assert_allclose(obj.L, np.sum(Z * Z) / (4 * len(prob.labels)), rtol=1e-14)
    # the Frobenius bound dominates the exact constant ||Z||_op^2 / (4n)
    assert obj.L >= np.linalg.norm(Z, 2) ** 2 / (4 * len(prob.labels))


@pytest.mark.parametrize("make", [lambda: least_squares(np.arange(5.0)), lambda: logistic_garrote(_garrote(p=5))])
def test_smoothness_and_convexity(make):
    obj = make()
    rng = np.random.default_rng(5)
    for _ in range(100):
        x, z = rng.uniform(size=5), rng.uniform(size=5)
        upper = obj(x) + obj.grad(x) @ (z - x) + 0.5 * obj.L * np.sum((z - x) ** 2)
        assert obj(z) <= upper + 1e-9
        assert obj(0.5 * (x + z)) <= 0.5 * (obj(x) + obj(z)) + 1e-9


def test_check_gradient_catches_wrong_gradient():
    y = np.array([1.0, -2.0, 0.5])
    good = least_squares(y)
    bad = Objective("biased", good.eval, lambda x: good.grad(x) + 1.0, L=1.0)
    assert check_gradient(bad, np.zeros(3)) > 0.5
    with pytest.raises(ValueError):
        check_gradient(good, np.zeros(3), h=0.0)


def test_labels_validated():
    X = np.ones((3, 2))
    with pytest.raises(InvalidLabels):
        GarroteProblem(X, np.array([0.0, 2.0, 1.0]), np.ones(2))
    with pytest.raises(InvalidLabels):
        GarroteProblem.fit(X, np.ones(3))
    with pytest.raises(ValueError):
        GarroteProblem(X, np.array([0.0, 1.0]), np.ones(2))


def test_fit_logistic_recovers_direction():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(400, 3))
    beta = np.array([2.0, -1.0, 0.0])
    y = (rng.uniform(size=400) < 1 / (1 + np.exp(-X @ beta))).astype(float)
    b = fit_logistic(X, y)
    assert np.isfinite(b).all()
    cos = b @ beta / (np.linalg.norm(b) * np.linalg.norm(beta))
    assert cos > 0.95


def test_load_labeled_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n0.1,0.2,R\n0.3,0.4,M\n0.5,0.6,R\n")
    X, y = load_labeled_csv(p)
    np.testing.assert_array_equal(X, [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
    np.testing.assert_array_equal(y, [1.0, 0.0, 1.0])
    q = tmp_path / "numeric.csv"
    q.write_text("1,0\n2,1\n")
    np.testing.assert_array_equal(load_labeled_csv(q)[1], [0.0, 1.0])
    r = tmp_path / "three.csv"
    r.write_text("1,a\n2,b\n3,c\n")
    with pytest.raises(InvalidLabels):
        load_labeled_csv(r)
    with pytest.raises(DatasetNotFound):
        load_labeled_csv(tmp_path / "missing.csv")
