import math

import numpy as np
import pytest

from crossderiv.distributions import RandomStream
from crossderiv.errors import ParameterError
from crossderiv.testbed import (
    additive_linear,
    get_function,
    gfun_preset,
    gfunction,
    ishigami,
    ishigami_moments,
    parse_polynomial,
    polynomial_suite,
)
from oracles import first_order_index_quadrature, gauss_legendre


def test_ishigami_values():
    tf = ishigami()
    assert float(tf.model(np.zeros((1, 3)))[0]) == 0.0
    var = 0.5 + 49 / 8 + 0.1 * math.pi**4 / 5 + 0.01 * math.pi**8 / 18
    assert tf.variance == pytest.approx(var) and var == pytest.approx(13.8445, abs=1e-4)
    assert np.round(tf.main, 4).tolist() == [0.3139, 0.4424, 0.0]
    # closed form S_T1 = 0.5576; the quoted 0.567 is kept as a reference value only
    assert tf.total[0] == pytest.approx(0.5576, abs=1e-4)
    assert tf.reference["total"][0] == 0.567
    assert np.round(tf.total[1:], 3).tolist() == [0.442, 0.244]


def test_ishigami_moments_function():
    var, main, total = ishigami_moments()
    assert var == pytest.approx(ishigami().variance)
    assert main.sum() <= 1 and np.all(main <= total + 1e-15)


@pytest.mark.parametrize("j", [0, 1, 2])
def test_ishigami_quadrature_oracle(j):
    tf = ishigami()
    s = first_order_index_quadrature(tf.model, 3, j, -math.pi, math.pi, n=64)
    assert s == pytest.approx(tf.main[j], abs=1e-3)


@pytest.mark.parametrize("kind", ["type_a", "type_b", "type_c"])
def test_gfunction_presets(kind):
    tf = gfun_preset(kind)
    ref = tf.reference
    assert np.allclose(np.round(tf.main, 2), np.round(ref["main"], 2), atol=0.011)
    assert np.allclose(np.round(tf.total, 2), np.round(ref["total"], 2), atol=0.011)
    assert tf.main.sum() <= 1 and np.all(tf.main <= tf.total + 1e-15)
    # quadrature oracle: V_j from a 1-d rule on the kinked factor, Var from the product identity
    a = np.asarray({"type_a": (0.0, 0.0) + (6.52,) * 8, "type_b": (50.0,) * 10, "type_c": (0.0,) * 10}[kind])
    vj = np.array([
        gauss_legendre(lambda x: ((np.abs(4 * x - 2) + ak) / (1 + ak)) ** 2, 0, 0.5)
        + gauss_legendre(lambda x: ((np.abs(4 * x - 2) + ak) / (1 + ak)) ** 2, 0.5, 1)
        - 1.0
        for ak in a
    ])
    var = np.prod(1 + vj) - 1
    assert np.allclose(vj / var, tf.main, atol=1e-3)


def test_gfunction_quoted_values():
    assert gfun_preset("type_a").main[0] == pytest.approx(0.39, abs=0.005)
    b = gfun_preset("type_b")
    assert b.main == pytest.approx(np.full(10, 0.1), abs=5e-3) and b.total == pytest.approx(np.full(10, 0.1), abs=5e-3)
    c = gfun_preset("type_c")
    assert c.main[0] == pytest.approx(0.02, abs=0.005) and c.total[0] == pytest.approx(0.27, abs=0.01)  # closed form 0.2649
    with pytest.raises(ParameterError):
        gfunction([-1.0, 0.0])
    assert not c.smooth


def test_gfunction_low_dim_quadrature():
    tf = gfunction([0.0, 1.0])
    for j in range(2):
        s = first_order_index_quadrature(tf.model, 2, j, 0.0, 1.0, n=32, panels=2)
        assert s == pytest.approx(tf.main[j], abs=1e-3)


def test_gfunction_derivatives_away_from_kink():
    tf = gfunction([0.0, 1.0, 2.0])
    X = RandomStream(0).uniform(50, 3)
    X = X[np.all(np.abs(X - 0.5) > 1e-3, axis=1)]
    eps = 1e-6
    for j in range(3):
        E = np.zeros(3)
        E[j] = eps
        fd = (tf.model(X + E) - tf.model(X - E)) / (2 * eps)
        assert np.allclose(tf.gradient(X)[:, j], fd, atol=1e-5)


def test_ishigami_derivatives():
    tf = ishigami()
    X = RandomStream(1).uniform(20, 3) * 2 * math.pi - math.pi
    eps = 1e-6
    for j in range(3):
        E = np.zeros(3)
        E[j] = eps
        fd = (tf.model(X + E) - tf.model(X - E)) / (2 * eps)
        assert np.allclose(tf.gradient(X)[:, j], fd, atol=1e-5)
    assert np.allclose(tf.cross_partial(X, (0, 2)), 0.4 * X[:, 2] ** 3 * np.cos(X[:, 0]))


def test_polynomial_examples():
    p = parse_polynomial("x1*x2^2")
    X = RandomStream(2).uniform(5, 2)
    assert np.allclose(p.differentiate((0, 1))(X), 2 * X[:, 1])
    q = parse_polynomial("3*x1*x2*x3")
    assert np.allclose(q.differentiate((0, 1, 2))(RandomStream(3).uniform(4, 3)), 3.0)
    r = parse_polynomial("1.5*x1*x2^2 - 3*x3 + 2")
    assert r.d == 3 and r.degree == 3
    assert float(r(np.array([[1.0, 2.0, 1.0]]))[0]) == pytest.approx(6 - 3 + 2)
    with pytest.raises(ParameterError):
        parse_polynomial("2*y1")


def test_polynomial_suite():
    zero = polynomial_suite(3, 0, RandomStream(0))[0]
    X = RandomStream(1).uniform(4, 3)
    assert np.all(zero.cross_partial(X, (0,)) == 0)
    suite = polynomial_suite(4, 4, RandomStream(5), count=10)
    assert len(suite) == 10 and all(tf.polynomial.degree <= 4 for tf in suite)
    with pytest.raises(ParameterError):
        polynomial_suite(6, 2, RandomStream(0))
    with pytest.raises(ParameterError):
        polynomial_suite(2, 7, RandomStream(0))


def test_registry():
    for name in ("ishigami", "gfun_a", "gfun_b", "gfun_c"):
        assert get_function(name).d in (3, 10)
    assert get_function("poly:x1*x2").d == 2
    with pytest.raises(ParameterError):
        get_function("rosenbrock")


def test_additive_linear():
    tf = additive_linear([1.0, 1.0])
    assert tf.variance == pytest.approx(1 / 6)
    assert np.allclose(tf.main, 0.5) and np.allclose(tf.total, 0.5)
