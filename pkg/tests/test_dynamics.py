import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from conioa import se3
from conioa.dynamics import (
    GRAVITY,
    ControlInput,
    NonInertialQuantities,
    RelativeState,
    _rk4_step,
    _rk4_step_jac,
    derivative,
    integrate_rk4,
    is_degenerate,
)
from conioa.se3 import quat_yaw
from conftest import random_quat

WORLD = NonInertialQuantities.world()


def world_quadrotor_rhs(t, x, u):
    """Plain world-frame quadrotor, written with a rotation matrix."""
    p, v, q = x[0:3], x[3:6], x[6:10]
    w, a, b, c = q
    Rz = np.array([2 * (a * c + w * b), 2 * (b * c - w * a), w * w - a * a - b * b + c * c])
    wx, wy, wz = u[1:4]
    Omega = np.array([[0, -wx, -wy, -wz], [wx, 0, wz, -wy], [wy, -wz, 0, wx], [wz, wy, -wx, 0]])
    return np.concatenate((v, u[0] * Rz - [0, 0, GRAVITY], 0.5 * Omega @ q))


def test_derivative_examples():
    hover = derivative(RelativeState(np.zeros(3), np.zeros(3)), ControlInput.hover(), WORLD)
    np.testing.assert_array_equal(hover.v_dot, 0.0)
    np.testing.assert_array_equal(hover.q_dot, 0.0)
    fall = derivative(RelativeState(np.zeros(3), np.zeros(3)), ControlInput(0.0), WORLD)
    np.testing.assert_array_equal(fall.v_dot, [0, 0, -9.8])
    spin = NonInertialQuantities([0, 0, GRAVITY], [0, 0, 0.5])
    d = derivative(RelativeState([1, 0, 0], np.zeros(3)), ControlInput.hover(), spin)
    np.testing.assert_allclose(d.v_dot, [0.25, 0, 0], atol=1e-15)


def test_derivative_matches_symbolic_model(rng):
    p = sp.Matrix(sp.symbols("p0:3"))
    v = sp.Matrix(sp.symbols("v0:3"))
    qw, qx, qy, qz = sp.symbols("qw qx qy qz")
    T = sp.Symbol("T")
    wb = sp.Matrix(sp.symbols("wb0:3"))
    a = sp.Matrix(sp.symbols("a0:3"))
    Om = sp.Matrix(sp.symbols("Om0:3"))
    be = sp.Matrix(sp.symbols("be0:3"))
    Q = sp.Quaternion(qw, qx, qy, qz)
    thrust = Q * sp.Quaternion(0, 0, 0, T) * sp.Quaternion(qw, -qx, -qy, -qz)
    thrust = sp.Matrix([thrust.b, thrust.c, thrust.d])
    vdot = -be.cross(p) - 2 * Om.cross(v) - Om.cross(Om.cross(p)) + thrust - a
    qdot = -sp.Rational(1, 2) * sp.Quaternion(0, *Om) * Q + sp.Rational(1, 2) * Q * sp.Quaternion(0, *wb)
    qdot = sp.Matrix([qdot.a, qdot.b, qdot.c, qdot.d])
    syms = [*p, *v, qw, qx, qy, qz, T, *wb, *a, *Om, *be]
    f = sp.lambdify(syms, sp.Matrix.vstack(v, vdot, qdot), "numpy")
    for _ in range(25):
        x = RelativeState(rng.normal(size=3), rng.normal(size=3), random_quat(rng))
        u = ControlInput(rng.uniform(0, 20), rng.normal(size=3))
        n = NonInertialQuantities(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
        got = derivative(x, u, n).as_array()
        want = np.asarray(f(*x.as_array(), *u.as_array(), *n.as_array()), float).ravel()
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_derivative_rejects_bad_input():
    x = RelativeState(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        derivative(x, ControlInput(np.nan), WORLD)
    with pytest.raises(ValueError):
        derivative(RelativeState(np.zeros(3), np.zeros(3), [2, 0, 0, 0]), ControlInput.hover(), WORLD)


def test_rk4_hover_fixed_point():
    x = RelativeState([0.3, -1.0, 2.0], np.zeros(3))
    for dt in (1e-3, 0.01, 0.1):
        y = integrate_rk4(x, ControlInput.hover(), WORLD, dt)
        np.testing.assert_allclose(y.as_array(), x.as_array(), atol=1e-12)


def test_rk4_pure_yaw():
    x = RelativeState(np.zeros(3), np.zeros(3))
    u = ControlInput(GRAVITY, [0, 0, 1.0])
    for _ in range(1000):
        x = integrate_rk4(x, u, WORLD, 0.001)
    assert quat_yaw(x.q) == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(x.p, 0.0, atol=1e-9)


def _run(x, U, n, dt, hold):
    for u in U:
        for _ in range(hold):
            x = _rk4_step(x, u, n, dt)
    return x


def test_rk4_step_halving(rng):
    na = WORLD.as_array()
    for _ in range(5):
        x0 = RelativeState(np.zeros(3), np.zeros(3)).as_array()
        U = np.column_stack((rng.uniform(8, 12, 10), rng.uniform(-1, 1, (10, 3))))
        a = _run(x0, U, na, 0.001, 100)
        b = _run(x0, U, na, 0.0005, 200)
        assert np.abs(a - b).max() < 1e-9


def test_rk4_rejects_bad_dt():
    with pytest.raises(ValueError):
        integrate_rk4(RelativeState(np.zeros(3), np.zeros(3)), ControlInput.hover(), WORLD, 0.0)


def test_degenerate_matches_world_frame_oracle(rng):
    for _ in range(10):
        x = RelativeState(rng.normal(size=3), rng.normal(size=3), random_quat(rng))
        xo = x.as_array()
        for _ in range(10):
            u = np.concatenate(([rng.uniform(5, 15)], rng.uniform(-2, 2, 3)))
            sol = solve_ivp(world_quadrotor_rhs, (0, 0.1), xo, args=(u,), rtol=1e-12, atol=1e-12, method="DOP853")
            xo = sol.y[:, -1]
            for _ in range(100):
                x = integrate_rk4(x, ControlInput.from_array(u), WORLD, 0.001)
        assert np.abs(x.p - xo[0:3]).max() < 1e-6


def test_is_degenerate_examples():
    assert is_degenerate(NonInertialQuantities([0, 0, 9.8]))
    assert not is_degenerate(NonInertialQuantities([0, 0, 9.8], [0, 0, 0.5]))
    assert not is_degenerate(NonInertialQuantities(np.zeros(3)))


finite = st.floats(-5, 5, allow_nan=False)
v3 = arrays(np.float64, 3, elements=finite)
q4 = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(lambda q: np.linalg.norm(q) > 0.2)


@given(v3, v3, q4, st.floats(0, 20), v3, v3, v3, v3)
def test_pdot_is_velocity_and_norm_kept(p, v, q, T, w, a, om, be):
    x = RelativeState(p, v, se3.normalize(q))
    u = ControlInput(T, w)
    n = NonInertialQuantities(a, om, be)
    assert np.array_equal(derivative(x, u, n).p_dot, v)
    y = integrate_rk4(x, u, n, 0.01)
    assert abs(np.linalg.norm(y.q) - 1.0) < 1e-9


def test_rk4_jacobians_match_finite_differences(rng):
    for _ in range(20):
        x = RelativeState(rng.normal(size=3), rng.normal(size=3), random_quat(rng)).as_array()
        u = np.concatenate(([rng.uniform(5, 15)], rng.normal(size=3)))
        n = NonInertialQuantities(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)).as_array()
        xn, Fx, Fu = _rk4_step_jac(x, u, n, 0.05)
        np.testing.assert_allclose(xn, _rk4_step(x, u, n, 0.05), atol=1e-14)
        eps = 1e-6
        for i in range(6):  # p, v directions; the attitude is checked on the manifold below
            d = np.zeros(10)
            d[i] = eps
            fd = (_rk4_step(x + d, u, n, 0.05) - _rk4_step(x - d, u, n, 0.05)) / (2 * eps)
            np.testing.assert_allclose(Fx[:, i], fd, atol=1e-6)
        for i in range(4):
            d = np.zeros(4)
            d[i] = eps
            fd = (_rk4_step(x, u + d, n, 0.05) - _rk4_step(x, u - d, n, 0.05)) / (2 * eps)
            np.testing.assert_allclose(Fu[:, i], fd, atol=1e-6)
