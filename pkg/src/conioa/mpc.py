"""Nonlinear MPC tracking a reference trajectory under the relative dynamics.

The optimal control problem is solved by single shooting with a
control-limited iterative LQR (Gauss-Newton, box-QP backward pass,
backtracking line search on the true cost). The rollout uses the same RK4
step as the simulator, so predicted states are exact for the returned inputs.

Guarantees of :func:`solve`:

- every returned input lies inside the box constraints (inputs are clipped in
  the forward pass);
- the returned cost never exceeds the cost of the all-hover input sequence
  (hover is a candidate initial guess and iterations only accept descent).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from conioa.dynamics import (
    GRAVITY,
    ControlInput,
    NonInertialQuantities,
    RelativeState,
    _rk4_step,
    _rk4_step_jac,
)
from conioa.se3 import _dot, _mm, _mtm, _mtv, _mv
from conioa.trajectory import ReferenceTrajectory

Array = np.ndarray

_DEFAULT_Q = (200.0, 200.0, 200.0, 10.0, 10.0, 10.0, 20.0, 20.0, 20.0, 20.0)
_DEFAULT_R = (0.5, 2.0, 2.0, 2.0)
_DEFAULT_QF = (400.0, 400.0, 400.0, 20.0, 20.0, 20.0, 20.0, 20.0, 20.0, 20.0)


@dataclass
class MpcConfig:
    horizon_steps: int = 20
    dt: float = 0.1
    Q: Array = field(default_factory=lambda: np.array(_DEFAULT_Q))
    R_w: Array = field(default_factory=lambda: np.array(_DEFAULT_R))
    Q_final: Array = field(default_factory=lambda: np.array(_DEFAULT_QF))
    T_min: float = 2.0
    T_max: float = 20.0
    Omega_rp: float = 3.0
    Omega_yaw: float = 1.0
    max_iterations: int = 20
    convergence_tol: float = 1e-4
    g: float = GRAVITY

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=np.float64)
        self.R_w = np.asarray(self.R_w, dtype=np.float64)
        self.Q_final = np.asarray(self.Q_final, dtype=np.float64)
        if self.Q.shape == (9,):
            # Three attitude weights given: reuse the first for the scalar part.
            self.Q = np.concatenate((self.Q[:6], self.Q[6:7], self.Q[6:9]))
        if self.Q_final.shape == (9,):
            self.Q_final = np.concatenate((self.Q_final[:6], self.Q_final[6:7], self.Q_final[6:9]))
        if self.Q.shape != (10,) or self.Q_final.shape != (10,) or self.R_w.shape != (4,):
            raise ValueError("Q and Q_final need 9 or 10 entries, R_w needs 4")
        if np.any(self.Q < 0) or np.any(self.Q_final < 0) or np.any(self.R_w < 0):
            raise ValueError("weights must be non-negative")
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.T_min < self.g < self.T_max:
            raise ValueError("hover thrust must lie strictly inside [T_min, T_max]")
        if not (self.Omega_rp > 0.0 and self.Omega_yaw > 0.0):
            raise ValueError("body-rate limits must be positive")

    @property
    def lower(self) -> Array:
        return np.array([self.T_min, -self.Omega_rp, -self.Omega_rp, -self.Omega_yaw])

    @property
    def upper(self) -> Array:
        return np.array([self.T_max, self.Omega_rp, self.Omega_rp, self.Omega_yaw])

    @property
    def hover_input(self) -> Array:
        return np.array([self.g, 0.0, 0.0, 0.0])


@dataclass
class MpcSolution:
    inputs: Array  # (N, 4)
    predicted_states: Array  # (N + 1, 10)
    cost: float
    iterations: int
    converged: bool
    solve_time: float
    hover_cost: float = math.inf
    dt: float = 0.1

    @property
    def controls(self) -> list[ControlInput]:
        return [ControlInput.from_array(u) for u in self.inputs]

    @property
    def states(self) -> list[RelativeState]:
        return [RelativeState.from_array(x) for x in self.predicted_states]

    @property
    def first_input(self) -> ControlInput:
        return ControlInput.from_array(self.inputs[0])

    def shifted(self, elapsed: float) -> Array:
        """Input guess advanced by ``elapsed`` seconds (linear interpolation, last held)."""
        n_steps = self.inputs.shape[0]
        t = np.arange(n_steps) * self.dt + elapsed
        knots = np.arange(n_steps) * self.dt
        return np.stack(
            [np.interp(t, knots, self.inputs[:, j]) for j in range(4)], axis=1
        )


@njit(cache=True)
def _state_error(x, xr):
    e = x - xr
    if x[6] * xr[6] + x[7] * xr[7] + x[8] * xr[8] + x[9] * xr[9] < 0.0:
        for i in range(6, 10):
            e[i] = x[i] + xr[i]
    return e


@njit(cache=True)
def _stage_cost(x, xr, u, u_h, Q, R):
    e = _state_error(x, xr)
    c = 0.0
    for i in range(10):
        c += Q[i] * e[i] * e[i]
    for i in range(4):
        du = u[i] - u_h[i]
        c += R[i] * du * du
    return c


@njit(cache=True)
def _terminal_cost(x, xr, Qf):
    e = _state_error(x, xr)
    c = 0.0
    for i in range(10):
        c += Qf[i] * e[i] * e[i]
    return c


@njit(cache=True)
def _rollout(x0, U, n, dt):
    N = U.shape[0]
    X = np.empty((N + 1, 10))
    X[0] = x0
    for k in range(N):
        X[k + 1] = _rk4_step(X[k], U[k], n, dt)
    return X


@njit(cache=True)
def _total_cost(X, U, Xref, u_h, Q, R, Qf):
    N = U.shape[0]
    c = 0.0
    for k in range(N):
        c += _stage_cost(X[k], Xref[k], U[k], u_h, Q, R)
    return c + _terminal_cost(X[N], Xref[N], Qf)


@njit(cache=True)
def _all_finite(X):
    for v in X.ravel():
        if not math.isfinite(v):
            return False
    return True


@njit(cache=True)
def _chol_solve(H, b):
    """Solve H x = b for small SPD H; returns (x, ok)."""
    m = H.shape[0]
    L = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1):
            s = H[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return np.zeros_like(b), False
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    cols = b.shape[1]
    x = np.empty_like(b)
    for c in range(cols):
        y = np.empty(m)
        for i in range(m):
            s = b[i, c]
            for k in range(i):
                s -= L[i, k] * y[k]
            y[i] = s / L[i, i]
        for i in range(m - 1, -1, -1):
            s = y[i]
            for k in range(i + 1, m):
                s -= L[k, i] * x[k, c]
            x[i, c] = s / L[i, i]
    return x, True


@njit(cache=True)
def _box_qp(H, g, lower, upper, x0):
    """Projected-Newton solve of min 1/2 x'Hx + g'x on a box.

    Returns (x, free mask, ok). Small dense problems only.
    """
    m = g.shape[0]
    x = np.minimum(np.maximum(x0, lower), upper)
    free = np.ones(m, dtype=np.bool_)
    for _ in range(30):
        grad = g + _mv(H, x)
        n_free = 0
        for i in range(m):
            clamped = (x[i] <= lower[i] and grad[i] > 0.0) or (x[i] >= upper[i] and grad[i] < 0.0)
            free[i] = not clamped
            if free[i]:
                n_free += 1
        if n_free == 0:
            break
        idx = np.empty(n_free, dtype=np.int64)
        j = 0
        for i in range(m):
            if free[i]:
                idx[j] = i
                j += 1
        Hf = np.empty((n_free, n_free))
        gf = np.empty((n_free, 1))
        for a in range(n_free):
            gf[a, 0] = -grad[idx[a]]
            for b in range(n_free):
                Hf[a, b] = H[idx[a], idx[b]]
        step_f, ok = _chol_solve(Hf, gf)
        if not ok:
            return x, free, False
        d = np.zeros(m)
        for a in range(n_free):
            d[idx[a]] = step_f[a, 0]
        if np.max(np.abs(d)) < 1e-12:
            break
        f0 = 0.5 * _dot(x, _mv(H, x)) + _dot(g, x)
        alpha = 1.0
        accepted = False
        while alpha > 1e-8:
            xn = np.minimum(np.maximum(x + alpha * d, lower), upper)
            fn = 0.5 * _dot(xn, _mv(H, xn)) + _dot(g, xn)
            if fn <= f0 + 1e-6 * _dot(grad, xn - x):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        moved = np.max(np.abs(xn - x))
        x = xn
        if moved < 1e-12:
            break
    grad = g + _mv(H, x)
    for i in range(m):
        clamped = (x[i] <= lower[i] and grad[i] > 0.0) or (x[i] >= upper[i] and grad[i] < 0.0)
        free[i] = not clamped
    return x, free, True


@njit(cache=True)
def _backward_pass(X, U, Xref, n, dt, u_h, Q, R, Qf, lower, upper, mu):
    N = U.shape[0]
    kff = np.zeros((N, 4))
    Kfb = np.zeros((N, 4, 10))
    e = _state_error(X[N], Xref[N])
    Vx = 2.0 * Qf * e
    Vxx = np.diag(2.0 * Qf)
    dv1 = 0.0
    dv2 = 0.0
    for k in range(N - 1, -1, -1):
        _, A, B = _rk4_step_jac(X[k], U[k], n, dt)
        e = _state_error(X[k], Xref[k])
        lx = 2.0 * Q * e
        lu = 2.0 * R * (U[k] - u_h)
        VxxA = _mm(Vxx, A)
        VxxB = _mm(Vxx, B)
        Qx = lx + _mtv(A, Vx)
        Qu = lu + _mtv(B, Vx)
        Qxx = _mtm(A, VxxA)
        for i in range(10):
            Qxx[i, i] += 2.0 * Q[i]
        Quu = _mtm(B, VxxB)
        for i in range(4):
            Quu[i, i] += 2.0 * R[i] + mu
        Qux = _mtm(B, VxxA)

        kk, free, ok = _box_qp(Quu, Qu, lower - U[k], upper - U[k], np.zeros(4))
        if not ok:
            return kff, Kfb, 0.0, 0.0, False
        n_free = 0
        for i in range(4):
            if free[i]:
                n_free += 1
        K = np.zeros((4, 10))
        if n_free > 0:
            idx = np.empty(n_free, dtype=np.int64)
            j = 0
            for i in range(4):
                if free[i]:
                    idx[j] = i
                    j += 1
            Hf = np.empty((n_free, n_free))
            Bf = np.empty((n_free, 10))
            for a in range(n_free):
                for b in range(n_free):
                    Hf[a, b] = Quu[idx[a], idx[b]]
                for c in range(10):
                    Bf[a, c] = -Qux[idx[a], c]
            Kf, ok = _chol_solve(Hf, Bf)
            if not ok:
                return kff, Kfb, 0.0, 0.0, False
            for a in range(n_free):
                K[idx[a]] = Kf[a]
        kff[k] = kk
        Kfb[k] = K

        Quu_k = _mv(Quu, kk)
        dv1 += _dot(kk, Qu)
        dv2 += 0.5 * _dot(kk, Quu_k)
        Vx = Qx + _mtv(K, Quu_k + Qu) + _mtv(Qux, kk)
        Kt_Qux = _mtm(K, Qux)
        Vxx = Qxx + _mtm(K, _mm(Quu, K)) + Kt_Qux + Kt_Qux.T
        Vxx = 0.5 * (Vxx + Vxx.T)
    return kff, Kfb, dv1, dv2, True


@njit(cache=True)
def _forward_pass(x0, X, U, kff, Kfb, alpha, n, dt, lower, upper):
    N = U.shape[0]
    Xn = np.empty_like(X)
    Un = np.empty_like(U)
    Xn[0] = x0
    for k in range(N):
        dx = Xn[k] - X[k]
        u = U[k] + alpha * kff[k] + _mv(Kfb[k], dx)
        Un[k] = np.minimum(np.maximum(u, lower), upper)
        Xn[k + 1] = _rk4_step(Xn[k], Un[k], n, dt)
    return Xn, Un


@njit(cache=True)
def _ilqr(x0, Xref, n, dt, u_h, Q, R, Qf, lower, upper, U0, max_iter, tol):
    U = U0.copy()
    X = _rollout(x0, U, n, dt)
    J = _total_cost(X, U, Xref, u_h, Q, R, Qf)
    mu = 0.0
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        kff, Kfb, dv1, dv2, ok = _backward_pass(X, U, Xref, n, dt, u_h, Q, R, Qf, lower, upper, mu)
        if not ok:
            mu = max(1e-4, mu * 10.0)
            if mu > 1e8:
                break
            continue
        if -(dv1 + dv2) < tol * max(J, 1e-12):
            converged = True
            break
        alpha = 1.0
        improved = False
        while alpha > 1e-3:
            Xn, Un = _forward_pass(x0, X, U, kff, Kfb, alpha, n, dt, lower, upper)
            if _all_finite(Xn):
                Jn = _total_cost(Xn, Un, Xref, u_h, Q, R, Qf)
                if Jn < J:
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            mu = max(1e-4, mu * 10.0)
            if mu > 1e8:
                converged = True
                break
            continue
        rel = (J - Jn) / max(J, 1e-12)
        X, U, J = Xn, Un, Jn
        mu = mu * 0.3 if mu > 1e-6 else 0.0
        if rel < tol:
            converged = True
            break
    return U, X, J, iterations, converged


def stage_cost(
    x: RelativeState, x_ref: RelativeState, u: ControlInput, cfg: MpcConfig
) -> float:
    """Weighted tracking error plus deviation from the hover input.

    The reference attitude is sign-aligned with ``x.q`` before subtraction.
    """
    return float(
        _stage_cost(
            x.as_array(), x_ref.as_array(), u.as_array(), cfg.hover_input, cfg.Q, cfg.R_w
        )
    )


def reference_nodes(
    traj: ReferenceTrajectory, cfg: MpcConfig, elapsed: float = 0.0
) -> Array:
    """Reference states for nodes ``0..N`` at spacing ``cfg.dt`` (padded with the last sample)."""
    return traj.reference_states(cfg.horizon_steps + 1, cfg.dt, elapsed)


def solve(
    x0: RelativeState,
    traj: ReferenceTrajectory,
    n: NonInertialQuantities,
    cfg: MpcConfig,
    warm_start: MpcSolution | Array | None = None,
    elapsed: float = 0.0,
) -> MpcSolution:
    """Optimize the input sequence over the horizon.

    ``warm_start`` may be a previous solution (used as-is; shift it first with
    :meth:`MpcSolution.shifted` when time has passed) or an ``(N, 4)`` array.
    ``elapsed`` is the time since the trajectory was planned.
    """
    start = time.perf_counter()
    xa = x0.as_array()
    if not np.all(np.isfinite(xa)):
        raise ValueError("initial state must be finite")
    Xref = reference_nodes(traj, cfg, elapsed)
    return _solve_arrays(xa, Xref, n.as_array(), cfg, warm_start, start)


def _solve_arrays(xa, Xref, na, cfg: MpcConfig, warm_start, start) -> MpcSolution:
    N = cfg.horizon_steps
    lower, upper, u_h = cfg.lower, cfg.upper, cfg.hover_input
    U_hover = np.tile(u_h, (N, 1))
    X_hover = _rollout(xa, U_hover, na, cfg.dt)
    hover_ok = bool(_all_finite(X_hover))
    J_hover = (
        float(_total_cost(X_hover, U_hover, Xref, u_h, cfg.Q, cfg.R_w, cfg.Q_final))
        if hover_ok
        else math.inf
    )

    U0 = U_hover
    if warm_start is not None:
        Uw = warm_start.inputs if isinstance(warm_start, MpcSolution) else np.asarray(warm_start)
        Uw = np.clip(np.asarray(Uw, dtype=np.float64).reshape(N, 4), lower, upper)
        Xw = _rollout(xa, Uw, na, cfg.dt)
        if _all_finite(Xw):
            Jw = _total_cost(Xw, Uw, Xref, u_h, cfg.Q, cfg.R_w, cfg.Q_final)
            if Jw <= J_hover:
                U0 = Uw

    if not hover_ok and U0 is U_hover:
        return MpcSolution(
            U_hover, X_hover, math.inf, 0, False, time.perf_counter() - start, math.inf, cfg.dt
        )

    U, X, J, iterations, converged = _ilqr(
        xa, Xref, na, cfg.dt, u_h, cfg.Q, cfg.R_w, cfg.Q_final, lower, upper,
        np.ascontiguousarray(U0), int(cfg.max_iterations), float(cfg.convergence_tol),
    )
    if not (np.isfinite(J) and _all_finite(X)):
        return MpcSolution(
            U_hover, X_hover, J_hover, int(iterations), False,
            time.perf_counter() - start, J_hover, cfg.dt,
        )
    return MpcSolution(
        U, X, float(J), int(iterations), bool(converged),
        time.perf_counter() - start, J_hover, cfg.dt,
    )


class TrackingMpc:
    """Receding-horizon wrapper that keeps and shifts the previous solution."""

    def __init__(self, cfg: MpcConfig | None = None, warm_start: bool = True):
        self.cfg = cfg or MpcConfig()
        self.warm_start = warm_start
        self.last: MpcSolution | None = None
        self._last_time: float | None = None

    def reset(self) -> None:
        self.last = None
        self._last_time = None

    def step(
        self,
        x0: RelativeState,
        traj: ReferenceTrajectory,
        n: NonInertialQuantities,
        t: float,
        elapsed: float = 0.0,
    ) -> MpcSolution:
        guess = None
        if self.warm_start and self.last is not None:
            guess = self.last.shifted(t - self._last_time)
        sol = solve(x0, traj, n, self.cfg, guess, elapsed)
        self.last = sol
        self._last_time = t
        return sol
