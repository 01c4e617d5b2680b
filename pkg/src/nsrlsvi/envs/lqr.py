"""Deterministic finite-horizon LQR with quadratic features.

``phi(x, u) = (vec(x x^T), vec(u u^T), vec(x u^T), 1) / kappa`` where ``kappa``
bounds the raw feature norm over the state and control boxes. Rewards are
``1 - (x^T Q x + u^T R u) / c_max``, which is linear in ``phi``.
"""

import itertools

import numpy as np
from scipy import optimize

from .base import EnvError, GreedyChoice, LayeredEnv


def _box_vertices(dim, half_width):
    return np.array(list(itertools.product((-half_width, half_width), repeat=dim)))


class LQREnv(LayeredEnv):
    kind = "lqr"
    finite_actions = False
    finite_features = False

    def __init__(self, A, B, Q, R, H, state_box=1.0, control_box=None, init_box=None,
                 grid_points=21, net_size=400, net_seed=0, reward_noise="bernoulli",
                 gamma=1.0):
        self.A_mat = np.atleast_2d(np.asarray(A, dtype=float))
        self.B_mat = np.asarray(B, dtype=float)
        if self.B_mat.ndim == 1:
            self.B_mat = self.B_mat.reshape(-1, 1)
        self.Q_mat = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R_mat = np.atleast_2d(np.asarray(R, dtype=float))
        self.dx = self.A_mat.shape[0]
        self.m = self.B_mat.shape[1]
        self.H = int(H)
        self.state_box = float(state_box)
        self.control_box = float(control_box if control_box is not None else state_box)
        self.init_box = float(init_box if init_box is not None else 0.5 * self.state_box)
        self.grid_points = int(grid_points)
        self.net_size = int(net_size)
        self.net_seed = int(net_seed)
        self.reward_noise = reward_noise
        self._gamma = float(gamma)
        self._validate()

        self.d = self.dx * self.dx + self.m * self.m + self.dx * self.m + 1
        nx2 = self.dx * self.state_box ** 2
        nu2 = self.m * self.control_box ** 2
        self.kappa = float(np.sqrt(nx2 ** 2 + nu2 ** 2 + nx2 * nu2 + 1.0))
        xv = _box_vertices(self.dx, self.state_box)
        uv = _box_vertices(self.m, self.control_box)
        self.c_max = float(np.max(np.einsum("ij,jk,ik->i", xv, self.Q_mat, xv))
                           + np.max(np.einsum("ij,jk,ik->i", uv, self.R_mat, uv)))
        if self.c_max <= 0:
            raise EnvError("Q and R are both zero on the boxes; rewards would be constant")
        w_raw = np.concatenate([-self.Q_mat.ravel() / self.c_max, -self.R_mat.ravel() / self.c_max,
                                np.zeros(self.dx * self.m), [1.0]])
        self._omega = self.kappa * w_raw
        g = np.linspace(-self.control_box, self.control_box, self.grid_points)
        self.control_grid = np.array(list(itertools.product(g, repeat=self.m)))
        self._riccati()
        self._net = None
        self._features = None
        self._grid = None

    def _validate(self):
        dx = self.A_mat.shape[0]
        if self.A_mat.shape != (dx, dx):
            raise EnvError("A must be square")
        if self.B_mat.shape[0] != dx:
            raise EnvError("B must have as many rows as A")
        m = self.B_mat.shape[1]
        if self.Q_mat.shape != (dx, dx) or self.R_mat.shape != (m, m):
            raise EnvError("Q must be dx x dx and R must be m x m")
        if np.max(np.abs(self.Q_mat - self.Q_mat.T)) > 1e-12 or np.linalg.eigvalsh(self.Q_mat)[0] < -1e-12:
            raise EnvError("Q must be symmetric PSD")
        if np.max(np.abs(self.R_mat - self.R_mat.T)) > 1e-12 or np.linalg.eigvalsh(self.R_mat)[0] <= 0:
            raise EnvError("R must be symmetric positive definite")
        if self.H < 1 or self.state_box <= 0 or self.control_box <= 0 or self.init_box <= 0:
            raise EnvError("need H >= 1 and positive boxes")
        if self.init_box > self.state_box:
            raise EnvError("init_box must lie inside state_box")

    # -- feature algebra -------------------------------------------------
    def raw_feature(self, x, u):
        x = np.asarray(x, dtype=float).ravel()
        u = np.asarray(u, dtype=float).ravel()
        return np.concatenate([np.outer(x, x).ravel(), np.outer(u, u).ravel(),
                               np.outer(x, u).ravel(), [1.0]])

    def raw_features(self, X, U):
        """Row-wise ``raw_feature`` for state rows ``X`` and control rows ``U``."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dx)
        U = np.asarray(U, dtype=float).reshape(-1, self.m)
        n = X.shape[0]
        return np.hstack([np.einsum("ni,nj->nij", X, X).reshape(n, -1),
                          np.einsum("ni,nj->nij", U, U).reshape(n, -1),
                          np.einsum("ni,nj->nij", X, U).reshape(n, -1), np.ones((n, 1))])

    def blocks(self, theta):
        theta = np.asarray(theta, dtype=float)
        dx, m = self.dx, self.m
        i0, i1, i2 = dx * dx, dx * dx + m * m, dx * dx + m * m + dx * m
        return (theta[:i0].reshape(dx, dx), theta[i0:i1].reshape(m, m),
                theta[i1:i2].reshape(dx, m), float(theta[i2]))

    def from_blocks(self, Txx, Tuu, Txu, c):
        return np.concatenate([np.asarray(Txx).ravel(), np.asarray(Tuu).ravel(),
                               np.asarray(Txu).ravel(), [c]])

    def _closed_form(self, x, theta):
        """Unconstrained maximizer over u of <theta, phi(x, u)>, or None if unbounded."""
        Txx, Tuu, Txu, c = self.blocks(theta)
        S = 0.5 * (Tuu + Tuu.T)
        if self.m and np.linalg.eigvalsh(S)[-1] >= 0:
            return None
        return -0.5 * np.linalg.solve(S, Txu.T @ x)

    # -- interface -------------------------------------------------------
    def initial_states(self):
        return None

    def sample_initial(self, rng):
        return rng.uniform(-self.init_box, self.init_box, size=self.dx)

    def state_key(self, s):
        return np.asarray(s, dtype=float).tobytes()

    def feature(self, h, s, a):
        return self.raw_feature(s, a) / self.kappa

    def actions(self, h, s):
        return self.control_grid

    def action_features(self, h, s):
        g = self.control_grid.shape[0]
        X = np.repeat(np.asarray(s, dtype=float).reshape(1, -1), g, axis=0)
        return self.raw_features(X, self.control_grid) / self.kappa

    def _grid_values(self, X, param):
        g = self.control_grid.shape[0]
        F = self.raw_features(np.repeat(X, g, axis=0), np.tile(self.control_grid, (len(X), 1)))
        return (F @ (np.asarray(param, dtype=float) / self.kappa)).reshape(len(X), g).max(axis=1)

    def greedy(self, h, s, param):
        u = self._closed_form(np.asarray(s, dtype=float), param)
        if u is not None and np.max(np.abs(u)) <= self.control_box * (1 + 1e-12):
            phi = self.feature(h, s, u)
            return GreedyChoice(u, float(phi @ param), phi)
        F = self.action_features(h, s)
        q = F @ param
        k = int(np.argmax(q))
        return GreedyChoice(self.control_grid[k].copy(), float(q[k]), F[k], flagged=True)

    def random_action(self, h, s, rng):
        return rng.uniform(-self.control_box, self.control_box, size=self.m)

    def values(self, h, states, param):
        X = np.asarray(states, dtype=float).reshape(-1, self.dx)
        if X.shape[0] == 0:
            return np.zeros(0)
        Txx, Tuu, Txu, c = self.blocks(np.asarray(param, dtype=float) / self.kappa)
        S = 0.5 * (Tuu + Tuu.T)
        if np.linalg.eigvalsh(S)[-1] >= 0:
            return self._grid_values(X, param)
        U = -0.5 * np.linalg.solve(S, Txu.T @ X.T).T
        out = (np.einsum("ij,jk,ik->i", X, Txx, X) + np.einsum("ij,jk,ik->i", U, Tuu, U)
               + np.einsum("ij,jk,ik->i", X, Txu, U) + c)
        outside = np.flatnonzero(np.max(np.abs(U), axis=1) > self.control_box * (1 + 1e-12))
        if outside.size:
            out[outside] = self._grid_values(X[outside], param)
        return out

    def next_state(self, h, s, a):
        if h + 1 >= self.H:
            raise EnvError("no transition out of the last layer")
        a = np.asarray(a, dtype=float).ravel()
        if a.shape != (self.m,) or np.max(np.abs(a)) > self.control_box * (1 + 1e-9):
            raise EnvError(f"control {a} outside the control box")
        x = self.A_mat @ np.asarray(s, dtype=float) + self.B_mat @ a
        if np.max(np.abs(x)) > self.state_box * (1 + 1e-9):
            raise EnvError(f"state escaped the state box at layer {h + 1}: {x}")
        return x

    def mean_reward(self, h, s, a):
        x = np.asarray(s, dtype=float)
        u = np.asarray(a, dtype=float).ravel()
        return float(1.0 - (x @ self.Q_mat @ x + u @ self.R_mat @ u) / self.c_max)

    def reward_param(self, h):
        return self._omega

    def net(self):
        """Fixed representative (x, u) pairs: box vertices plus a seeded uniform sample."""
        if self._net is None:
            rng = np.random.default_rng(self.net_seed)
            xs = rng.uniform(-self.state_box, self.state_box, size=(self.net_size, self.dx))
            us = rng.uniform(-self.control_box, self.control_box, size=(self.net_size, self.m))
            pairs = [(x, u) for x in _box_vertices(self.dx, self.state_box)
                     for u in _box_vertices(self.m, self.control_box)]
            pairs += list(zip(xs, us))
            self._net = pairs
        return self._net

    def feature_set(self):
        if self._features is None:
            self._features = np.array([self.feature(0, x, u) for x, u in self.net()])
            self._features.setflags(write=False)
        return self._features

    def _grid_features(self):
        if self._grid is None:
            X = np.array([x for x, _ in self.net()])
            g = self.control_grid.shape[0]
            self._net_states = X
            self._grid = self.raw_features(np.repeat(X, g, axis=0), np.tile(self.control_grid, (len(X), 1))) / self.kappa
        return self._grid

    def linopt(self, theta):
        """Best feature over the net pairs, the net states times the control
        grid, and the closed-form control at each net state when it exists."""
        theta = np.asarray(theta, dtype=float)
        cands = [self.feature_set(), self._grid_features()]
        Txx, Tuu, Txu, c = self.blocks(theta)
        S = 0.5 * (Tuu + Tuu.T)
        if np.linalg.eigvalsh(S)[-1] < 0:
            X = self._net_states
            U = -0.5 * np.linalg.solve(S, Txu.T @ X.T).T
            ok = np.max(np.abs(U), axis=1) <= self.control_box * (1 + 1e-12)
            if ok.any():
                cands.append(self.raw_features(X[ok], U[ok]) / self.kappa)
        best, best_val = None, -np.inf
        for F in cands:
            v = F @ theta
            k = int(np.argmax(v))
            if v[k] > best_val:
                best, best_val = F[k], v[k]
        return best

    def backup(self, h, theta):
        """Exact backup of <theta, phi> under x' = A x + B u and u' = argmax."""
        Txx, Tuu, Txu, c = self.blocks(theta)
        S = 0.5 * (Tuu + Tuu.T)
        if np.linalg.eigvalsh(S)[-1] >= 0:
            raise EnvError("backup unbounded: control block of theta is not negative definite")
        G = 0.5 * (Txx + Txx.T) - 0.25 * Txu @ np.linalg.solve(S, Txu.T)
        A, B = self.A_mat, self.B_mat
        return self.from_blocks(A.T @ G @ A, B.T @ G @ B, 2.0 * A.T @ G @ B, c)

    def successor_value(self, h, s, a, theta):
        """Numerical max over u' in R^m; independent of the closed-form backup."""
        x = self.A_mat @ np.asarray(s, dtype=float) + self.B_mat @ np.asarray(a, dtype=float).ravel()

        def neg(u):
            return -float(self.feature(h + 1, x, u) @ theta)

        u0 = np.zeros(self.m)
        res = optimize.minimize(neg, u0, method="BFGS", options={"gtol": 1e-12})
        return -float(res.fun)

    def random_probe_theta(self, rng):
        """Parameter with a negative-definite control block (bounded argmax)."""
        Mx = rng.normal(size=(self.dx, self.dx))
        Mu = rng.normal(size=(self.m, self.m))
        Tuu = -(Mu @ Mu.T + np.eye(self.m))
        return self.from_blocks(Mx, Tuu, rng.normal(size=(self.dx, self.m)), float(rng.normal()))

    def probe_pairs(self, h, rng, n):
        xs = rng.uniform(-self.state_box, self.state_box, size=(n, self.dx))
        us = rng.uniform(-self.control_box, self.control_box, size=(n, self.m))
        return list(zip(xs, us))

    # -- ground truth ----------------------------------------------------
    def _riccati(self):
        A, B, Q, R = self.A_mat, self.B_mat, self.Q_mat, self.R_mat
        P = np.zeros((self.dx, self.dx))
        self.cost_to_go = [None] * (self.H + 1)
        self.gains = [None] * self.H
        self.cost_to_go[self.H] = P
        for h in reversed(range(self.H)):
            K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            P = Q + A.T @ P @ A + A.T @ P @ B @ K
            P = 0.5 * (P + P.T)
            self.gains[h] = K
            self.cost_to_go[h] = P

    def optimal_rollout(self, x):
        """(V*_1(x), controls, feasible) under u_h = K_h x_h; ``feasible`` is False if
        the unconstrained optimum leaves a box, in which case V* is an upper bound."""
        x = np.asarray(x, dtype=float)
        value = self.H - float(x @ self.cost_to_go[0] @ x) / self.c_max
        controls, feasible = [], True
        for h in range(self.H):
            u = self.gains[h] @ x
            controls.append(u)
            if np.max(np.abs(u)) > self.control_box or np.max(np.abs(x)) > self.state_box:
                feasible = False
            x = self.A_mat @ x + self.B_mat @ u
        return value, controls, feasible

    def optimal_value(self, s, h=0):
        return self.optimal_rollout(s)[0]

    @property
    def gamma(self):
        return self._gamma

    def describe(self):
        return {"kind": self.kind, "d": self.d, "H": self.H, "dx": self.dx, "m": self.m}

    def to_dict(self):
        return {
            "kind": "lqr", "A": self.A_mat.tolist(), "B": self.B_mat.tolist(),
            "Q": self.Q_mat.tolist(), "R": self.R_mat.tolist(), "H": self.H,
            "state_box": self.state_box, "control_box": self.control_box,
            "init_box": self.init_box, "grid_points": self.grid_points,
            "net_size": self.net_size, "net_seed": self.net_seed,
            "reward_noise": self.reward_noise, "gamma": self._gamma,
        }


def build_lqr(A, B, Q, R, H, state_box=1.0, **kwargs):
    return LQREnv(A, B, Q, R, H, state_box=state_box, **kwargs)
