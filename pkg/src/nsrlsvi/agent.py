"""Randomized least-squares value iteration with null-space exploration noise.

Each round fits, from the last layer backward, a value parameter to the
next layer's perturbed greedy values and a reward parameter to observed
rewards. The value parameter is perturbed only outside the span of the
layer's past features, so predictions on visited directions stay exact.
"""

from dataclasses import dataclass, field
import time

import numpy as np
from scipy.linalg import solve_triangular

from .design import frank_wolfe_design
from .envs.base import step
from .feasibility import WalkConfig
from .oracles import (LinOpt, OracleFailure, RegressionProblem, apx_reward_oracle,
                      apx_value_oracle, exact_lsq)
from .rng import stream
from .schedule import compute_schedule

SPAN_TOL = 1e-8
POLICIES = ("nsrlsvi", "greedy", "random")
ORACLES = ("exact", "approximate")


class InvariantError(RuntimeError):
    def __init__(self, invariant, round_, detail=""):
        super().__init__(f"invariant '{invariant}' violated at round {round_}" + (f": {detail}" if detail else ""))
        self.invariant = invariant
        self.round = round_


class AgentError(RuntimeError):
    """A component failure, annotated with the round and layer."""

    def __init__(self, round_, layer, cause):
        super().__init__(f"round {round_}, layer {layer}: {cause}")
        self.round = round_
        self.layer = layer


@dataclass
class AgentConfig:
    policy: str = "nsrlsvi"
    oracle: str = "exact"
    oracle_eps: float = 1e-3
    oracle_delta: float = 0.1
    known_reward: bool = False
    reward_noise: str = None  # overrides the environment's reward model
    walk: WalkConfig = None

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.oracle not in ORACLES:
            raise ValueError(f"oracle must be one of {ORACLES}, got {self.oracle!r}")
        if self.oracle_eps <= 0 or not 0 < self.oracle_delta < 1:
            raise ValueError("oracle_eps must be positive and oracle_delta in (0, 1)")


@dataclass
class EpisodeLog:
    round: int
    initial_state: object
    trajectory: list  # (state, action, reward) per layer
    span_event: bool
    regret_inst: float
    v_star: float
    v_pi: float
    v_bar: float
    optimism: bool
    residual_max: float
    leverage: tuple  # ||phi_h||^2 in the inverse of Sigma_{t,h}, per layer
    confinement: float  # max_h ||P (theta_bar - theta_hat)||
    noise_ratio: tuple  # ||xi_h||_Lambda / B_noise^P(h), per layer
    fallback: bool = False
    flagged: bool = False
    wall_ms: float = 0.0


def _key(x):
    return x.tobytes() if isinstance(x, np.ndarray) else x


class HorizonState:
    """Everything the agent keeps for one layer."""

    def __init__(self, design_matrix, W, sigma):
        self.design = np.asarray(design_matrix, dtype=float)
        self.d = self.design.shape[0]
        self.W = float(W)
        self.sigma = float(sigma)
        self.Sigma = self.design.copy()
        self.Sigma_hat = np.zeros((self.d, self.d))
        self.basis = np.zeros((self.d, 0))
        self.version = 0
        self._groups = {}
        self._n = 0
        self._F = np.zeros((16, self.d))
        self._counts = np.zeros(16)
        self._rsum = np.zeros(16)
        self._next = []
        self._next_arr = None  # buffer for array-valued next states
        self._pinv = None
        self.theta_hat = self.theta_bar = self.omega_hat = self.omega_bar = np.zeros(self.d)
        self.Sigma_chol = None
        self._refresh()

    @property
    def P(self):
        return self.basis @ self.basis.T

    @property
    def rank(self):
        return self.basis.shape[1]

    def _refresh(self):
        P = self.P
        Q = np.eye(self.d) - P
        lam = P @ self.design @ P + Q @ self.design @ Q
        self.Lam = 0.5 * (lam + lam.T)
        try:
            self.Lam_chol = np.linalg.cholesky(self.Lam)
        except np.linalg.LinAlgError as exc:
            raise InvariantError("decomposed design matrix invertible", -1) from exc
        self.version += 1

    def in_span(self, phi):
        r = phi - self.basis @ (self.basis.T @ phi)
        return float(np.linalg.norm(r)) <= SPAN_TOL * max(float(np.linalg.norm(phi)), 1.0)

    def add_direction(self, phi):
        r = phi - self.basis @ (self.basis.T @ phi)
        r = r - self.basis @ (self.basis.T @ r)
        self.basis = np.hstack([self.basis, (r / np.linalg.norm(r))[:, None]])
        self._refresh()

    def record(self, key, phi, reward, next_state):
        self.Sigma += np.outer(phi, phi)
        self.Sigma_hat += np.outer(phi, phi)
        g = self._groups.get(key)
        if g is not None:
            self._counts[g] += 1.0
            self._rsum[g] += float(reward)
            return
        n = self._groups[key] = self._n
        if n == self._F.shape[0]:
            self._F = np.vstack([self._F, np.zeros_like(self._F)])
            self._counts = np.concatenate([self._counts, np.zeros_like(self._counts)])
            self._rsum = np.concatenate([self._rsum, np.zeros_like(self._rsum)])
        self._F[n] = phi
        self._counts[n] = 1.0
        self._rsum[n] = float(reward)
        if isinstance(next_state, np.ndarray):
            if self._next_arr is None:
                self._next_arr = np.zeros((self._F.shape[0],) + next_state.shape)
            elif self._next_arr.shape[0] <= n:
                self._next_arr = np.concatenate([self._next_arr, np.zeros_like(self._next_arr)])
            self._next_arr[n] = next_state
        else:
            self._next.append(next_state)
        self._n += 1
        # pinv(F) is only useful while the distinct rows stay independent
        self._pinv = None

    def arrays(self):
        """(features, counts, reward sums, next states, interpolator) over
        distinct (s, a). The interpolator ``pinv(F)`` is set when the rows are
        linearly independent: then every weighting has the same minimizer."""
        n = self._n
        F = self._F[:n]
        nxt = self._next_arr[:n] if self._next_arr is not None else self._next
        if self._pinv is None and 0 < n <= self.d:
            sv = np.linalg.svd(F, compute_uv=False)
            if sv[-1] > 1e-8 * sv[0]:
                self._pinv = np.linalg.pinv(F)
        return [F, self._counts[:n], self._rsum[:n], nxt, self._pinv]

    def value_noise(self, g):
        """``sigma (I - P) z`` with ``z ~ N(0, Lambda^{-1})`` built from ``g ~ N(0, I)``."""
        if self.sigma == 0.0 or self.rank == self.d:
            return np.zeros(self.d)
        z = solve_triangular(self.Lam_chol, g, lower=True, trans="T", check_finite=False)
        return self.sigma * (z - self.basis @ (self.basis.T @ z))


class Agent:
    def __init__(self, env, schedule, design, config=None, seed=0):
        self.env = env
        self.H, self.d = env.H, env.d
        self.schedule = schedule
        self.design = design
        self.config = config or AgentConfig()
        if design.d != self.d:
            raise ValueError(f"design dimension {design.d} does not match env dimension {self.d}")
        if schedule.H != self.H or schedule.d != self.d:
            raise ValueError("schedule was computed for a different (d, H)")
        noisy = self.config.policy == "nsrlsvi"
        Lam = design.matrix()
        self.layers = [HorizonState(Lam, schedule.width_at(k), schedule.sigma_at(k) if noisy else 0.0)
                       for k in range(self.H)]
        self.sigma_R = schedule.sigma_R if noisy else 0.0
        self.linopt = LinOpt.from_env(env)
        self.rng_noise = stream(seed, "agent-noise")
        self.rng_walk = stream(seed, "walk")
        self.span_failures = 0
        self._t = 0
        self._vstar = {}
        self._fallback = False
        self._noise = [np.zeros(self.d)] * self.H

    # -- regression ------------------------------------------------------
    def _regress(self, F, y, w, W, reward, pinv=None):
        if F.shape[0] == 0:
            return np.zeros(self.d), 0.0
        cfg = self.config
        if cfg.oracle == "exact":
            if pinv is not None:
                theta = pinv @ y
            else:
                sw = np.sqrt(w)
                theta = np.linalg.lstsq(F * sw[:, None], y * sw, rcond=None)[0]
            if not self.linopt.contains(theta, W):
                out = exact_lsq(RegressionProblem(F, y, W, w), self.linopt)
                theta = out.theta
                self._fallback = True
        else:
            problem = RegressionProblem(F, y, W, w)
            oracle = apx_reward_oracle if reward else apx_value_oracle
            theta = oracle(problem, cfg.oracle_eps, cfg.oracle_delta, self.linopt, self.rng_walk,
                           cfg.walk).theta
        res = F @ theta - y
        return theta, float(w @ (res * res))

    def plan_round(self):
        """Fit and perturb every layer, last to first; returns the per-layer
        parameters ``omega_bar + theta_bar`` and the residuals."""
        H, env, cfg = self.H, self.env, self.config
        params = [None] * H
        residual = 0.0
        self._fallback = False
        for k in reversed(range(H)):
            L = self.layers[k]
            F, counts, rsum, nxt, pinv = L.arrays()
            try:
                if k == H - 1 or F.shape[0] == 0:
                    y = np.zeros(F.shape[0])
                else:
                    y = env.values(k + 1, nxt, params[k + 1])
                L.theta_hat, res_v = self._regress(F, y, counts, L.W, False, pinv)
                if cfg.known_reward:
                    L.omega_hat = np.asarray(env.reward_param(k), dtype=float)
                    res_r = 0.0
                else:
                    rbar = rsum / counts if counts.size else rsum
                    L.omega_hat, res_r = self._regress(F, rbar, counts, 1.0, True, pinv)
            except (OracleFailure, np.linalg.LinAlgError) as exc:
                raise AgentError(self._t, k + 1, exc) from exc
            xi = L.value_noise(self.rng_noise.standard_normal(self.d))
            self._noise[k] = xi
            L.theta_bar = L.theta_hat + xi
            L.Sigma_chol = np.linalg.cholesky(L.Sigma)
            if cfg.known_reward:
                L.omega_bar = L.omega_hat
            else:
                g = self.rng_noise.standard_normal(self.d)
                if self.sigma_R:
                    zeta = solve_triangular(L.Sigma_chol, g, lower=True, trans="T", check_finite=False)
                    L.omega_bar = L.omega_hat + self.sigma_R * zeta
                else:
                    L.omega_bar = L.omega_hat
            params[k] = L.omega_bar + L.theta_bar
            residual = max(residual, res_v, res_r)
        return params, residual

    # -- acting ----------------------------------------------------------
    def optimal_value(self, s):
        key = _key(s)
        if key not in self._vstar:
            self._vstar[key] = float(self.env.optimal_value(s))
        return self._vstar[key]

    def run_round(self, t, s1, rng_reward):
        self._t = t
        start = time.perf_counter()
        env, H, cfg = self.env, self.H, self.config
        if cfg.policy == "random":
            params, residual = None, 0.0
            for L in self.layers:
                L.Sigma_chol = np.linalg.cholesky(L.Sigma)
        else:
            params, residual = self.plan_round()

        s, traj, feats = s1, [], []
        v_pi, v_bar, flagged = 0.0, float("nan"), False
        for k in range(H):
            if params is None:
                a = env.random_action(k, s, self.rng_noise)
                phi = np.asarray(env.feature(k, s, a), dtype=float)
            else:
                ch = env.greedy(k, s, params[k])
                a, phi = ch.action, np.asarray(ch.feature, dtype=float)
                flagged |= ch.flagged
                if k == 0:
                    v_bar = ch.value
            v_pi += env.mean_reward(k, s, a)
            nxt, r = step(env, k, s, a, rng_reward, cfg.reward_noise)
            traj.append((s, a, r))
            feats.append(phi)
            s = nxt

        span_event = True
        lev, ratio, confine = [], [], 0.0
        for k, L in enumerate(self.layers):
            phi = feats[k]
            z = solve_triangular(L.Sigma_chol, phi, lower=True, check_finite=False)
            lev.append(float(z @ z))
            xi = self._noise[k]
            if L.rank:
                confine = max(confine, float(np.linalg.norm(L.basis.T @ xi)))
            bound = self.schedule.log_P * L.sigma
            ratio.append(float(np.sqrt(max(xi @ L.Lam @ xi, 0.0))) / bound if bound > 0 else 0.0)
            s_k, a_k, r_k = traj[k]
            inside = L.in_span(phi)
            span_event &= inside
            L.record((env.state_key(s_k), _key(a_k)), phi, r_k, traj[k + 1][0] if k + 1 < H else None)
            if not inside:
                L.add_direction(phi)
        if not span_event:
            self.span_failures += 1
            if self.span_failures > self.d * H:
                raise InvariantError("span-event budget d*H", t,
                                     f"{self.span_failures} failures > {self.d * H}")

        v_star = self.optimal_value(s1)
        slack = self.schedule.optimism_slack
        optimistic = bool(v_star <= v_bar + slack + 1e-12 * max(1.0, abs(v_star)))
        return EpisodeLog(t, s1, traj, span_event, v_star - v_pi, v_star, v_pi, v_bar, optimistic,
                          residual, tuple(lev), confine, tuple(ratio), self._fallback, flagged,
                          1000.0 * (time.perf_counter() - start))


def act_greedy(env, h, state, param):
    """Greedy action under ``<param, phi_h(state, a)>``; lowest index wins ties."""
    return env.greedy(h, state, param).action


def default_schedule(env, T, design, scale_override=1.0, eps1=0.0, eps2=0.0, eps_B=None, gamma=None):
    if gamma is None:
        gamma = env.gamma if env.gamma is not None else 1.0
    return compute_schedule(env.d, env.H, design.m, T, gamma=gamma, eps1=eps1, eps2=eps2,
                            eps_B=env.eps_b if eps_B is None else eps_B, scale_override=scale_override)


def run_experiment(env, T, schedule=None, config=None, seed=0, design=None, callback=None):
    """Run ``T`` rounds and return one :class:`EpisodeLog` per round."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    if design is None:
        design = frank_wolfe_design(env.feature_set())
    if schedule is None:
        schedule = default_schedule(env, T, design)
    agent = Agent(env, schedule, design, config, seed)
    rng_init = stream(seed, "env-init")
    rng_reward = stream(seed, "env-reward")
    logs = []
    for t in range(1, T + 1):
        log = agent.run_round(t, env.sample_initial(rng_init), rng_reward)
        logs.append(log)
        if callback is not None:
            callback(log)
    return logs
