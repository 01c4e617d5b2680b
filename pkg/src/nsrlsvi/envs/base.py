"""Shared environment interface.

Layers are indexed ``h = 0 .. H-1``. Transitions are deterministic; rewards are
stochastic with mean ``<omega*_h, phi_h(s, a)>`` (up to ``eps_b``).
"""

from dataclasses import dataclass

import numpy as np


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class GreedyChoice:
    action: object
    value: float
    feature: np.ndarray
    flagged: bool = False  # argmax fell back to a grid or was unbounded


class LayeredEnv:
    """Base class; subclasses fill in the abstract hooks.

    ``finite_actions`` envs implement ``action_features``; the greedy argmax
    then takes the lowest-index maximizer.
    """

    kind = "abstract"
    finite_actions = True
    d: int
    H: int
    eps_b = 0.0
    reward_noise = "bernoulli"
    finite_features = True  # feature_set() lists every feature

    # -- structure -------------------------------------------------------
    def initial_states(self):
        raise NotImplementedError

    def sample_initial(self, rng):
        states = self.initial_states()
        return states[int(rng.integers(len(states)))]

    def feature(self, h, s, a):
        raise NotImplementedError

    def action_features(self, h, s):
        raise NotImplementedError

    def actions(self, h, s):
        raise NotImplementedError

    def next_state(self, h, s, a):
        raise NotImplementedError

    def random_action(self, h, s, rng):
        acts = self.actions(h, s)
        return acts[int(rng.integers(len(acts)))]

    def mean_reward(self, h, s, a):
        raise NotImplementedError

    def reward_param(self, h):
        raise NotImplementedError

    def feature_set(self):
        """Finite representative feature set (rows), used for designs and LinOpt."""
        raise NotImplementedError

    def backup(self, h, theta):
        """Exact Bellman backup ``T_h theta`` of a layer-(h+1) parameter."""
        raise NotImplementedError

    def probe_pairs(self, h, rng, n):
        raise NotImplementedError

    def optimal_value(self, s):
        """Ground-truth V*_1(s)."""
        raise NotImplementedError

    def state_key(self, s):
        return s

    @property
    def gamma(self):
        return None

    # -- derived ---------------------------------------------------------
    def greedy(self, h, s, param):
        F = self.action_features(h, s)
        q = F @ param
        k = int(np.argmax(q))
        return GreedyChoice(self.actions(h, s)[k], float(q[k]), F[k])

    def values(self, h, states, param):
        """``max_a <param, phi_h(s, a)>`` for each state in ``states``."""
        return np.array([self.greedy(h, s, param).value for s in states], dtype=float)

    def backup_layers(self):
        """Layers ``h`` at which ``backup(h, .)`` is defined."""
        return range(self.H - 1)

    def successor_value(self, h, s, a, theta):
        """``max_a' <theta, phi_{h+1}(s', a')>`` for ``s' = next_state(h, s, a)``."""
        return self.greedy(h + 1, self.next_state(h, s, a), theta).value

    def linopt(self, theta):
        F = self.feature_set()
        return F[int(np.argmax(F @ theta))]

    def policy_value(self, s, policy):
        """Sum of mean rewards along the deterministic rollout of ``policy(h, s)``."""
        total = 0.0
        for h in range(self.H):
            a = policy(h, s)
            total += self.mean_reward(h, s, a)
            if h + 1 < self.H:
                s = self.next_state(h, s, a)
        return total

    def describe(self):
        return {"kind": self.kind, "d": self.d, "H": self.H}


def step(env, h, state, action, rng, noise=None):
    """One transition: ``(next_state, reward_sample)``.

    ``next_state`` is None after the last layer. Reward noise is Bernoulli with
    the clipped mean unless the env (or ``noise``) says ``"none"``.
    """
    mean = env.mean_reward(h, state, action)
    mode = noise or env.reward_noise
    if mode == "none":
        reward = float(mean)
    elif mode == "bernoulli":
        p = min(max(mean, 0.0), 1.0)
        reward = float(rng.random() < p)
    else:
        raise EnvError(f"unknown reward noise model {mode!r}")
    nxt = env.next_state(h, state, action) if h + 1 < env.H else None
    return nxt, reward
