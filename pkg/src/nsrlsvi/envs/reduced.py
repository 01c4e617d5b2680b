"""Re-coordinatize an environment on the span of its features.

When the feature set spans only an r-dimensional subspace with orthonormal
basis ``U`` (d x r), the wrapper exposes ``U^T phi``. Inner products are
preserved for every feature in the span, so rewards stay linear and the
backup becomes ``U^T T(U theta)``.
"""

import numpy as np

from ..features import span_basis
from .base import GreedyChoice, LayeredEnv


class ReducedEnv(LayeredEnv):
    def __init__(self, base, basis):
        self.base = base
        self.U = np.asarray(basis, dtype=float)
        self.d = self.U.shape[1]
        self.H = base.H
        self.kind = base.kind
        self.finite_actions = base.finite_actions
        self.eps_b = base.eps_b
        self.reward_noise = base.reward_noise
        self.finite_features = base.finite_features

    def lift(self, theta):
        return self.U @ theta

    def initial_states(self):
        return self.base.initial_states()

    def sample_initial(self, rng):
        return self.base.sample_initial(rng)

    def state_key(self, s):
        return self.base.state_key(s)

    def feature(self, h, s, a):
        return self.U.T @ self.base.feature(h, s, a)

    def action_features(self, h, s):
        return self.base.action_features(h, s) @ self.U

    def actions(self, h, s):
        return self.base.actions(h, s)

    def greedy(self, h, s, param):
        ch = self.base.greedy(h, s, self.U @ param)
        return GreedyChoice(ch.action, ch.value, self.U.T @ ch.feature, ch.flagged)

    def random_action(self, h, s, rng):
        return self.base.random_action(h, s, rng)

    def values(self, h, states, param):
        return self.base.values(h, states, self.U @ param)

    def next_state(self, h, s, a):
        return self.base.next_state(h, s, a)

    def mean_reward(self, h, s, a):
        return self.base.mean_reward(h, s, a)

    def reward_param(self, h):
        return self.U.T @ self.base.reward_param(h)

    def feature_set(self):
        return self.base.feature_set() @ self.U

    def linopt(self, theta):
        return self.U.T @ self.base.linopt(self.U @ theta)

    def backup(self, h, theta):
        return self.U.T @ self.base.backup(h, self.U @ theta)

    def backup_layers(self):
        return self.base.backup_layers()

    def successor_value(self, h, s, a, theta):
        return self.base.successor_value(h, s, a, self.U @ theta)

    def probe_pairs(self, h, rng, n):
        return self.base.probe_pairs(h, rng, n)

    def optimal_value(self, s, h=0):
        return self.base.optimal_value(s, h)

    @property
    def gamma(self):
        return self.base.gamma

    def describe(self):
        out = dict(self.base.describe())
        out.update({"d_ambient": self.base.d, "d": self.d})
        return out


def reduce_to_span(env):
    """Wrap ``env`` in a ReducedEnv if its feature set is rank deficient."""
    U = span_basis(env.feature_set())
    if U.shape[1] == env.d:
        return env
    return ReducedEnv(env, U)
