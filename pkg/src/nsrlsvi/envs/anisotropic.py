"""Two-state, one-action MDP whose backup amplifies l2 norms by 1/eps."""

import numpy as np

from .base import EnvError, LayeredEnv


class AnisotropicEnv(LayeredEnv):
    """H = 1; s1 -> s2 deterministically with ``phi(s1) = (eps, 0)`` and
    ``phi(s2) = (1, 0)``. State 0 is s1, state 1 is s2 (reached only as the
    successor of the single decision step).
    """

    kind = "anisotropic"

    def __init__(self, eps_scale, reward_weight=0.5, reward_noise="bernoulli"):
        if not 0 < eps_scale <= 1:
            raise EnvError("eps_scale must lie in (0, 1]")
        self.eps = float(eps_scale)
        self.d = 2
        self.H = 1
        self.reward_noise = reward_noise
        self._phi = np.array([[self.eps, 0.0], [1.0, 0.0]])
        self._omega = np.array([float(reward_weight), 0.0])
        if not 0 <= reward_weight <= 1:
            raise EnvError("reward_weight must lie in [0, 1] so rewards stay in [0,1]")

    def initial_states(self):
        return [0]

    def actions(self, h, s):
        return range(1)

    def _check(self, h, s, a):
        if h != 0 or s not in (0, 1) or a != 0:
            raise EnvError(f"invalid (h, s, a) = ({h}, {s}, {a})")

    def feature(self, h, s, a):
        self._check(h, s, a)
        return self._phi[s]

    def action_features(self, h, s):
        return self._phi[s : s + 1]

    def next_state(self, h, s, a):
        self._check(h, s, a)
        if s != 0:
            raise EnvError("s2 has no successor")
        return 1

    def mean_reward(self, h, s, a):
        self._check(h, s, a)
        return float(self._phi[s] @ self._omega)

    def reward_param(self, h):
        return self._omega

    def feature_set(self):
        return self._phi.copy()

    def backup(self, h, theta):
        """``T theta = (a / eps, 0)`` for ``theta = (a, b)``."""
        theta = np.asarray(theta, dtype=float)
        return np.array([theta[0] / self.eps, 0.0])

    def backup_layers(self):
        return [0]

    def successor_value(self, h, s, a, theta):
        return float(self._phi[self.next_state(h, s, a)] @ theta)

    def probe_pairs(self, h, rng, n):
        return [(0, 0)]

    def optimal_value(self, s, h=0):
        return self.mean_reward(0, s, 0)

    @property
    def gamma(self):
        # nonzero eigenvalues of sums of <= 2 features are eps^2, 1, 1 + eps^2
        return 1.0 / self.eps

    def to_dict(self):
        return {"kind": "anisotropic", "eps_scale": self.eps,
                "reward_weight": float(self._omega[0]), "reward_noise": self.reward_noise}
