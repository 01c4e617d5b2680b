"""Layered tabular MDPs with one-hot features."""

import numpy as np

from .base import EnvError, LayeredEnv


class TabularEnv(LayeredEnv):
    """Deterministic layered MDP; ``phi_h(s, a) = e_{index[h][s, a]}``.

    ``rewards`` are the linear part ``<omega*_h, phi>``; ``perturbation`` (same
    shapes, entries in ``[-eps_b, eps_b]``) is added to give the true mean.
    """

    kind = "tabular"

    def __init__(self, num_actions, transitions, rewards, feature_index, d=None,
                 initial=None, reward_noise="bernoulli", perturbation=None, eps_b=0.0):
        self.A = int(num_actions)
        self.rewards = [np.asarray(r, dtype=float).reshape(-1, self.A) for r in rewards]
        self.H = len(self.rewards)
        self.num_states = [r.shape[0] for r in self.rewards]
        self.transitions = [np.asarray(t, dtype=int).reshape(-1, self.A) for t in transitions]
        self.index = [np.asarray(ix, dtype=int).reshape(-1, self.A) for ix in feature_index]
        self.d = int(d if d is not None else 1 + max(int(ix.max()) for ix in self.index))
        self.initial = list(range(self.num_states[0])) if initial is None else [int(s) for s in initial]
        self.reward_noise = reward_noise
        self.eps_b = float(eps_b)
        if perturbation is None:
            perturbation = [np.zeros_like(r) for r in self.rewards]
        self.perturbation = [np.asarray(p, dtype=float).reshape(-1, self.A) for p in perturbation]
        self._validate()
        self._eye = np.eye(self.d)
        self._omega = []
        for h in range(self.H):
            w = np.zeros(self.d)
            w[self.index[h].ravel()] = self.rewards[h].ravel()
            self._omega.append(w)
        self._vstar = self._solve_dp()

    def _validate(self):
        if self.H < 1 or self.A < 1:
            raise EnvError("need H >= 1 and at least one action")
        if len(self.transitions) < self.H - 1:
            raise EnvError(f"need {self.H - 1} transition tables, got {len(self.transitions)}")
        if len(self.index) != self.H or len(self.perturbation) != self.H:
            raise EnvError("feature_index and perturbation need one table per layer")
        for h in range(self.H):
            S = self.num_states[h]
            if self.index[h].shape != (S, self.A) or self.perturbation[h].shape != (S, self.A):
                raise EnvError(f"layer {h}: table shapes disagree with rewards {(S, self.A)}")
            flat = self.index[h].ravel()
            if flat.min() < 0 or flat.max() >= self.d:
                raise EnvError(f"layer {h}: feature index outside [0, {self.d})")
            if len(set(flat.tolist())) != flat.size:
                raise EnvError(f"layer {h}: feature indices must be unique within a layer")
            mean = self.rewards[h] + self.perturbation[h]
            if np.any(mean < -1e-12) or np.any(mean > 1 + 1e-12):
                raise EnvError(f"layer {h}: mean rewards must lie in [0,1], "
                               f"got range [{mean.min():.4g}, {mean.max():.4g}]")
            if np.any(np.abs(self.perturbation[h]) > self.eps_b + 1e-12):
                raise EnvError(f"layer {h}: reward perturbation exceeds eps_b = {self.eps_b}")
            if h + 1 < self.H:
                t = self.transitions[h]
                if t.shape != (S, self.A) or t.min() < 0 or t.max() >= self.num_states[h + 1]:
                    raise EnvError(f"layer {h}: transition table invalid")
        for s in self.initial:
            if not 0 <= s < self.num_states[0]:
                raise EnvError(f"initial state {s} out of range")
        if self.reward_noise not in ("bernoulli", "none"):
            raise EnvError(f"unknown reward noise model {self.reward_noise!r}")

    def _check(self, h, s, a):
        if not (0 <= h < self.H and 0 <= s < self.num_states[h] and 0 <= a < self.A):
            raise EnvError(f"invalid (h, s, a) = ({h}, {s}, {a})")

    def _solve_dp(self):
        V = [None] * (self.H + 1)
        V[self.H] = None
        for h in reversed(range(self.H)):
            Q = self.rewards[h] + self.perturbation[h]
            if h + 1 < self.H:
                Q = Q + V[h + 1][self.transitions[h]]
            V[h] = Q.max(axis=1)
        return V

    # -- interface -------------------------------------------------------
    def initial_states(self):
        return self.initial

    def actions(self, h, s):
        return range(self.A)

    def feature(self, h, s, a):
        self._check(h, s, a)
        return self._eye[self.index[h][s, a]]

    def action_features(self, h, s):
        return self._eye[self.index[h][s]]

    def values(self, h, states, param):
        idx = self.index[h][np.asarray(states, dtype=int)]
        return np.asarray(param, dtype=float)[idx].max(axis=1)

    def next_state(self, h, s, a):
        self._check(h, s, a)
        if h + 1 >= self.H:
            raise EnvError("no transition out of the last layer")
        return int(self.transitions[h][s, a])

    def mean_reward(self, h, s, a):
        self._check(h, s, a)
        return float(self.rewards[h][s, a] + self.perturbation[h][s, a])

    def reward_param(self, h):
        return self._omega[h]

    def feature_set(self):
        if not hasattr(self, "_features"):
            used = sorted({int(i) for ix in self.index for i in ix.ravel()})
            self._features = self._eye[used]
        return self._features

    def backup(self, h, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(self.d)
        nxt = self.transitions[h]
        vals = theta[self.index[h + 1]].max(axis=1)
        out[self.index[h].ravel()] = vals[nxt].ravel()
        return out

    def probe_pairs(self, h, rng, n):
        return [(s, a) for s in range(self.num_states[h]) for a in range(self.A)]

    def optimal_value(self, s, h=0):
        return float(self._vstar[h][s])

    def optimal_action(self, h, s):
        Q = self.rewards[h][s] + self.perturbation[h][s]
        if h + 1 < self.H:
            Q = Q + self._vstar[h + 1][self.transitions[h][s]]
        return int(np.argmax(Q))

    @property
    def gamma(self):
        return 1.0

    def describe(self):
        return {"kind": self.kind, "d": self.d, "H": self.H, "A": self.A,
                "states_per_layer": list(self.num_states)}

    def to_dict(self):
        return {
            "kind": "tabular",
            "num_actions": self.A,
            "d": self.d,
            "transitions": [t.tolist() for t in self.transitions[: self.H - 1]],
            "rewards": [r.tolist() for r in self.rewards],
            "feature_index": [ix.tolist() for ix in self.index],
            "perturbation": [p.tolist() for p in self.perturbation],
            "eps_b": self.eps_b,
            "initial": list(self.initial),
            "reward_noise": self.reward_noise,
        }


def build_tabular(num_states_per_layer, num_actions, seed, H=2, initial=None,
                  reward_noise="bernoulli", eps_b=0.0):
    """Random layered MDP with ``d = S * A`` one-hot features shared across layers."""
    if num_states_per_layer < 1 or num_actions < 1:
        raise EnvError("need at least one state per layer and one action")
    S, A = int(num_states_per_layer), int(num_actions)
    rng = np.random.default_rng(seed)
    transitions = [rng.integers(S, size=(S, A)) for _ in range(H - 1)]
    index = [np.arange(S * A).reshape(S, A) for _ in range(H)]
    if eps_b > 0:
        rewards = [rng.uniform(eps_b, 1.0 - eps_b, size=(S, A)) for _ in range(H)]
        perturbation = [rng.choice([-eps_b, eps_b], size=(S, A)) for _ in range(H)]
    else:
        rewards = [rng.uniform(0.0, 1.0, size=(S, A)) for _ in range(H)]
        perturbation = None
    return TabularEnv(A, transitions, rewards, index, d=S * A, initial=initial,
                      reward_noise=reward_noise, perturbation=perturbation, eps_b=eps_b)


def build_expansive(num_first_layer):
    """Two-layer chain: S first-layer states all lead to one state paying 1.

    Features are ``e_i`` for first-layer state i and ``e_S`` for the second
    layer, so d = S + 1.
    """
    S = int(num_first_layer)
    transitions = [np.zeros((S, 1), dtype=int)]
    rewards = [np.zeros((S, 1)), np.ones((1, 1))]
    index = [np.arange(S).reshape(S, 1), np.array([[S]])]
    return TabularEnv(1, transitions, rewards, index, d=S + 1, reward_noise="none")


def build_hidden_reward(H=3, lure=0.3, prize=1.0, reward_noise="bernoulli"):
    """Two states, two actions; action 0 in state 0 pays ``lure`` and stays put,
    action 1 moves (for free) to state 1 where every action pays ``prize``.

    A zero-noise greedy learner breaks the initial all-zero tie toward action
    0, learns the lure, and never tries action 1 again.
    """
    transitions = [np.array([[0, 1], [1, 1]]) for _ in range(H - 1)]
    rewards = [np.array([[lure, 0.0], [prize, prize]]) for _ in range(H)]
    index = [np.arange(4).reshape(2, 2) for _ in range(H)]
    return TabularEnv(2, transitions, rewards, index, d=4, initial=[0], reward_noise=reward_noise)
