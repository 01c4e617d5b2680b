"""Empirical checks of linear Bellman completeness and Assumption-style constants."""

from dataclasses import dataclass, field
import itertools
from math import comb

import numpy as np

from ..features import numerical_rank


@dataclass
class LBCReport:
    backup_residual: float
    reward_residual: float
    eps_b: float
    num_probes: int
    pairs_checked: int
    per_layer: dict = field(default_factory=dict)

    @property
    def max_violation(self):
        return max(self.backup_residual, self.reward_residual)

    @property
    def bound(self):
        return self.eps_b + 1e-7

    @property
    def is_lbc(self):
        return self.max_violation <= self.bound

    def lines(self):
        verdict = "LBC" if self.is_lbc else "NOT LBC"
        return [
            f"verdict: {verdict} (max violation {self.max_violation:.3e}, bound {self.bound:.3e})",
            f"backup residual: {self.backup_residual:.3e}",
            f"reward residual: {self.reward_residual:.3e}",
            f"probes: {self.num_probes} parameters x {self.pairs_checked} (s,a) pairs",
        ]


def _probe_theta(env, rng):
    base = getattr(env, "base", env)
    if hasattr(base, "random_probe_theta"):
        theta = base.random_probe_theta(rng)
        return env.U.T @ theta if base is not env else theta
    return rng.normal(size=env.d)


def verify_lbc(env, num_probes=100, seed=0, pairs_per_layer=10):
    """Max over random parameters and probed pairs of
    ``|<T theta, phi(s,a)> - max_a' <theta, phi(s', a')>|``, plus the reward
    linearity residual ``|r(s,a) - <omega*, phi(s,a)>|``."""
    rng = np.random.default_rng(seed)
    backup_res = 0.0
    reward_res = 0.0
    pairs = 0
    per_layer = {}
    layers = list(env.backup_layers())
    probes = {h: env.probe_pairs(h, rng, pairs_per_layer) for h in range(env.H)}
    for h in range(env.H):
        omega = env.reward_param(h)
        for s, a in probes[h]:
            reward_res = max(reward_res, abs(env.mean_reward(h, s, a) - env.feature(h, s, a) @ omega))
    for _ in range(num_probes):
        theta = _probe_theta(env, rng)
        for h in layers:
            T_theta = env.backup(h, theta)
            worst = per_layer.get(h, 0.0)
            for s, a in probes[h]:
                lhs = float(T_theta @ env.feature(h, s, a))
                rhs = env.successor_value(h, s, a, theta)
                worst = max(worst, abs(lhs - rhs))
                pairs += 1
            per_layer[h] = worst
            backup_res = max(backup_res, worst)
    return LBCReport(backup_res, reward_res, env.eps_b, num_probes,
                     pairs // max(num_probes, 1), per_layer)


def estimate_gamma(features, max_subsets=20000):
    """Smallest gamma with every nonzero eigenvalue of every <= d-subset Gram >= 1/gamma^2.

    Returns None when the enumeration would exceed ``max_subsets``.
    """
    F = np.asarray(features, dtype=float)
    n, d = F.shape
    total = sum(comb(n, r) for r in range(1, min(d, n) + 1))
    if total > max_subsets:
        return None
    low = np.inf
    for r in range(1, min(d, n) + 1):
        for idx in itertools.combinations(range(n), r):
            G = F[list(idx)]
            w = np.linalg.eigvalsh(G.T @ G)
            nz = w[w > 1e-12 * max(w[-1], 1e-300)]
            if nz.size:
                low = min(low, float(nz[0]))
    return float(1.0 / np.sqrt(low))


def feature_rank(env):
    return numerical_rank(env.feature_set())
