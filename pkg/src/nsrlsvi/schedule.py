"""Noise scales and constraint widths for the randomized value iteration.

Layers are numbered ``1..H`` here, matching the recursion
``W_{h-1} = W_h + 2 eps2 + sqrt(2d) (B_noise^P(h) + B_noise^R) + 1`` started
from ``W_{H+1} = W_H = 1``.
"""

from dataclasses import dataclass
import math

import numpy as np


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    d: int
    H: int
    m: int
    T: int
    gamma: float
    eps1: float
    eps2: float
    eps_B: float
    scale_override: float
    B_err_P: float
    B_err_R: float
    sigma_R_theory: float
    sigma_theory: tuple  # layers 1..H
    W: tuple  # W_0 .. W_{H+1}

    @property
    def sigma_R(self):
        return self.scale_override * self.sigma_R_theory

    @property
    def sigma(self):
        return tuple(self.scale_override * s for s in self.sigma_theory)

    def sigma_at(self, k):
        """Value-noise scale for 0-based layer ``k``."""
        return self.scale_override * self.sigma_theory[k]

    def width_at(self, k):
        """Constraint width ``W_h`` for 0-based layer ``k`` (``h = k + 1``)."""
        return self.W[k + 1]

    @property
    def log_P(self):
        return math.sqrt(2 * self.d * math.log(6 * self.d * self.H ** 2 * max(self.T, 1) ** 2))

    @property
    def log_R(self):
        return math.sqrt(2 * self.d * math.log(6 * self.d * self.H * max(self.T, 1) ** 2))

    def B_noise_P(self, k):
        return self.sigma_at(k) * self.log_P

    @property
    def B_noise_R(self):
        return self.sigma_R * self.log_R

    @property
    def optimism_slack(self):
        return self.B_err_P * self.gamma * self.H

    def lines(self):
        out = [f"d = {self.d}", f"H = {self.H}", f"m = {self.m}", f"T = {self.T}",
               f"gamma = {self.gamma!r}", f"eps1 = {self.eps1!r}", f"eps2 = {self.eps2!r}",
               f"eps_B = {self.eps_B!r}", f"scale_override = {self.scale_override!r}",
               f"B_err_P = {self.B_err_P!r}", f"B_err_R = {self.B_err_R!r}",
               f"sigma_R = {self.sigma_R!r}"]
        out += [f"sigma_{k + 1} = {s!r}" for k, s in enumerate(self.sigma)]
        out += [f"W_{h} = {w!r}" for h, w in enumerate(self.W)]
        return out


def compute_schedule(d, H, m, T, gamma=1.0, eps1=0.0, eps2=0.0, eps_B=0.0, scale_override=1.0):
    if d < 1 or H < 1 or m < 1:
        raise ScheduleError("d, H and m must be positive")
    if T < 0:
        raise ScheduleError("T must be nonnegative")
    if gamma < 1:
        raise ScheduleError(f"gamma must be at least 1, got {gamma}")
    if min(eps1, eps2, eps_B) < 0 or scale_override < 0:
        raise ScheduleError("tolerances and scale_override must be nonnegative")
    Tl = max(int(T), 1)
    B_err_P = math.sqrt(2 * eps1 ** 2 + 4 * Tl * eps_B ** 2)
    B_err_R = math.sqrt(1030 * (1 + eps2) ** 4 * d * math.log(24 * (1 + eps2) * math.e ** 2 * Tl ** 3 * H ** 2)
                        + 4 * eps1 ** 2 + 16 * (1 + eps2) * (1 + eps_B * Tl))
    sigma_R = math.sqrt(H) * B_err_R
    log_P = math.sqrt(2 * d * math.log(6 * d * H ** 2 * Tl ** 2))
    log_R = math.sqrt(2 * d * math.log(6 * d * H * Tl ** 2))
    B_noise_R = sigma_R * log_R

    W = [0.0] * (H + 2)
    W[H + 1] = W[H] = 1.0
    sigma = [0.0] * H
    with np.errstate(over="raise"):
        for h in range(H, 0, -1):
            s = math.sqrt(H) * (math.sqrt(3) * gamma * B_err_P + math.sqrt(8 * m) * (W[h] + eps2))
            sigma[h - 1] = s
            W[h - 1] = W[h] + 2 * eps2 + math.sqrt(2 * d) * (s * log_P + B_noise_R) + 1
            if not (math.isfinite(W[h - 1]) and math.isfinite(s)):
                raise ScheduleError(f"schedule overflows at layer {h} (H = {H}); use a smaller H")
    return NoiseSchedule(d, H, m, int(T), float(gamma), float(eps1), float(eps2), float(eps_B),
                         float(scale_override), B_err_P, B_err_R, sigma_R, tuple(sigma), tuple(W))
