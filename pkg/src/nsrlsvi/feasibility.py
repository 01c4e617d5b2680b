"""Convex feasibility from a separation oracle, by approximate-centroid cuts.

The search region starts as the cube ``[-R, R]^d``. Each iteration estimates
the centroid of the current region from uniform samples, asks the oracle
about it, and keeps the halfspace through the centroid that contains the
feasible set. Samples are regenerated with a ball walk whose proposal shape
follows the sample covariance, so thin regions do not stall the walk.
"""

from dataclasses import dataclass, field
import math

import numpy as np

INSIDE = None
MIN_STEPS = 32  # low dimensions need more than c3 * d^2 moves to forget the warm start


class FeasibilityError(RuntimeError):
    pass


class SeparationContractError(FeasibilityError):
    """The oracle returned a hyperplane that does not exclude the query point."""


class SamplerStallError(FeasibilityError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class WarmStartError(FeasibilityError):
    pass


@dataclass
class ConvexProblem:
    """``oracle(z)`` returns ``INSIDE`` (None) or a pair ``(a, b)`` with
    ``<a, z> > b`` and ``<a, x> <= b`` for every feasible ``x``."""

    dim: int
    oracle: object
    r: float
    R: float
    delta: float = 0.1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if not 0 < self.r <= self.R:
            raise ValueError(f"need 0 < r <= R, got r={self.r}, R={self.R}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class WalkConfig:
    """Sampler and cutting-loop constants. ``None`` fields resolve from ``d``,
    ``delta`` and ``(r, R)`` in :meth:`resolve`."""

    eta: float = None
    c3: float = 4.0
    c_N: float = 4.0
    num_samples: int = None
    inner_steps: int = None
    max_cuts: int = None
    tight_cuts: bool = False
    adapt: bool = True
    stall_limit: int = 10_000

    def resolve(self, problem):
        d = problem.dim
        out = WalkConfig(**self.__dict__)
        if out.eta is None:
            out.eta = 0.5 / math.sqrt(d)
        if out.num_samples is None:
            out.num_samples = max(1, math.ceil(self.c_N * d * math.log(1.0 / problem.delta)))
        if out.inner_steps is None:
            out.inner_steps = max(MIN_STEPS, math.ceil(self.c3 * d * d))
        if out.max_cuts is None:
            out.max_cuts = max(1, math.floor(2 * d * math.log(problem.R / (problem.delta * problem.r))))
        for name in ("eta", "num_samples", "inner_steps", "max_cuts", "stall_limit"):
            if getattr(out, name) <= 0:
                raise ValueError(f"WalkConfig.{name} must be positive")
        return out


@dataclass
class FeasibilityResult:
    point: np.ndarray  # None when the region was declared empty
    oracle_calls: int
    cuts: list = field(default_factory=list)
    acceptance: list = field(default_factory=list)
    stalled: bool = False  # stopped early because the region collapsed

    @property
    def feasible(self):
        return self.point is not None

    def trace(self):
        status = "feasible" if self.feasible else "empty"
        if self.stalled:
            status += " (region collapsed)"
        lines = [f"status: {status}", f"oracle calls: {self.oracle_calls}", f"cuts: {len(self.cuts)}"]
        for i, rate in enumerate(self.acceptance):
            lines.append(f"walk {i}: acceptance {rate:.3f}")
        return "\n".join(lines)


class Polytope:
    """``{z : ||z||_inf <= R, A z <= b}``, grown one cut at a time."""

    def __init__(self, dim, R):
        self.dim = dim
        self.R = float(R)
        self.A = np.zeros((0, dim))
        self.b = np.zeros(0)

    def add(self, a, b):
        self.A = np.vstack([self.A, np.asarray(a, dtype=float)[None, :]])
        self.b = np.append(self.b, float(b))

    def contains(self, Z):
        Z = np.atleast_2d(Z)
        ok = np.all(np.abs(Z) <= self.R, axis=1)
        if self.b.size:
            ok &= np.all(Z @ self.A.T <= self.b, axis=1)
        return ok

    __call__ = contains


def _sqrt_psd(M, floor=1e-12):
    w, V = np.linalg.eigh((M + M.T) / 2)
    return (V * np.sqrt(np.maximum(w, floor))) @ V.T


def _shape_from(points):
    d = points.shape[1]
    if points.shape[0] < 2:
        return np.eye(d)
    return _sqrt_psd(np.atleast_2d(np.cov(points, rowvar=False)))


def _min_spread(points):
    if points.shape[0] < 2:
        return np.inf
    cov = np.atleast_2d(np.cov(points, rowvar=False))
    return float(np.sqrt(max(np.linalg.eigvalsh(cov)[0], 0.0)))


def _unit_ball(rng, n, d):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((n, 1)) ** (1.0 / d)


def ball_walk_sampler(region, warm_start, N, config, rng, stats=None):
    """Return ``2N`` points from the convex ``region`` (a vectorized
    membership test) by running one ball walk per output point.

    Chains start round-robin from the warm-start points that lie in the
    region; proposal shape is ``eta * Lambda^{1/2}`` with ``Lambda`` the
    covariance of those points. With ``config.adapt`` the shape is
    re-estimated from the chain cloud after every ``d`` proposal rounds and
    the step length is nudged toward an acceptance rate between 0.5 and 0.9,
    so a cloud that starts bunched in one corner still spreads out.
    Each chain stops after ``config.inner_steps`` accepted moves.
    """
    W = np.atleast_2d(np.asarray(warm_start, dtype=float))
    n_out, d = 2 * int(N), W.shape[1]
    survivors = W[region(W)]
    if survivors.shape[0] == 0:
        raise WarmStartError(f"none of the {W.shape[0]} warm-start points lies in the region")
    eta = config.eta if config.eta is not None else 0.5 / math.sqrt(d)
    steps = config.inner_steps if config.inner_steps is not None else max(MIN_STEPS, math.ceil(config.c3 * d * d))

    Z = survivors[np.arange(n_out) % survivors.shape[0]].copy()
    L = _shape_from(survivors)
    done = np.zeros(n_out, dtype=int)
    misses = np.zeros(n_out, dtype=int)
    proposals = accepted = 0
    rounds = 0
    scale = 1.0
    while True:
        active = np.flatnonzero(done < steps)
        if active.size == 0:
            break
        prop = Z[active] + (eta * scale) * _unit_ball(rng, active.size, d) @ L
        ok = region(prop)
        if config.adapt:
            rate = ok.mean()
            if rate > 0.9:
                scale *= 1.2
            elif rate < 0.5:
                scale /= 1.2
        Z[active[ok]] = prop[ok]
        done[active[ok]] += 1
        misses[active[ok]] = 0
        misses[active[~ok]] += 1
        proposals += active.size
        accepted += int(ok.sum())
        if misses.max() >= config.stall_limit:
            raise SamplerStallError(
                f"ball walk stalled: {config.stall_limit} consecutive rejections",
                {"accepted": accepted, "proposals": proposals, "survivors": int(survivors.shape[0]),
                 "eta": eta, "shape_eigs": np.linalg.eigvalsh(L @ L).tolist()})
        rounds += 1
        if config.adapt and rounds % d == 0:
            L = _shape_from(Z)
    if stats is not None:
        stats.append(accepted / max(proposals, 1))
    return Z


def solve_feasibility(problem, config=None, rng=None):
    """Find a point accepted by ``problem.oracle`` or report the set empty."""
    cfg = (config or WalkConfig()).resolve(problem)
    rng = rng if rng is not None else np.random.default_rng()
    d, N = problem.dim, cfg.num_samples
    region = Polytope(d, problem.R)
    U = rng.uniform(-problem.R, problem.R, size=(2 * N, d))
    result = FeasibilityResult(None, 0)
    for _ in range(cfg.max_cuts):
        z = U[:N].mean(axis=0)
        answer = problem.oracle(z)
        result.oracle_calls += 1
        if answer is INSIDE:
            result.point = z
            return result
        a, b = answer
        a = np.asarray(a, dtype=float)
        lhs = float(a @ z)
        if not np.any(a) and b < 0:
            return result  # 0 <= b < 0: the oracle certified emptiness
        if not lhs > b:
            raise SeparationContractError(
                f"hyperplane does not exclude the query: <a, z> = {lhs:.6g} <= b = {b:.6g}")
        offset = lhs
        if cfg.tight_cuts and np.any(U[N:] @ a <= b):
            offset = float(b)  # only when some warm start survives the tighter cut
        region.add(a, offset)
        result.cuts.append((a, float(b)))
        warm = U[N:] if region(U[N:]).any() else U
        try:
            U = ball_walk_sampler(region, warm, N, cfg, rng, stats=result.acceptance)
        except SamplerStallError:
            # no room left for a box of half-width r: treat as empty
            result.stalled = True
            return result
        if _min_spread(U) < problem.r / (4.0 * d):
            # a convex set holding a box of half-width r has directional
            # spread of order r / d; the sample cloud says otherwise
            result.stalled = True
            return result
    return result
