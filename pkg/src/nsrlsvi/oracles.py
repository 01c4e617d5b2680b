"""Squared-loss minimization oracles over the functional-norm ball.

``O(W) = {theta : |<theta, phi>| <= W for every feature phi}``. The exact
oracle is min-norm least squares followed by a membership check. The
approximate oracles reduce the constrained problem to convex feasibility and
call :func:`nsrlsvi.feasibility.solve_feasibility`.
"""

from dataclasses import dataclass
import math

import numpy as np
from cvxopt import matrix as cvx_matrix, solvers as cvx_solvers

from .feasibility import INSIDE, ConvexProblem, WalkConfig, solve_feasibility
from .features import greedy_spanning_subset, numerical_rank

MEMBERSHIP_TOL = 1e-9


class OracleFailure(RuntimeError):
    """The feasibility reduction found no point (its premise was violated)."""


@dataclass
class RegressionProblem:
    """Weighted least squares ``sum_i w_i (<theta, phi_i> - y_i)^2`` over O(W).

    ``weights`` are multiplicities of repeated data rows.
    """

    features: np.ndarray
    targets: np.ndarray
    W: float
    weights: np.ndarray = None
    eps1: float = 0.0
    eps2: float = 0.0

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        n = self.targets.size
        F = np.asarray(self.features, dtype=float)
        if n == 0 and F.size == 0:
            F = F.reshape(0, F.shape[-1] if F.ndim == 2 else 0)
        self.features = np.atleast_2d(F) if n else F
        if self.features.shape[0] != n:
            raise ValueError(f"{self.features.shape[0]} feature rows but {n} targets")
        self.weights = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if self.weights.shape != (n,) or np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative, one per row")
        if not self.W > 0:
            raise ValueError(f"constraint width W must be positive, got {self.W}")
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValueError("tolerances must be nonnegative")

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def size(self):
        return float(self.weights.sum())

    def residuals(self, theta):
        return self.features @ theta - self.targets

    def objective(self, theta):
        res = self.residuals(theta)
        return float(self.weights @ (res * res))


class LinOpt:
    """Linear optimization over a feature space: ``theta -> argmax <theta, phi>``.

    ``representative`` is a finite spanning subset of the feature space used
    for the box radius of the functional-norm ball. Without ``fn`` the oracle
    is exhaustive search over ``representative``.
    """

    def __init__(self, representative, fn=None):
        self.representative = np.atleast_2d(np.asarray(representative, dtype=float))
        self._fn = fn
        self._radius = None

    @classmethod
    def from_env(cls, env):
        """Exhaustive search when the env's feature set is its whole feature space."""
        fn = None if getattr(env, "finite_features", True) else env.linopt
        return cls(env.feature_set(), fn)

    def __call__(self, theta):
        if self._fn is not None:
            return np.asarray(self._fn(theta), dtype=float)
        F = self.representative
        return F[int(np.argmax(F @ theta))]

    @property
    def dim(self):
        return self.representative.shape[1]

    @property
    def radius(self):
        """``R_feat`` with ``O(W)`` inside the box of half-width ``W * R_feat``."""
        if self._radius is None:
            self._radius = feature_radius(self.representative)
        return self._radius

    @property
    def norm_bound(self):
        """Largest feature norm; valid for the whole feature space when the
        representative set contains its norm maximizers."""
        if not hasattr(self, "_norm_bound"):
            self._norm_bound = float(np.max(np.linalg.norm(self.representative, axis=1)))
        return self._norm_bound

    def contains(self, theta, W):
        """Membership in O(W) with a cheap Cauchy-Schwarz pass first."""
        if float(np.linalg.norm(theta)) * self.norm_bound <= W:
            return True
        return _in_ball(self.functional_norm(theta)[0], W)

    @property
    def max_l1(self):
        return float(np.max(np.abs(self.representative).sum(axis=1)))

    def functional_norm(self, theta):
        """``(max_phi |<theta, phi>|, signed maximizer)``."""
        if self._fn is None:
            v = self.representative @ theta
            k = int(np.argmax(np.abs(v)))
            return float(abs(v[k])), (self.representative[k] if v[k] >= 0 else -self.representative[k])
        up = self(theta)
        dn = self(-theta)
        hi, lo = float(up @ theta), float(-(dn @ theta))
        return (hi, up) if hi >= lo else (lo, -dn)


def finite_linopt(features):
    return LinOpt(features)


def feature_radius(features):
    """``||F_B^{-1}||_inf`` for a greedily chosen basis ``F_B`` of the features.

    If ``|<theta, phi>| <= W`` on every basis row then ``theta = F_B^{-1} v``
    with ``||v||_inf <= W``, so ``||theta||_inf <= W * ||F_B^{-1}||_inf``.
    """
    F = np.atleast_2d(np.asarray(features, dtype=float))
    d = F.shape[1]
    if numerical_rank(F) < d:
        raise ValueError("features do not span the parameter space; reduce to their span first")
    B = F[greedy_spanning_subset(F)]
    return float(np.max(np.abs(np.linalg.inv(B)).sum(axis=1)))


@dataclass
class OracleResult:
    theta: np.ndarray
    objective: float
    functional: float = float("nan")  # max_phi |<theta, phi>|, when checked
    fallback: str = None  # which constrained solver took over, if any
    oracle_calls: int = 0
    level: float = None  # first feasible loss level (reward oracle only)


def _in_ball(functional, W):
    return functional <= W + MEMBERSHIP_TOL * max(1.0, W)


def exact_lsq(problem, linopt=None, max_rounds=50):
    """Min-norm minimizer of the unconstrained loss, checked against O(W).

    The minimizer is the pseudo-inverse solution computed by an SVD of the
    weighted design (same point as ``pinv(F^T D F) F^T D y`` without squaring
    the condition number). If it leaves O(W), :func:`constrained_lsq` takes
    over and the result is flagged.
    """
    n, d = problem.features.shape[0], problem.dim
    if n == 0:
        theta = np.zeros(d)
    else:
        sw = np.sqrt(problem.weights)
        theta = np.linalg.lstsq(problem.features * sw[:, None], problem.targets * sw, rcond=None)[0]
    obj = problem.objective(theta) if n else 0.0
    if linopt is None or linopt.contains(theta, problem.W):
        return OracleResult(theta, obj)
    out = constrained_lsq(problem, linopt, max_rounds)
    out.fallback = "constrained-qp"
    return out


def constrained_lsq(problem, linopt, max_rounds=10, rel_tol=1e-6):
    """Least squares over O(W) as a quadratic program.

    Constraints are ``|<theta, phi>| <= W`` over the representative features;
    while LinOpt finds a feature more than ``rel_tol`` outside the bound, it
    is added as a cut and the program is re-solved. A remaining overshoot is
    removed by shrinking theta, which keeps the result inside O(W).
    """
    F, y, w, W = problem.features, problem.targets, problem.weights, problem.W
    d = problem.dim
    G = (F.T * w) @ F
    b = F.T @ (w * y)
    cuts = np.vstack([linopt.representative, -linopt.representative])
    theta = np.zeros(d)
    for _ in range(max_rounds):
        sol = cvx_solvers.qp(cvx_matrix(2.0 * G), cvx_matrix(-2.0 * b), cvx_matrix(cuts),
                             cvx_matrix(np.full(cuts.shape[0], float(W))),
                             options={"show_progress": False, "abstol": 1e-12, "reltol": 1e-12,
                                      "feastol": 1e-12, "maxiters": 200})
        theta = np.array(sol["x"]).ravel()
        func, phi = linopt.functional_norm(theta)
        if func <= W * (1.0 + rel_tol):
            break
        cuts = np.vstack([cuts, phi])
    func, _ = linopt.functional_norm(theta)
    if func > W:
        theta = theta * (W / func)  # remove solver-tolerance overshoot
    return OracleResult(theta, problem.objective(theta), min(func, W))


def separation_for_Kapx(theta, problem, linopt, eps):
    """Separation oracle for the slabs ``|<theta, phi_i> - y_i| <= eps`` and
    ``O(W + eps)``; data rows are checked first (worst violation wins)."""
    theta = np.asarray(theta, dtype=float)
    if problem.targets.size:
        res = problem.residuals(theta)
        k = int(np.argmax(np.abs(res)))
        if res[k] > eps:
            return problem.features[k], float(problem.targets[k] + eps)
        if res[k] < -eps:
            return -problem.features[k], float(-problem.targets[k] + eps)
    func, phi = linopt.functional_norm(theta)
    if func > problem.W + eps:
        return phi, float(problem.W + eps)
    return INSIDE


def _solve(oracle, linopt, W, r, delta, rng, config):
    R = (W + r) * linopt.radius
    problem = ConvexProblem(linopt.dim, oracle, min(r, R), R, delta)
    return solve_feasibility(problem, config or WalkConfig(), rng)


def apx_value_oracle(problem, eps, delta, linopt, rng, config=None):
    """Find theta with every data residual within ``eps`` and theta in O(W + eps).

    Assumes an exact-fit point exists in O(W); then the objective is at most
    ``n * eps^2 <= n * eps`` for ``eps <= 1``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    # a box of half-width eps / max ||phi||_1 around the exact fit stays feasible
    r = eps / max(1.0, linopt.max_l1, _max_l1(problem.features))
    res = _solve(lambda th: separation_for_Kapx(th, problem, linopt, eps),
                 linopt, problem.W, r, delta, rng, config)
    if not res.feasible:
        raise OracleFailure(f"no parameter fits the data within {eps:g} inside O({problem.W:g}) "
                            f"after {res.oracle_calls} cuts")
    theta = res.point
    return OracleResult(theta, problem.objective(theta) if problem.targets.size else 0.0,
                        linopt.functional_norm(theta)[0], oracle_calls=res.oracle_calls)


def _max_l1(F):
    return float(np.max(np.abs(F).sum(axis=1))) if F.size else 0.0


def loss_level_separation(theta, problem, linopt, level, W):
    """Separation for ``{g(theta) <= level} cap O(W)`` with g the weighted loss.

    Uses the gradient (tangent) cut of the quadratic at the query point. A
    zero gradient above the level certifies emptiness; it is reported as the
    degenerate hyperplane ``a = 0, b = -1``.
    """
    theta = np.asarray(theta, dtype=float)
    if problem.targets.size:
        res = problem.residuals(theta)
        g = float(problem.weights @ (res * res))
        if g > level:
            grad = 2.0 * problem.features.T @ (problem.weights * res)
            if not np.any(grad):
                return np.zeros_like(theta), -1.0
            return grad, float(grad @ theta - (g - level))
    func, phi = linopt.functional_norm(theta)
    if func > W:
        return phi, float(W)
    return INSIDE


def apx_reward_oracle(problem, eps, delta, linopt, rng, config=None, search="bisection"):
    """Near-minimizer of the loss over O(W): objective within ``eps`` of the
    constrained minimum, parameter in O(W + eps).

    Sweeps the level ``Delta`` over a grid of spacing ``eps / 2`` and solves
    ``{g <= Delta + eps / 2} cap O(W + eps)`` by feasibility; the smallest
    feasible level wins. ``search`` is ``"bisection"`` or ``"linear"``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if search not in ("bisection", "linear"):
        raise ValueError(f"unknown search {search!r}")
    d = linopt.dim
    if problem.targets.size == 0:
        return OracleResult(np.zeros(d), 0.0, 0.0, level=0.0)
    step = eps / 2.0
    top = max(2.0, problem.objective(np.zeros(d)))  # theta = 0 is always feasible
    K = math.ceil(top / step)
    c = problem.weights @ np.abs(problem.features).sum(axis=1)
    c_max = max(1.0, linopt.max_l1, _max_l1(problem.features))
    res_max = 2.0 * (problem.W + eps) * c_max + float(np.max(np.abs(problem.targets)))
    r = min(step / (2.0 * res_max * c + c_max ** 2 * c), eps / c_max)
    calls = 0

    def attempt(k):
        nonlocal calls
        level = k * step + step
        out = _solve(lambda th: loss_level_separation(th, problem, linopt, level, problem.W + eps),
                     linopt, problem.W, r, delta, rng, config)
        calls += out.oracle_calls
        return out.point

    best, best_k = None, None
    if search == "linear":
        for k in range(K + 1):
            best, best_k = attempt(k), k
            if best is not None:
                break
    else:
        lo, hi = 0, K
        best, best_k = attempt(hi), hi
        if best is not None:
            while lo < hi:
                mid = (lo + hi) // 2
                pt = attempt(mid)
                if pt is not None:
                    best, best_k, hi = pt, mid, mid
                else:
                    lo = mid + 1
    if best is None:
        raise OracleFailure("every loss level on the grid was reported infeasible")
    return OracleResult(best, problem.objective(best), linopt.functional_norm(best)[0],
                        oracle_calls=calls, level=best_k * step)
