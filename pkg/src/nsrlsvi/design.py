"""Approximate D-optimal designs by Frank-Wolfe with away steps.

The stopping rule is the Kiefer-Wolfowitz certificate: a design ``rho`` is
optimal iff ``g(rho) = max_phi ||phi||^2_{Lambda(rho)^{-1}}`` equals ``d``.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from .features import TAU_SPAN, greedy_spanning_subset, numerical_rank, projection_onto_span, pseudo_inverse

PRUNE_THRESHOLD = 1e-6


class DesignError(RuntimeError):
    def __init__(self, message, best_g=None):
        super().__init__(message)
        self.best_g = best_g


@dataclass(frozen=True)
class DesignMeasure:
    support: np.ndarray  # (m, d)
    weights: np.ndarray  # (m,)
    g_value: float = float("nan")
    iterations: int = 0
    logdet_trace: tuple = field(default=(), repr=False)

    @property
    def d(self):
        return self.support.shape[1]

    @property
    def m(self):
        return self.support.shape[0]

    def matrix(self):
        """Lambda(rho) = sum_i rho_i phi_i phi_i^T."""
        return (self.support.T * self.weights) @ self.support

    def to_dict(self):
        return {
            "d": int(self.d),
            "g_value": float(self.g_value),
            "iterations": int(self.iterations),
            "support": [[float(v) for v in row] for row in self.support],
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, data):
        support = np.asarray(data["support"], dtype=float).reshape(-1, int(data["d"]))
        return cls(support, np.asarray(data["weights"], dtype=float),
                   float(data.get("g_value", "nan")), int(data.get("iterations", 0)))

    def save(self, path):
        # repr-precision floats round-trip exactly through json
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _leverages(F, Lam):
    try:
        C = np.linalg.cholesky(Lam)
    except np.linalg.LinAlgError as exc:
        raise DesignError("design matrix is singular") from exc
    Z = np.linalg.solve(C, F.T)
    return np.einsum("ij,ij->j", Z, Z), 2.0 * float(np.sum(np.log(np.diag(C))))


def _reduce_support(F, rho):
    """Caratheodory step: move weight along directions that keep the design
    matrix fixed and do not raise the total mass, until at most ``d(d+1)/2``
    points remain. Renormalizing afterwards scales every leverage by the
    remaining mass (at most 1), so the certificate can only improve."""
    d = F.shape[1]
    iu = np.triu_indices(d)
    rho = rho.copy()
    rho[rho < PRUNE_THRESHOLD] = 0.0
    while True:
        supp = np.flatnonzero(rho > 0)
        if supp.size <= iu[0].size:
            break
        M = np.einsum("ki,kj->kij", F[supp], F[supp])[:, iu[0], iu[1]].T
        v = np.linalg.svd(M)[2][-1]
        if v.sum() < 0:
            v = -v
        pos = v > 1e-12 * np.abs(v).max()
        ratio = np.full(supp.size, np.inf)
        ratio[pos] = rho[supp][pos] / v[pos]
        k = int(np.argmin(ratio))
        rho[supp] = np.clip(rho[supp] - ratio[k] * v, 0.0, None)
        rho[supp[k]] = 0.0
    return rho / rho.sum()


def design_g_value(design, features):
    """max over ``features`` of ||phi||^2 in the inverse design matrix."""
    F = np.atleast_2d(np.asarray(features, dtype=float))
    Lam = design.matrix()
    try:
        lev, _ = _leverages(F, Lam)
    except DesignError:
        # singular design: pseudo-inverse on its range, infinite off it
        P = projection_onto_span(design.support, dim=design.d)
        lev = np.einsum("ij,jk,ik->i", F, pseudo_inverse(Lam), F)
        lev[np.linalg.norm(F - F @ P, axis=1) > TAU_SPAN * np.maximum(np.linalg.norm(F, axis=1), 1.0)] = np.inf
    return float(np.max(lev))


def frank_wolfe_design(features, eps_fw=0.01, max_iter=100_000):
    """Approximate D-optimal design over a finite feature set.

    Returns a design with ``g(rho) <= d * (1 + eps_fw)`` and at most
    ``d(d+1)/2`` support points. Starts uniform over a greedily chosen
    spanning subset; each iteration takes either a Frank-Wolfe step toward the
    max-leverage point or an away step from the min-leverage support point,
    both with exact line search. Iteration continues past the certificate
    while the support is too large, since away steps drop points.
    """
    F = np.atleast_2d(np.asarray(features, dtype=float))
    n, d = F.shape
    if eps_fw <= 0:
        raise ValueError("eps_fw must be positive")
    rank = numerical_rank(F)
    if rank < d:
        raise DesignError(f"features do not span R^{d}: rank {rank} (deficiency {d - rank})")

    rho = np.zeros(n)
    rho[greedy_spanning_subset(F)] = 1.0 / d
    target = d * (1.0 + eps_fw)
    max_support = d * (d + 1) // 2
    trace = []
    best_g = np.inf
    it = 0
    for it in range(max_iter + 1):
        Lam = (F.T * rho) @ F
        lev, logdet = _leverages(F, Lam)
        trace.append(logdet)
        k_up = int(np.argmax(lev))
        g = float(lev[k_up])
        best_g = min(best_g, g)
        if g <= target:
            if np.count_nonzero(rho >= PRUNE_THRESHOLD) <= max_support:
                break
            rho = _reduce_support(F, rho)
            continue
        if it == max_iter:
            raise DesignError(f"no certificate after {max_iter} iterations; best g = {best_g:.6g}",
                              best_g=best_g)
        supp = np.flatnonzero(rho > 0)
        k_dn = int(supp[np.argmin(lev[supp])])
        g_dn = float(lev[k_dn])
        if g - d >= d - g_dn or rho[k_dn] >= 1.0:
            step = (g - d) / (d * (g - 1.0))
            rho *= 1.0 - step
            rho[k_up] += step
        else:
            step = (g_dn - d) / (d * (g_dn - 1.0)) if g_dn != 1.0 else -np.inf
            step = max(step, -rho[k_dn] / (1.0 - rho[k_dn]))
            rho *= 1.0 - step
            rho[k_dn] += step
            if rho[k_dn] < 1e-15:
                rho[k_dn] = 0.0
        rho = np.clip(rho, 0.0, None)
        rho /= rho.sum()

    keep = rho >= PRUNE_THRESHOLD
    w = rho[keep] / rho[keep].sum()
    pruned = DesignMeasure(F[keep].copy(), w, iterations=it, logdet_trace=tuple(trace))
    g_final = design_g_value(pruned, F)
    return DesignMeasure(pruned.support, pruned.weights, g_final, it, pruned.logdet_trace)
