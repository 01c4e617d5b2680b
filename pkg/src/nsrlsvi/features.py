"""Dense linear-algebra kernels: span projectors, pseudo-inverses, quadratic norms."""

import numpy as np

TAU_RANK = 1e-8
TAU_SPAN = 1e-8
TAU_SYM = 1e-10
TAU_PSD = 1e-9


def _stack(data, dim=None):
    rows = [np.asarray(x, dtype=float).ravel() for x in data]
    if not rows:
        if dim is None:
            raise ValueError("empty data needs an explicit dimension")
        return np.zeros((0, dim))
    d = rows[0].shape[0]
    for i, r in enumerate(rows):
        if r.shape[0] != d:
            raise ValueError(f"dimension mismatch: vector {i} has length {r.shape[0]}, expected {d}")
    if dim is not None and d != dim:
        raise ValueError(f"dimension mismatch: vectors have length {d}, expected {dim}")
    return np.vstack(rows)


def span_basis(data, dim=None, tol=TAU_RANK):
    """Orthonormal basis (columns) of span(data), rank cut at ``tol * sigma_max``."""
    X = _stack(data, dim)
    d = X.shape[1]
    if X.shape[0] == 0:
        return np.zeros((d, 0))
    _, s, vh = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((d, 0))
    r = int(np.sum(s > tol * s[0]))
    return vh[:r].T.copy()


def projection_onto_span(data, dim=None, tol=TAU_RANK):
    """Orthogonal projector onto the span of ``data`` (a list of vectors or a 2-D array).

    An empty list needs ``dim`` and yields the zero matrix.
    """
    U = span_basis(data, dim, tol)
    P = U @ U.T
    return 0.5 * (P + P.T)


def pseudo_inverse(M, tol=TAU_RANK):
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix."""
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    top = np.max(np.abs(w)) if w.size else 0.0
    if top == 0.0:
        return np.zeros_like(M)
    keep = w > tol * top
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    out = (V * inv) @ V.T
    return 0.5 * (out + out.T)


def quad_norm(x, M):
    """``sqrt(max(x^T M x, 0))``."""
    x = np.asarray(x, dtype=float).ravel()
    M = np.asarray(M, dtype=float)
    if M.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"dimension mismatch: x has length {x.shape[0]}, M has shape {M.shape}")
    return float(np.sqrt(max(float(x @ M @ x), 0.0)))


def in_span(x, P, tol=TAU_SPAN):
    x = np.asarray(x, dtype=float).ravel()
    resid = x - P @ x
    return bool(np.linalg.norm(resid) <= tol * max(np.linalg.norm(x), 1.0))


def is_projector(P, tol=1e-8):
    P = np.asarray(P, dtype=float)
    return (np.linalg.norm(P @ P - P) <= tol) and (np.linalg.norm(P - P.T) <= tol)


def check_psd(M, tol_sym=TAU_SYM, tol_psd=TAU_PSD):
    """Raise ValueError unless ``M`` is symmetric PSD within tolerance."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if np.max(np.abs(M - M.T), initial=0.0) > tol_sym:
        raise ValueError("matrix is not symmetric")
    if M.size and np.linalg.eigvalsh(0.5 * (M + M.T))[0] < -tol_psd:
        raise ValueError("matrix has a negative eigenvalue")
    return M


def numerical_rank(data, dim=None, tol=TAU_RANK):
    return span_basis(data, dim, tol).shape[1]


def greedy_spanning_subset(features, tol=TAU_RANK):
    """Indices of a maximal linearly independent subset, picked greedily by residual norm."""
    F = np.asarray(features, dtype=float)
    n, d = F.shape
    chosen = []
    Q = np.zeros((d, 0))
    resid = F.copy()
    scale = max(np.max(np.linalg.norm(F, axis=1), initial=0.0), 1e-300)
    while len(chosen) < d:
        norms = np.linalg.norm(resid, axis=1)
        k = int(np.argmax(norms))
        if norms[k] <= tol * scale:
            break
        q = resid[k] / norms[k]
        Q = np.column_stack([Q, q])
        resid = resid - np.outer(resid @ q, q)
        chosen.append(k)
    return chosen
