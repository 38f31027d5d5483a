"""Site graph construction and spectral operators.

Everything here is dense; site counts are in the tens.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "Graph", "GraphError", "SpectralDecomposition", "build_graph_from_correlation",
    "build_graph_from_distance", "jacobi_eigh", "normalized_laplacian", "chebyshev_filter",
    "first_order_filter", "renormalized_propagation", "write_edge_list", "read_edge_list",
]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    adjacency: np.ndarray
    node_ids: tuple = field(default=())

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise GraphError("adjacency must be exactly symmetric")
        if np.any(np.diag(a) != 0):
            raise GraphError("adjacency must have a zero diagonal")
        if np.any(a < 0):
            raise GraphError("edge weights must be nonnegative")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        ids = tuple(self.node_ids) if len(self.node_ids) else tuple(str(i) for i in range(a.shape[0]))
        if len(ids) != a.shape[0]:
            raise GraphError(f"{len(ids)} node ids for {a.shape[0]} nodes")
        object.__setattr__(self, "node_ids", ids)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def permuted(self, perm: Sequence[int]) -> "Graph":
        perm = np.asarray(perm)
        return Graph(self.adjacency[np.ix_(perm, perm)], tuple(self.node_ids[i] for i in perm))


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns

    @property
    def gamma_max(self) -> float:
        return float(self.eigenvalues[-1])

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _symmetrize_weights(w: np.ndarray) -> np.ndarray:
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0.0)
    return w


def build_graph_from_correlation(series, threshold: float, node_ids=None) -> Graph:
    """Edge weight |r| between two nodes when their Pearson correlation has |r| >= threshold.

    ``series`` is an (n, T) array or a sequence of n aligned sequences.
    NaN entries are excluded pairwise-jointly: only time steps where every
    node is present are used.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise GraphError("need at least 2 node series")
    if not 0.0 <= threshold <= 1.0:
        raise GraphError(f"threshold must lie in [0, 1], got {threshold}")
    x = x[:, np.all(np.isfinite(x), axis=0)]
    if x.shape[1] < 3:
        raise GraphError("need at least 3 aligned observations per node")
    ids = tuple(node_ids) if node_ids is not None else tuple(str(i) for i in range(x.shape[0]))
    centered = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    for i, nrm in enumerate(norms):
        if nrm == 0.0:
            raise GraphError(f"node {ids[i]!r} has a zero-variance series")
    r = (centered @ centered.T) / np.outer(norms, norms)
    w = np.abs(np.clip(r, -1.0, 1.0))
    w[w < threshold] = 0.0
    return Graph(_symmetrize_weights(w), ids)


def build_graph_from_distance(coords, scale: float, threshold: float = 0.0, node_ids=None) -> Graph:
    """Gaussian kernel exp(-dist^2 / scale^2) on node coordinates; weights below threshold dropped."""
    c = np.asarray(coords, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 2:
        raise GraphError("need coordinates for at least 2 nodes")
    if scale <= 0:
        raise GraphError("kernel scale must be positive")
    diff = c[:, None, :] - c[None, :, :]
    w = np.exp(-(diff * diff).sum(axis=-1) / scale**2)
    w[w < threshold] = 0.0
    return Graph(_symmetrize_weights(w), node_ids if node_ids is not None else ())


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Stops when the off-diagonal Frobenius norm falls below ``tol`` (relative
    to the full norm when that is larger than 1). Returns ascending
    eigenvalues and the matching orthonormal eigenvectors as columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise GraphError(f"expected a square matrix, got {a.shape}")
    v = np.eye(n)
    bound = tol * max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < bound:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                diff = a[q, q] - a[p, p]
                if abs(apq) <= 1e-300 or abs(apq) < 1e-18 * abs(diff):
                    a[p, q] = a[q, p] = 0.0  # below rounding of the diagonal
                    continue
                theta = diff / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # asymptote of the formula below, avoids theta**2 overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    else:
        raise GraphError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _inv_sqrt_degree(g: Graph) -> np.ndarray:
    deg = g.degrees
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        names = ", ".join(repr(g.node_ids[i]) for i in isolated)
        raise GraphError(
            f"node(s) {names} have zero degree; the normalized Laplacian is undefined there, "
            "use renormalized_propagation instead"
        )
    return 1.0 / np.sqrt(deg)


def normalized_laplacian(g: Graph) -> tuple[np.ndarray, SpectralDecomposition]:
    """L = I - D^-1/2 A D^-1/2 together with its eigen-decomposition."""
    d = _inv_sqrt_degree(g)
    lap = np.eye(g.n) - d[:, None] * g.adjacency * d[None, :]
    vals, vecs = jacobi_eigh(lap)
    return lap, SpectralDecomposition(vals, vecs)


def chebyshev_filter(g: Graph, signal, omega: Sequence[float], gamma_max: float | None = None,
                     laplacian: np.ndarray | None = None) -> np.ndarray:
    """Apply sum_j omega_j P_j((2/gamma_max) L - I) to ``signal`` (n x F).

    The Chebyshev terms are built by the three-term recurrence in the vertex
    domain. ``gamma_max`` defaults to the largest Laplacian eigenvalue.
    """
    omega = list(omega)
    if not omega:
        raise ValueError("chebyshev_filter needs at least one coefficient")
    x = np.asarray(signal, dtype=np.float64)
    if x.shape[0] != g.n:
        raise ValueError(f"signal has {x.shape[0]} rows for a {g.n}-node graph")
    if laplacian is None or gamma_max is None:
        lap, decomp = normalized_laplacian(g)
        laplacian = lap if laplacian is None else laplacian
        gamma_max = decomp.gamma_max if gamma_max is None else gamma_max
    scaled = (2.0 / gamma_max) * laplacian - np.eye(g.n)
    prev, cur = x, scaled @ x
    out = omega[0] * prev
    if len(omega) > 1:
        out = out + omega[1] * cur
    for w in omega[2:]:
        prev, cur = cur, 2.0 * (scaled @ cur) - prev
        out = out + w * cur
    return out


def first_order_filter(g: Graph, signal, delta: float) -> np.ndarray:
    """delta (I + D^-1/2 A D^-1/2) signal."""
    d = _inv_sqrt_degree(g)
    x = np.asarray(signal, dtype=np.float64)
    return delta * (x + (d[:, None] * g.adjacency * d[None, :]) @ x)


def renormalized_propagation(g: Graph) -> np.ndarray:
    """M = D~^-1/2 (A + I) D~^-1/2 with D~ the degree matrix of A + I."""
    a_hat = g.adjacency + np.eye(g.n)
    deg = a_hat.sum(axis=1)
    # one sqrt of the product keeps exact cases exact (K2 gives 1/sqrt(4) = 0.5)
    return a_hat / np.sqrt(np.outer(deg, deg))


def write_edge_list(g: Graph, path) -> None:
    lines = [f"# graph n={g.n}"]
    lines.append("# nodes " + ",".join(g.node_ids))
    for i in range(g.n):
        for j in range(i + 1, g.n):
            w = g.adjacency[i, j]
            if w != 0.0:
                lines.append(f"{g.node_ids[i]},{g.node_ids[j]},{float(w)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_edge_list(path) -> Graph:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("# graph n="):
        raise GraphError(f"{path}: missing '# graph n=<count>' header")
    n = int(text[0].split("=", 1)[1])
    ids: list[str] | None = None
    edges = []
    for line in text[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("# nodes "):
            ids = line[len("# nodes "):].split(",")
            continue
        if line.startswith("#"):
            continue
        a, b, w = line.split(",")
        edges.append((a, b, float(w)))
    if ids is None:
        ids = [str(i) for i in range(n)]
    if len(ids) != n:
        raise GraphError(f"{path}: header says n={n} but {len(ids)} node ids listed")
    index = {name: i for i, name in enumerate(ids)}
    adj = np.zeros((n, n))
    for a, b, w in edges:
        i, j = index[a], index[b]
        adj[i, j] = adj[j, i] = w
    return Graph(adj, tuple(ids))
