"""Input validation and conversion helpers for the estimator API."""

import numpy as np

from .errors import StructureError
from .graph import Graph
from .jets import Particle


def as_graph(X):
    """Coerce input to a Graph.

    Accepts a Graph, a square symmetric dense array (nonzero entries are
    edge weights, the diagonal is loop weight), or any scipy-style sparse
    matrix exposing ``tocoo``.
    """
    if isinstance(X, Graph):
        return X
    if hasattr(X, "tocoo"):
        coo = X.tocoo()
        if coo.shape[0] != coo.shape[1]:
            raise StructureError(f"adjacency matrix must be square, got {coo.shape}")
        n = coo.shape[0]
        pair = {}
        order = []
        for u, v, w in zip(coo.row, coo.col, coo.data):
            key = (int(u), int(v))
            if key not in pair:
                order.append(key)
            pair[key] = pair.get(key, 0.0) + float(w)
        edges = []
        seen = set()
        for u, v in order:
            if u == v:
                edges.append((u, u, pair[(u, v)]))
                continue
            if (v, u) in seen:
                continue
            seen.add((u, v))
            w = pair[(u, v)]
            back = pair.get((v, u))
            if back is not None and back != w:
                raise StructureError(f"asymmetric weights at ({u}, {v}): {w} vs {back}")
            edges.append((u, v, w))
        return Graph.from_edges(n, edges)
    A = np.asarray(X, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructureError(f"adjacency matrix must be square 2-D, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise StructureError("adjacency matrix must be symmetric")
    if np.any(A < 0):
        raise ValueError("edge weights must be nonnegative")
    n = A.shape[0]
    edges = []
    for u in range(n):
        if A[u, u] != 0:
            edges.append((u, u, float(A[u, u])))
        for v in range(u + 1, n):
            if A[u, v] != 0:
                edges.append((u, v, float(A[u, v])))
    return Graph.from_edges(n, edges)


def check_particles(X):
    """Coerce an (n, 3) array of (pt, y, phi) rows into Particle objects."""
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Particle):
        return list(X)
    A = np.asarray(X, dtype=float)
    if A.ndim != 2 or A.shape[1] != 3:
        raise ValueError(f"particles must be an (n, 3) array of pt/y/phi, got {A.shape}")
    if A.shape[0] == 0:
        raise ValueError("empty particle set")
    if np.any(~np.isfinite(A)):
        raise ValueError("particle kinematics must be finite")
    return [Particle(float(pt), float(y), float(phi)) for pt, y, phi in A]
