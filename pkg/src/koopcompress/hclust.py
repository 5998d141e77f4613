"""Single-linkage agglomerative clustering with deterministic tie-breaking."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class Dendrogram:
    """Merge tree from agglomerative clustering.

    Leaves are numbered 0..n_leaves-1; merge m creates cluster id
    n_leaves + m. Each record is (id_a, id_b, distance, new_id) with
    id_a < id_b. Single linkage guarantees non-decreasing distances.
    """

    n_leaves: int
    merges: tuple[tuple[int, int, float, int], ...]

    def __post_init__(self):
        if len(self.merges) != self.n_leaves - 1:
            raise ValueError("a dendrogram over n leaves has n - 1 merges")


@dataclass(frozen=True)
class ClusterAssignment:
    """Disjoint index sets covering 0..n-1, each sorted, ordered by
    smallest member."""

    clusters: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        for c in self.clusters:
            if not c:
                raise ValueError("clusters must be non-empty")
            if seen.intersection(c):
                raise ValueError("clusters must be disjoint")
            seen.update(c)
        if seen != set(range(len(seen))):
            raise ValueError("clusters must cover 0..n-1")

    @property
    def n_items(self) -> int:
        return sum(len(c) for c in self.clusters)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.clusters], dtype=np.int64)

    def labels(self) -> np.ndarray:
        """Cluster index of each item, shape (n_items,)."""
        out = np.empty(self.n_items, dtype=np.int64)
        for i, c in enumerate(self.clusters):
            out[list(c)] = i
        return out

    @staticmethod
    def from_lists(clusters) -> "ClusterAssignment":
        """Sorts members within each cluster but keeps the cluster order
        exactly as given; the order fixes the compressed coordinate axes."""
        return ClusterAssignment(clusters=tuple(
            tuple(sorted(int(i) for i in c)) for c in clusters))


def pairwise_euclidean(vectors: np.ndarray) -> np.ndarray:
    """Symmetric Euclidean distance matrix with a zero diagonal."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(x) < 1:
        raise ValueError("vectors must be a non-empty (n, d) array")
    if not np.all(np.isfinite(x)):
        raise ValueError("vectors must be finite")
    dist = cdist(x, x)
    np.fill_diagonal(dist, 0.0)
    return dist


def single_linkage(dist: np.ndarray) -> Dendrogram:
    """Agglomerate by repeatedly merging the closest pair of clusters.

    Inter-cluster distances follow the minimum rule
    d([AB], C) = min(d(A, C), d(B, C)). Ties are broken toward the pair
    with the lexicographically smallest (id, id); cluster ids are leaf
    indices followed by merge order, so results are fully deterministic.
    """
    d = np.array(dist, dtype=np.float64)
    n = d.shape[0]
    if d.ndim != 2 or d.shape[1] != n:
        raise ValueError("dist must be square")
    if not np.allclose(d, d.T, rtol=0.0, atol=0.0):
        raise ValueError("dist must be symmetric")
    if np.any(np.diagonal(d) != 0.0):
        raise ValueError("dist must have a zero diagonal")

    ids = np.arange(n)
    np.fill_diagonal(d, np.inf)
    merges = []
    for m in range(n - 1):
        best = np.min(d)
        rows, cols = np.nonzero(d == best)
        pairs = {tuple(sorted((int(ids[i]), int(ids[j]))))
                 for i, j in zip(rows, cols)}
        id_a, id_b = min(pairs)
        si = int(np.nonzero(ids == id_a)[0][0])
        sj = int(np.nonzero(ids == id_b)[0][0])
        merges.append((id_a, id_b, float(best), n + m))
        # Merged cluster keeps slot si; minimum rule updates its distances.
        d[si] = np.minimum(d[si], d[sj])
        d[:, si] = d[si]
        d[si, si] = np.inf
        d[sj, :] = np.inf
        d[:, sj] = np.inf
        ids[si] = n + m
        ids[sj] = -1
    return Dendrogram(n_leaves=n, merges=tuple(merges))


def cut(dendro: Dendrogram, k: int) -> ClusterAssignment:
    """Flat clustering with exactly k clusters (undo the last k - 1 merges)."""
    n = dendro.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for id_a, id_b, _, new_id in dendro.merges[: n - k]:
        members[new_id] = members.pop(id_a) + members.pop(id_b)
    # Canonical flat-cut order: clusters sorted by their smallest member.
    ordered = sorted((sorted(c) for c in members.values()), key=lambda c: c[0])
    return ClusterAssignment.from_lists(ordered)


def dendrogram_to_json(dendro: Dendrogram) -> str:
    doc = {
        "n_leaves": dendro.n_leaves,
        "merges": [
            {"a": a, "b": b, "distance": dist, "id": new_id}
            for a, b, dist, new_id in dendro.merges
        ],
    }
    return json.dumps(doc, sort_keys=True)


def dendrogram_from_json(doc: str) -> Dendrogram:
    data = json.loads(doc)
    merges = tuple(
        (int(m["a"]), int(m["b"]), float(m["distance"]), int(m["id"]))
        for m in data["merges"]
    )
    return Dendrogram(n_leaves=int(data["n_leaves"]), merges=merges)
