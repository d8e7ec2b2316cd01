"""Fingerprinting attack suite: feature construction from the anonymized
trace, k-means and spectral clustering, and step-wise greedy matching via an
exact linear-sum-assignment solver.

Inputs are TraceStore only; nothing here can reach the truth sidecar.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import UsageError
from .fedsim import TraceStore
from .model import LayerSelector
from .numerics import symmetric_eigen

log = logging.getLogger(__name__)


@dataclass
class FeatureMatrix:
    """Unit-normalized gradient features, one row per trace record, ordered
    by (round asc, slot asc)."""

    values: np.ndarray  # (K*T, dim) float64
    index: List[Tuple[int, int]]  # row -> (round, slot)
    clients: int
    rounds: int


def build_features(trace: TraceStore, selector: LayerSelector) -> FeatureMatrix:
    """Concatenate the selected FC/Proj layers of each record (row-major per
    layer, selector order) and normalize to unit length. A zero-gradient
    record is replaced by the unit basis vector e1, with a warning."""
    if not trace.records:
        raise UsageError("empty trace")
    manifest_names = [name for name, _, _ in trace.layer_manifest]
    n_blocks = sum(1 for name in manifest_names if name.endswith(".fc"))
    selected = selector.layer_names(n_blocks)
    for name in selected:
        if name not in manifest_names:
            raise UsageError(f"selector layer {name!r} not in trace manifest")

    records = sorted(trace.records, key=lambda r: (r.round, r.slot))
    rows = []
    index = []
    for rec in records:
        vec = np.concatenate(
            [rec.layers[name].astype(np.float64).ravel() for name in selected]
        )
        norm = np.sqrt(np.dot(vec, vec))
        if norm == 0.0:
            log.warning(
                "zero gradient record at round=%d slot=%d; substituting e1",
                rec.round,
                rec.slot,
            )
            vec = np.zeros_like(vec)
            vec[0] = 1.0
        else:
            vec = vec / norm
        rows.append(vec)
        index.append((rec.round, rec.slot))
    return FeatureMatrix(
        values=np.stack(rows),
        index=index,
        clients=trace.clients,
        rounds=trace.rounds,
    )


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centers[i] = x[rng.integers(n)]
            continue
        probs = d2 / total
        centers[i] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int):
    k = centers.shape[0]
    labels = None
    prev_inertia = np.inf
    for _ in range(max_iter):
        d2 = (
            np.sum(x**2, axis=1)[:, None]
            + np.sum(centers**2, axis=1)[None, :]
            - 2.0 * (x @ centers.T)
        )
        new_labels = np.argmin(d2, axis=1)
        # repair empty clusters with the point farthest from its own centroid
        for c in range(k):
            if not np.any(new_labels == c):
                resid = np.sqrt(np.sum((x - centers[new_labels]) ** 2, axis=1))
                far = int(np.argmax(resid))
                new_labels[far] = c
                centers[c] = x[far]
        inertia = float(np.sum((x - centers[new_labels]) ** 2))
        assert inertia <= prev_inertia + 1e-9, "k-means inertia increased"
        if labels is not None and np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        for c in range(k):
            centers[c] = x[labels == c].mean(axis=0)
        prev_inertia = inertia
    final_inertia = float(np.sum((x - centers[labels]) ** 2))
    return labels, final_inertia


def kmeans_points(
    x: np.ndarray,
    k: int,
    seed: int,
    n_restarts: int = 10,
    max_iter: int = 300,
) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding on raw points; best of
    `n_restarts` by inertia, deterministic under seed."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise UsageError("points must be a 2-d array")
    if not 1 <= k <= x.shape[0]:
        raise UsageError(f"k={k} out of range for {x.shape[0]} points")
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(n_restarts):
        centers = _kmeans_pp_init(x, k, rng)
        labels, inertia = _lloyd(x, centers.copy(), max_iter)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


def kmeans(features: FeatureMatrix, k: int, seed: int) -> np.ndarray:
    """Cluster all K*T feature rows with Euclidean k-means."""
    return kmeans_points(features.values, k, seed)


def spectral_points(x: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Spectral clustering: Gaussian affinity with median-distance bandwidth,
    symmetric normalized Laplacian, k smallest eigenvectors, row-normalized
    embedding, then k-means."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"k={k} out of range for {n} points")
    d2 = (
        np.sum(x**2, axis=1)[:, None]
        + np.sum(x**2, axis=1)[None, :]
        - 2.0 * (x @ x.T)
    )
    np.clip(d2, 0.0, None, out=d2)
    dist = np.sqrt(d2)
    iu = np.triu_indices(n, k=1)
    gamma = float(np.median(dist[iu])) if iu[0].size else 0.0
    if gamma == 0.0:
        # all points (nearly) identical: a single cluster
        return np.zeros(n, dtype=np.int64)
    affinity = np.exp(-d2 / (2.0 * gamma * gamma))
    np.fill_diagonal(affinity, 0.0)
    degree = affinity.sum(axis=1)
    degree[degree == 0.0] = 1.0
    inv_sqrt = 1.0 / np.sqrt(degree)
    lap = np.eye(n) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0
    _, vecs = symmetric_eigen(lap, k)
    norms = np.sqrt(np.sum(vecs**2, axis=1))
    norms[norms == 0.0] = 1.0
    embed = vecs / norms[:, None]
    return kmeans_points(embed, k, seed)


def spectral(features: FeatureMatrix, k: int, seed: int) -> np.ndarray:
    return spectral_points(features.values, k, seed)


def solve_lsap(cost: np.ndarray) -> Tuple[np.ndarray, float]:
    """Exact minimum-cost bijection rows -> columns (shortest augmenting
    paths with potentials, O(n^3)). Ties resolve to the lowest column index.

    Returns (assignment with assignment[row] = col, total cost)."""
    d = np.asarray(cost, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise UsageError(f"cost matrix must be square, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise UsageError("cost matrix must be finite")
    n = d.shape[0]
    inf = np.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match = [0] * (n + 1)  # match[col] = row (1-based, 0 = free)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = d[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    assignment = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assignment[match[j] - 1] = j - 1
    total = float(d[np.arange(n), assignment].sum())
    return assignment, total


def greedy_match(features: FeatureMatrix) -> np.ndarray:
    """Chain optimal round-to-round alignments into client groups.

    For each consecutive round pair, D[i, j] = 1 - cos(feat_t[i],
    feat_{t+1}[j]) is solved as an LSAP; chains are composed forward from
    round 0 and labeled by their round-0 slot. Returns one label per row of
    the feature matrix (round asc, slot asc)."""
    k, t = features.clients, features.rounds
    if features.values.shape[0] != k * t:
        raise UsageError("greedy match needs exactly K rows per round")
    by_round = features.values.reshape(t, k, -1)
    labels = np.empty((t, k), dtype=np.int64)
    labels[0] = np.arange(k)
    for r in range(t - 1):
        # rows are unit-normalized, so cosine distance is 1 - dot
        dist = 1.0 - by_round[r] @ by_round[r + 1].T
        alignment, _ = solve_lsap(dist)
        for i in range(k):
            labels[r + 1, alignment[i]] = labels[r, i]
    return labels.reshape(-1)
