"""
Deterministic Lloyd k-means with greedy farthest-point seeding.

Shared by spectral clustering and the colour-model initialization.  No
randomness: the first centre is the point farthest from the data mean
(ties broken by lowest index), each following centre is the point with
the largest distance to its nearest chosen centre.
"""

import numpy as np


def farthest_point_init(points, k):
    """Indices of k greedily chosen, mutually distant points."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    k = min(k, n)
    mean = points.mean(axis=0)
    first = int(np.argmax(np.linalg.norm(points - mean, axis=1)))
    chosen = [first]
    min_dist = np.linalg.norm(points - points[first], axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def lloyd(points, k, max_iterations=50, tol=1e-6):
    """Run k-means; returns (labels, centers).

    k is reduced to the number of distinct points if needed.  Empty clusters
    are reseeded with the point farthest from its assigned centre.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n == 0:
        raise ValueError("cannot cluster zero points")
    n_distinct = len(np.unique(points, axis=0))
    k = max(1, min(k, n_distinct))
    centers = points[farthest_point_init(points, k)].copy()
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iterations):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = points[labels == j]
            if len(members) > 0:
                new_centers[j] = members.mean(axis=0)
            else:
                worst = int(np.argmax(d2[np.arange(n), labels]))
                new_centers[j] = points[worst]
                labels[worst] = j
        shift = np.linalg.norm(new_centers - centers, axis=1).max()
        centers = new_centers
        if shift < tol:
            break
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, centers


def sse(points, labels, centers):
    """Within-cluster sum of squared errors."""
    points = np.asarray(points, dtype=np.float64)
    return float(((points - centers[labels]) ** 2).sum())
