"""Point-set operations: sphere splitting, subsampling and merge-and-sample.

Clouds are plain (N, 3) float arrays. All seeded operations are bitwise
reproducible given (input, seed) and share no mutable state, so they are safe
to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass
class ShapeSample:
    """One training/evaluation item produced by a sphere split.

    `complete` (2048, 3), `partial` (2048, 3) and `missing` (1024, 3) are all
    resampled from the same source cloud; `center`/`radius` witness the split:
    every missing point lies within `radius` of `center`, every partial point
    outside it.
    """

    complete: np.ndarray
    partial: np.ndarray
    missing: np.ndarray
    radius: float
    center: np.ndarray


@dataclass
class LabeledCloud:
    """Points with a {0, 1} per-point origin label.

    Label 0 marks points that came from the observed partial cloud, label 1
    points that came from the predicted missing part. When produced by
    merge_and_sample, `source_indices` holds each point's index into the
    pre-sampling concatenation so gradients can be routed back through the
    (fixed) selection.
    """

    points: np.ndarray
    labels: np.ndarray
    source_indices: np.ndarray | None = None


def sphere_split(cloud: np.ndarray, center, radius: float):
    """Partition a cloud into (inside, outside) of the sphere at `center`.

    Points exactly on the boundary go to `inside`. The two sides preserve the
    input order, and their concatenation is a permutation-free partition of
    the input multiset.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    center = np.asarray(center, dtype=cloud.dtype).reshape(3)
    d2 = ((cloud - center) ** 2).sum(axis=1)
    mask = d2 <= radius * radius
    return cloud[mask], cloud[~mask]


def _resample(rng: np.random.Generator, points: np.ndarray, k: int) -> np.ndarray:
    # uniform, without replacement unless the side is smaller than its target
    idx = rng.choice(len(points), size=k, replace=len(points) < k)
    return points[idx]


def make_sample(cloud: np.ndarray, radius: float, seed, max_retries: int = 16) -> ShapeSample:
    """Split a normalized cloud around a random surface point and resample.

    The center is drawn uniformly among the cloud's own points. Splits that
    leave either side empty are retried with a fresh center, up to
    `max_retries` times.
    """
    if not 0.0 < radius < 1.0:
        raise ValueError(f"radius must lie in (0, 1), got {radius}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        center = cloud[rng.integers(len(cloud))]
        inside, outside = sphere_split(cloud, center, radius)
        if len(inside) and len(outside):
            return ShapeSample(
                complete=_resample(rng, cloud, 2048),
                partial=_resample(rng, outside, 2048),
                missing=_resample(rng, inside, 1024),
                radius=float(radius),
                center=center.copy(),
            )
    raise RuntimeError(f"no usable sphere split after {max_retries} attempts (radius={radius})")


@njit(cache=True)
def _fps_select(points, k, first):  # pragma: no cover
    n = points.shape[0]
    indices = np.empty(k, dtype=np.int64)
    indices[0] = first
    d2 = np.empty(n, dtype=np.float64)
    for i in range(n):
        dx = points[i, 0] - points[first, 0]
        dy = points[i, 1] - points[first, 1]
        dz = points[i, 2] - points[first, 2]
        d2[i] = dx * dx + dy * dy + dz * dz
    d2[first] = -1.0  # selected points never re-picked, even among duplicates
    for t in range(1, k):
        pick = 0
        best = d2[0]
        for i in range(1, n):
            if d2[i] > best:  # strict: first index wins ties
                best = d2[i]
                pick = i
        indices[t] = pick
        for i in range(n):
            dx = points[i, 0] - points[pick, 0]
            dy = points[i, 1] - points[pick, 1]
            dz = points[i, 2] - points[pick, 2]
            nd = dx * dx + dy * dy + dz * dz
            if nd < d2[i]:
                d2[i] = nd
        d2[pick] = -1.0
    return indices


def farthest_point_sample(cloud: np.ndarray, k: int, seed):
    """Greedy max-min subsampling (iterative farthest point selection).

    The first point is a seeded uniform draw; each following point maximizes
    its minimum distance to the already-selected set (first index wins ties).
    Returns (points, source indices).
    """
    n = len(cloud)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    indices = _fps_select(np.ascontiguousarray(cloud, dtype=np.float64), k, first)
    return cloud[indices], indices


def minimum_density_sample(cloud: np.ndarray, k: int, sigma: float, seed):
    """Greedy subsampling by minimum Gaussian density against the selected set.

    At each step the point with the smallest sum of exp(-d^2 / (2 sigma^2))
    over already-selected points is chosen; ties break to the lowest index.
    The first point is a seeded uniform draw, as in farthest point sampling.
    Returns (points, source indices).
    """
    n = len(cloud)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    indices = np.empty(k, dtype=np.int64)
    indices[0] = rng.integers(n)
    selected = np.zeros(n, dtype=bool)
    selected[indices[0]] = True
    density = np.zeros(n, dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    for t in range(1, k):
        last = cloud[indices[t - 1]]
        density += np.exp(-((cloud - last) ** 2).sum(axis=1) * inv)
        pick = int(np.argmin(np.where(selected, np.inf, density)))
        indices[t] = pick
        selected[pick] = True
    return cloud[indices], indices


def merge_and_sample(
    partial: np.ndarray,
    predicted: np.ndarray,
    n: int = 2048,
    method: str = "ifps",
    seed=0,
    sigma: float = 0.05,
) -> LabeledCloud:
    """Concatenate partial + predicted clouds, label origins, subsample to n.

    Labels survive the subsampling through the selection indices, which are
    retained on the result for gradient routing.
    """
    merged = np.concatenate([partial, predicted], axis=0)
    if n > len(merged):
        raise ValueError(f"cannot sample {n} points from {len(merged)}")
    if method == "ifps":
        _, idx = farthest_point_sample(merged, n, seed)
    elif method == "mds":
        _, idx = minimum_density_sample(merged, n, sigma, seed)
    else:
        raise ValueError(f"unknown sampling method {method!r} (expected 'ifps' or 'mds')")
    labels = (idx >= len(partial)).astype(np.int64)
    return LabeledCloud(points=merged[idx], labels=labels, source_indices=idx)
