"""Point-set similarity metrics.

Two families live here:
  * Directional mean squared nearest-neighbor errors and their sum, the
    Chamfer distance. Nearest neighbors are exact (k-d tree), never
    approximated, because these are reporting metrics.
  * Earth mover's distance between equal-size sets: the mean Euclidean length
    of the best bijection. `emd_exact` solves the assignment optimally and is
    the oracle; `emd_approx` runs an epsilon-scaling auction with O(n)
    auxiliary memory and is the trainable variant.

Reported tables conventionally scale metric values by 10,000; use
METRIC_SCALE when writing them out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

METRIC_SCALE = 10_000.0

EMD_EXACT_MAX_POINTS = 1024  # the dense assignment solve is O(n^3); oracle use only


@dataclass
class DirectionalErrors:
    """Mean squared distance from pred to gt, from gt to pred, and their sum."""

    pred_to_gt: float
    gt_to_pred: float
    chamfer: float


@dataclass
class Matching:
    """A bijection between two equal-size clouds and its mean Euclidean cost.

    `assignment[i] = j` pairs point i of the first cloud with point j of the
    second. `converged` is False only when the approximate solver ran out of
    its iteration budget and returned its best-so-far assignment.
    """

    assignment: np.ndarray
    cost: float
    converged: bool = True


def directional_errors(pred: np.ndarray, gt: np.ndarray) -> DirectionalErrors:
    """Exact directional mean squared nearest-neighbor errors between clouds."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(gt) == 0:
        raise ValueError("directional errors need two non-empty clouds")
    d_pred, _ = cKDTree(gt).query(pred)
    d_gt, _ = cKDTree(pred).query(gt)
    # sorted reduction: values are bitwise independent of point order
    pred_to_gt = float(np.mean(np.sort(d_pred**2)))
    gt_to_pred = float(np.mean(np.sort(d_gt**2)))
    return DirectionalErrors(pred_to_gt, gt_to_pred, pred_to_gt + gt_to_pred)


def matched_cost(s1: np.ndarray, s2: np.ndarray, assignment: np.ndarray) -> float:
    """Mean Euclidean length of the pairs (s1[i], s2[assignment[i]]).

    The reduction runs over sorted lengths, so the cost is bitwise independent
    of point order."""
    diff = np.asarray(s1, dtype=np.float64) - np.asarray(s2, dtype=np.float64)[assignment]
    return float(np.mean(np.sort(np.linalg.norm(diff, axis=1))))


def _check_pair(s1, s2):
    s1 = np.ascontiguousarray(s1, dtype=np.float64).reshape(-1, 3)
    s2 = np.ascontiguousarray(s2, dtype=np.float64).reshape(-1, 3)
    if s1.shape != s2.shape:
        raise ValueError(f"clouds must have equal size, got {s1.shape[0]} and {s2.shape[0]}")
    if len(s1) == 0:
        raise ValueError("earth mover's distance needs non-empty clouds")
    return s1, s2


def emd_exact(s1: np.ndarray, s2: np.ndarray) -> Matching:
    """Globally optimal bijection for the mean-Euclidean-distance objective.

    Builds the dense n x n distance matrix and solves the linear sum
    assignment problem exactly, so it is capped at EMD_EXACT_MAX_POINTS.
    """
    s1, s2 = _check_pair(s1, s2)
    n = len(s1)
    if n > EMD_EXACT_MAX_POINTS:
        raise ValueError(f"emd_exact supports at most {EMD_EXACT_MAX_POINTS} points, got {n}")
    dist = np.linalg.norm(s1[:, None, :] - s2[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(dist)
    assignment = np.empty(n, dtype=np.int64)
    assignment[rows] = cols
    return Matching(assignment=assignment, cost=matched_cost(s1, s2, assignment))


@njit(cache=True, nogil=True)
def _auction_assign(s1, s2, eps_start, eps_final, eps_scale, bids_per_scale):  # pragma: no cover
    """Forward auction with epsilon scaling; prices persist across scales.

    Auxiliary memory is three length-n vectors; distances are recomputed on
    the fly. Returns (person -> object assignment, converged flag). Unassigned
    persons are left at -1 when the bid budget runs out.
    """
    n = s1.shape[0]
    price = np.zeros(n, dtype=np.float64)
    owner = np.full(n, -1, dtype=np.int64)
    assigned = np.full(n, -1, dtype=np.int64)
    eps = eps_start if eps_start > eps_final else eps_final
    while True:
        for j in range(n):
            owner[j] = -1
        for i in range(n):
            assigned[i] = -1
        unassigned = n
        bids = 0
        person = 0
        while unassigned > 0 and bids < bids_per_scale:
            while assigned[person] != -1:
                person += 1
                if person == n:
                    person = 0
            best_v = -1e300
            second_v = -1e300
            best_j = 0
            for j in range(n):
                dx = s1[person, 0] - s2[j, 0]
                dy = s1[person, 1] - s2[j, 1]
                dz = s1[person, 2] - s2[j, 2]
                v = -np.sqrt(dx * dx + dy * dy + dz * dz) - price[j]
                if v > best_v:
                    second_v = best_v
                    best_v = v
                    best_j = j
                elif v > second_v:
                    second_v = v
            if n == 1:
                second_v = best_v - 1.0
            price[best_j] += best_v - second_v + eps
            previous = owner[best_j]
            if previous >= 0:
                assigned[previous] = -1
                unassigned += 1
            owner[best_j] = person
            assigned[person] = best_j
            unassigned -= 1
            bids += 1
        if unassigned > 0:
            return assigned, False
        if eps <= eps_final:
            return assigned, True
        eps *= eps_scale
        if eps < eps_final:
            eps = eps_final


def emd_approx(
    s1: np.ndarray,
    s2: np.ndarray,
    eps: float | None = None,
    iters: int | None = None,
    eps_start: float = 1.0,
    eps_scale: float = 0.25,
) -> Matching:
    """Near-optimal bijection via an epsilon-scaling auction, O(n) extra memory.

    The auction runs at a decreasing epsilon schedule (eps_start, then
    * eps_scale per stage) down to `eps`, which defaults to 1e-4 / n; the
    returned cost then exceeds the optimum by at most `eps` on the mean. Each
    stage spends at most `iters` bids (default 50 * n); if the budget runs out
    the best-so-far assignment is completed greedily and `converged` is False.
    """
    s1, s2 = _check_pair(s1, s2)
    n = len(s1)
    if eps is None:
        eps = 1e-4 / n
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if iters is None:
        iters = 50 * n
    if not 0.0 < eps_scale < 1.0:
        raise ValueError(f"eps_scale must lie in (0, 1), got {eps_scale}")
    assignment, converged = _auction_assign(s1, s2, float(eps_start), float(eps), float(eps_scale), int(iters))
    assignment = np.asarray(assignment)
    if not converged:
        assignment = _complete_greedy(s1, s2, assignment)
    return Matching(assignment=assignment, cost=matched_cost(s1, s2, assignment), converged=bool(converged))


def _complete_greedy(s1, s2, assignment):
    assignment = assignment.copy()
    taken = np.zeros(len(s2), dtype=bool)
    taken[assignment[assignment >= 0]] = True
    free_objects = list(np.flatnonzero(~taken))
    for i in np.flatnonzero(assignment < 0):
        d = np.linalg.norm(s2[free_objects] - s1[i], axis=1)
        pick = int(np.argmin(d))
        assignment[i] = free_objects.pop(pick)
    return assignment


def emd_gradient(s1: np.ndarray, s2: np.ndarray, matching: Matching) -> np.ndarray:
    """Gradient of the mean matched distance w.r.t. s1, matching held fixed.

    Each row is (x - phi(x)) / (n * ||x - phi(x)||); pairs closer than 1e-12
    get a zero gradient to avoid the division.
    """
    s1 = np.asarray(s1, dtype=np.float64).reshape(-1, 3)
    s2 = np.asarray(s2, dtype=np.float64).reshape(-1, 3)
    n = len(s1)
    diff = s1 - s2[matching.assignment]
    dist = np.linalg.norm(diff, axis=1)
    grads = np.zeros_like(diff)
    ok = dist > 1e-12
    grads[ok] = diff[ok] / (n * dist[ok, None])
    return grads
