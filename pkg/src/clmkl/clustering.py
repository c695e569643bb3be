"""Kernel k-means and the soft cluster-likelihood model.

Cluster membership of a point x is scored by c_j(x) proportional to
exp(-tau * dist^2(x, S_j)), where dist is measured in the feature space of a
chosen clustering kernel. tau interpolates between uniform membership
(tau = 0) and hard assignment (tau = inf) and is calibrated against a target
average evenness.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # per-point cluster index in [0, l)
    l: int
    clustering_error: float
    iterations: int = 0

    def member_sets(self) -> list:
        return [np.flatnonzero(self.labels == j) for j in range(self.l)]


@dataclass
class LikelihoodModel:
    """Everything needed to evaluate cluster likelihoods on train or test
    points: the member sets, the temperature tau, and the per-cluster
    intra-cluster kernel means (the constant term of the kernelized
    point-to-centroid distance)."""

    member_sets: list  # l disjoint index arrays covering [0, n)
    tau: float
    intra_cluster_term: np.ndarray  # length l: mean of k0 over each cluster's pairs
    clustering_kernel_id: str = ""

    def __post_init__(self):
        self.member_sets = [np.asarray(s, dtype=np.intp) for s in self.member_sets]
        self.intra_cluster_term = np.asarray(self.intra_cluster_term, dtype=np.float64)
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if np.any(self.intra_cluster_term < -1e-10):
            raise ValueError("intra-cluster terms must be nonnegative")
        sizes = sum(len(s) for s in self.member_sets)
        joined = np.concatenate(self.member_sets) if self.member_sets else np.array([])
        if not np.array_equal(np.sort(joined), np.arange(sizes)):
            raise ValueError("member sets must be disjoint and cover the training set")

    @property
    def l(self) -> int:
        return len(self.member_sets)

    @property
    def n(self) -> int:
        return sum(len(s) for s in self.member_sets)


def point_cluster_distances(K0, labels, l):
    """n x l matrix of squared feature-space distances to cluster means."""
    n = K0.shape[0]
    dist = np.empty((n, l))
    diag = np.diag(K0)
    for j in range(l):
        idx = np.flatnonzero(labels == j)
        if len(idx) == 0:
            dist[:, j] = np.inf
            continue
        cross = K0[:, idx].mean(axis=1)
        intra = K0[np.ix_(idx, idx)].mean()
        dist[:, j] = diag - 2.0 * cross + intra
    return np.maximum(dist, 0.0)


def kernel_kmeans(
    K0,
    l: int,
    restarts: int = 10,
    max_iter: int = 100,
    seed=0,
) -> ClusterAssignment:
    """Kernel k-means over a precomputed Gram matrix, best of `restarts`
    seeded random initializations (each starts from l distinct points).

    Empty clusters are repaired by moving in the point currently farthest
    from its own center, so exactly l clusters survive.
    """
    K0 = np.asarray(K0, dtype=np.float64)
    n = K0.shape[0]
    if l < 1 or l > n:
        raise ValueError(f"cluster count {l} outside [1, {n}]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    diag = np.diag(K0)

    def repair_empty(labels):
        # move the worst-fitted point into each empty cluster
        dist = point_cluster_distances(K0, labels, l)
        for j in range(l):
            if not np.any(labels == j):
                worst = int(np.argmax(dist[np.arange(n), labels]))
                labels[worst] = j
                dist = point_cluster_distances(K0, labels, l)
        return dist

    best = None
    for _ in range(restarts):
        seeds = rng.choice(n, size=l, replace=False)
        # initial assignment: nearest seed point in feature space
        d0 = diag[:, None] - 2.0 * K0[:, seeds] + diag[seeds][None, :]
        labels = np.argmin(d0, axis=1)
        labels[seeds] = np.arange(l)  # each seed anchors its own cluster

        iterations = 0
        for _ in range(max_iter):
            iterations += 1
            dist = repair_empty(labels)
            new_labels = np.argmin(dist, axis=1)
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels

        dist = repair_empty(labels)  # max_iter exit may leave a cluster empty
        err = float(dist[np.arange(n), labels].sum())
        if best is None or err < best.clustering_error:
            best = ClusterAssignment(labels.copy(), l, err, iterations)
    return best


def build_likelihood_model(
    K0, assignment: ClusterAssignment, tau: float, kernel_id: str = ""
) -> LikelihoodModel:
    K0 = np.asarray(K0, dtype=np.float64)
    sets = assignment.member_sets()
    intra = np.array(
        [max(K0[np.ix_(s, s)].mean(), 0.0) if len(s) else 0.0 for s in sets]
    )
    return LikelihoodModel(sets, tau, intra, kernel_id)


def feature_distance_sq(point_rows, self_vals, model: LikelihoodModel) -> np.ndarray:
    """Squared feature-space distances from points to each cluster mean.

    point_rows: (n_pts, n_train) kernel evaluations against the training set;
    self_vals: k0(x, x) per point (any per-point constant yields the same
    likelihoods, since only differences across clusters matter).
    Returns an (n_pts, l) matrix, clamped at zero.
    """
    rows = np.atleast_2d(np.asarray(point_rows, dtype=np.float64))
    self_vals = np.asarray(self_vals, dtype=np.float64).reshape(-1)
    if rows.shape[0] != self_vals.shape[0]:
        raise ValueError("one self-evaluation per point row required")
    dist = np.empty((rows.shape[0], model.l))
    for j, idx in enumerate(model.member_sets):
        cross = rows[:, idx].mean(axis=1)
        dist[:, j] = self_vals - 2.0 * cross + model.intra_cluster_term[j]
    return np.maximum(dist, 0.0)


def surrogate_self_vals(point_rows, model: LikelihoodModel) -> np.ndarray:
    """Per-point self-evaluation stand-ins making all distances nonnegative.

    Likelihoods are invariant to a per-point shift of dist^2 across clusters,
    so when k0(x, x) is unavailable at prediction time any value at least
    max_j (2 * cross_j - intra_j) gives the exact same memberships.
    """
    rows = np.atleast_2d(np.asarray(point_rows, dtype=np.float64))
    shift = np.full(rows.shape[0], -np.inf)
    for j, idx in enumerate(model.member_sets):
        cross = rows[:, idx].mean(axis=1)
        shift = np.maximum(shift, 2.0 * cross - model.intra_cluster_term[j])
    return np.maximum(shift, 0.0)


def likelihoods(dist_sq, tau: float) -> np.ndarray:
    """Row-stochastic membership matrix c_j(x) = softmax_j(-tau * dist^2).

    tau = 0 gives uniform rows; tau = inf gives the indicator of the nearest
    cluster with ties broken toward the lowest cluster index.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    d = np.atleast_2d(np.asarray(dist_sq, dtype=np.float64))
    n, l = d.shape
    if np.isinf(tau):
        c = np.zeros((n, l))
        c[np.arange(n), np.argmin(d, axis=1)] = 1.0
        return c
    z = -tau * (d - d.min(axis=1, keepdims=True))
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def average_evenness(dist_sq, tau: float) -> float:
    """Mean over points of (sum_j e_j) / (l * max_j e_j), e_j = exp(-tau d_j).

    Equals 1 at tau = 0 and tends to 1/l as tau grows (strictly decreasing
    whenever some distances differ)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    d = np.atleast_2d(np.asarray(dist_sq, dtype=np.float64))
    l = d.shape[1]
    if np.isinf(tau):
        ties = (d == d.min(axis=1, keepdims=True)).sum(axis=1)
        return float(np.mean(ties) / l)
    e = np.exp(-tau * (d - d.min(axis=1, keepdims=True)))
    return float(np.mean(e.sum(axis=1)) / l)


def calibrate_tau(dist_sq, target_ae: float, tol: float = 1e-3) -> float:
    """Find tau with average evenness within tol of the target by binary
    search, growing the upper bracket geometrically first.

    Targets outside the achievable (1/l, 1] range are reported with a warning
    and the nearest achievable endpoint is returned.
    """
    d = np.atleast_2d(np.asarray(dist_sq, dtype=np.float64))
    l = d.shape[1]
    if target_ae > 1.0 or target_ae <= 1.0 / l:
        warnings.warn(
            f"target evenness {target_ae} outside achievable range (1/{l}, 1]; "
            "returning the nearest endpoint",
            stacklevel=2,
        )
        return 0.0 if target_ae > 1.0 else np.inf
    if target_ae == 1.0:
        return 0.0

    hi = 1.0
    for _ in range(200):
        if average_evenness(d, hi) < target_ae:
            break
        hi *= 2.0
    else:
        warnings.warn(
            f"evenness {target_ae} unreachable (all distances equal?); "
            f"returning bracket end {hi}",
            stacklevel=2,
        )
        return hi

    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        ae = average_evenness(d, mid)
        if abs(ae - target_ae) <= tol:
            return mid
        if ae > target_ae:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def train_likelihoods(K0, model: LikelihoodModel) -> np.ndarray:
    """Likelihood matrix of the training points under the model."""
    K0 = np.asarray(K0, dtype=np.float64)
    d = feature_distance_sq(K0, np.diag(K0), model)
    return likelihoods(d, model.tau)


def uniform_likelihoods(n: int, l: int = 1) -> np.ndarray:
    return np.full((n, l), 1.0 / l)
