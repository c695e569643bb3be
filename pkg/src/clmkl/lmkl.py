"""Gated localized MKL baseline with kernelized gating.

The gating weights eta_m(x) are a softmax over per-kernel affine scores in
the feature space of a reference kernel k0, parameterized by representation
coefficients r (one column per kernel) so that only Gram-matrix products are
ever needed. Training alternates an SVM solve on the gated kernel with a
backtracked step along the gating gradient of the SVM dual value J; the
per-iteration gradient machinery costs O(n^2 M).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .svm import solve_hinge


@dataclass
class GatingState:
    r: np.ndarray  # n x M representation coefficients of the gating vectors
    v0: np.ndarray  # M gating biases
    clustering_kernel_id: str = ""

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.v0 = np.asarray(self.v0, dtype=np.float64)
        if not (np.all(np.isfinite(self.r)) and np.all(np.isfinite(self.v0))):
            raise ValueError("gating parameters must be finite")


@dataclass
class LmklModel:
    gating: GatingState
    alpha: np.ndarray
    bias: float
    C: float
    y: np.ndarray | None = None
    train_eta: np.ndarray | None = None  # n x M gating values on training points
    kernel_names: list = field(default_factory=list)
    j_history: list = field(default_factory=list)

    @property
    def n_train(self) -> int:
        return len(self.alpha)


def gating_values(state: GatingState, K0) -> np.ndarray:
    """Row-stochastic n x M gating matrix: softmax of K0 r + v0 per point."""
    scores = np.asarray(K0, dtype=np.float64) @ state.r + state.v0[None, :]
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=1, keepdims=True)


def gated_kernel(eta, kernels) -> np.ndarray:
    """sum_m eta_m(x) k_m(x, x') eta_m(x')."""
    eta = np.asarray(eta, dtype=np.float64)
    n, M = eta.shape
    if len(kernels) != M:
        raise ValueError(f"{M} gating columns but {len(kernels)} kernels")
    out = np.zeros((n, n))
    for m in range(M):
        out += np.outer(eta[:, m], eta[:, m]) * kernels[m]
    return out


def gating_gradient(alpha, y, eta, kernels):
    """Softmax-score gradient of the SVM dual value J at fixed alpha.

    Returns (g, g0): g[i, m] is the coefficient of the gradient of J with
    respect to the m-th gating vector in the reference feature expansion
    (equivalently dJ/dscore_im), and g0 the gradient for the gating biases.
    Built from B[i, m] = sum_i' a_i' k_m(x_i, x_i') eta_m(x_i') and its
    eta-weighted row sums, so the cost is O(n^2 M).
    """
    a = np.asarray(alpha, dtype=np.float64) * np.asarray(y, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    n, M = eta.shape
    B = np.empty((n, M))
    for m in range(M):
        B[:, m] = kernels[m] @ (a * eta[:, m])
    A = (eta * B).sum(axis=1)
    g = -(a[:, None]) * eta * (B - A[:, None])
    return g, g.sum(axis=0)


def dual_value(alpha, y, eta, kernels) -> float:
    """J = sum(alpha) - 0.5 a' Kgated a at fixed gating."""
    a = np.asarray(alpha, dtype=np.float64) * np.asarray(y, dtype=np.float64)
    val = float(np.sum(alpha))
    for m, K in enumerate(kernels):
        e = a * np.asarray(eta)[:, m]
        val -= 0.5 * float(e @ K @ e)
    return val


def train_lmkl(
    kernels,
    K0,
    y,
    C: float,
    steps: int = 50,
    svm_tol: float = 1e-6,
    min_step: float = 1e-8,
    kernel_names=None,
    clustering_kernel_id: str = "",
) -> LmklModel:
    """Alternating SVM / gating-descent training.

    Each outer step solves the SVM on the current gated kernel, then
    backtracks (halving from 1) along the negative gradient until J
    decreases; J is re-evaluated with a fresh SVM solve at each probe since
    it is defined at the optimal alpha. Stops after `steps` outer iterations
    or when no decreasing step exists. Returns the best-J iterate.
    """
    kernels = [np.asarray(K, dtype=np.float64) for K in kernels]
    K0 = np.asarray(K0, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    M = len(kernels)
    state = GatingState(np.zeros((n, M)), np.zeros(M), clustering_kernel_id)

    def solve_at(s):
        eta = gating_values(s, K0)
        sol = solve_hinge(gated_kernel(eta, kernels), y, C, tol=svm_tol)
        return eta, sol

    eta, sol = solve_at(state)
    best = (state, eta, sol)
    history = [sol.objective]

    for _ in range(steps):
        g, g0 = gating_gradient(sol.alpha, y, eta, kernels)
        if max(np.abs(g).max(), np.abs(g0).max()) == 0.0:
            break  # flat gating objective (e.g. M = 1)
        mu = 1.0
        improved = None
        while mu >= min_step:
            cand = GatingState(state.r - mu * g, state.v0 - mu * g0,
                               clustering_kernel_id)
            cand_eta, cand_sol = solve_at(cand)
            if cand_sol.objective < sol.objective:
                improved = (cand, cand_eta, cand_sol)
                break
            mu *= 0.5
        if improved is None:
            break
        state, eta, sol = improved
        history.append(sol.objective)
        if sol.objective < best[2].objective:
            best = (state, eta, sol)

    state, eta, sol = best
    return LmklModel(
        gating=state,
        alpha=sol.alpha,
        bias=sol.bias,
        C=C,
        y=y.copy(),
        train_eta=eta,
        kernel_names=list(kernel_names) if kernel_names else [],
        j_history=history,
    )


def predict_lmkl(model: LmklModel, cross_values, cluster_cross) -> np.ndarray:
    """f(x) = sum_i a_i sum_m eta_m(x_i) k_m(x_i, x) eta_m(x) + b, with the
    test gating computed from the reference kernel's cross matrix."""
    crosses = [np.asarray(Kx, dtype=np.float64) for Kx in cross_values]
    M = model.train_eta.shape[1]
    if len(crosses) != M:
        raise ValueError(f"model expects {M} cross matrices, got {len(crosses)}")
    cluster_cross = np.asarray(cluster_cross, dtype=np.float64)
    n_test = cluster_cross.shape[0]
    for Kx in crosses:
        if Kx.shape != (n_test, model.n_train):
            raise ValueError(
                f"cross matrix shape {Kx.shape} incompatible with "
                f"{(n_test, model.n_train)}"
            )
    scores = cluster_cross @ model.gating.r + model.gating.v0[None, :]
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    eta_test = e / e.sum(axis=1, keepdims=True)

    a = model.alpha * model.y
    f = np.zeros(n_test)
    for m in range(M):
        f += eta_test[:, m] * (crosses[m] @ (a * model.train_eta[:, m]))
    return f + model.bias
