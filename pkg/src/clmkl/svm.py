"""Dual SVM solvers over precomputed kernels.

Both the hinge (classification) and epsilon-insensitive (regression) duals
are box-and-single-equality quadratic programs, solved here by sequential
minimal optimization on a fully materialized kernel: the first working-set
index is the maximal violator, the second is picked by the second-order
(largest guaranteed decrease) rule. The regression dual is mapped onto the
same core by stacking the positive and negative parts of each coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolverError(RuntimeError):
    """SMO failed to reach the requested KKT tolerance within its budget."""


@dataclass
class DualSolution:
    alpha: np.ndarray  # hinge: alpha in [0, C]; regression: alpha+ - alpha- in [-C, C]
    bias: float
    objective: float  # value of the maximized dual
    iterations: int


def _smo(Q, p, z, C, tol, max_pairs, trace=None):
    """Minimize 0.5 a'Qa + p'a  s.t.  z'a = 0,  0 <= a <= C.

    Returns (a, bias, iterations). The first working-set index is the
    maximal violator; the second is chosen by the second-order rule
    (largest guaranteed objective decrease), which avoids the slow crawl of
    the purely first-order pair on near-singular kernels. The bias is the
    average of -z*grad over free variables, or the midpoint of the
    KKT-feasible interval when every variable sits on a bound. When `trace`
    is a list, the negated objective (the maximized dual) is appended after
    every pair update.
    """
    n = len(p)
    a = np.zeros(n)
    G = p.copy()  # gradient of the objective at a = 0
    pos = z > 0
    diag_Q = np.diag(Q).copy()

    for it in range(max_pairs):
        if trace is not None:
            trace.append(float(-(0.5 * a @ Q @ a + p @ a)))
        minus_zG = -z * G
        up = (pos & (a < C)) | (~pos & (a > 0.0))
        low = (~pos & (a < C)) | (pos & (a > 0.0))
        if not up.any() or not low.any():
            break
        cand_up = np.where(up, minus_zG, -np.inf)
        cand_low = np.where(low, minus_zG, np.inf)
        i = int(np.argmax(cand_up))
        m_up = cand_up[i]
        if m_up - cand_low.min() <= tol:
            break
        # second-order choice of j among sufficiently violating candidates
        b_vec = m_up - minus_zG
        quad_vec = diag_Q[i] + diag_Q - 2.0 * (z[i] * z) * Q[i, :]
        np.maximum(quad_vec, 1e-12, out=quad_vec)
        score = np.where(low & (b_vec > 0), -(b_vec**2) / quad_vec, np.inf)
        j = int(np.argmin(score))

        old_i, old_j = a[i], a[j]
        if z[i] != z[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = 1e-12
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = -diff
                if a[j] > C:
                    a[j] = C
                    a[i] = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = 1e-12
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            else:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = total
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = total
        G += Q[:, i] * (a[i] - old_i) + Q[:, j] * (a[j] - old_j)
    else:
        raise SolverError(
            f"SMO did not reach tolerance {tol} within {max_pairs} pair updates"
        )

    minus_zG = -z * G
    free = (a > 0.0) & (a < C)
    if free.any():
        bias = float(minus_zG[free].mean())
    else:
        up = (pos & (a < C)) | (~pos & (a > 0.0))
        low = (~pos & (a < C)) | (pos & (a > 0.0))
        hi = minus_zG[up].max() if up.any() else 0.0
        lo = minus_zG[low].min() if low.any() else 0.0
        bias = float(0.5 * (hi + lo))
    return a, bias, it + 1


def solve_hinge(
    K, y, C: float, tol: float = 1e-6, max_pairs: int = 10**7, trace=None
) -> DualSolution:
    """Max  sum(a) - 0.5 sum_ij a_i a_j y_i y_j K_ij
    s.t.  0 <= a <= C,  sum_i a_i y_i = 0.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n < 2:
        raise ValueError("need at least two training points")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1/-1")
    if np.all(y == y[0]):
        raise ValueError("both classes must be present")
    if C <= 0:
        raise ValueError("C must be positive")
    if not np.all(np.isfinite(K)):
        raise ValueError("non-finite kernel entries")

    Q = K * np.outer(y, y)
    p = -np.ones(n)
    a, bias, iters = _smo(Q, p, y, C, tol, max_pairs, trace)
    obj = float(a.sum() - 0.5 * a @ Q @ a)
    return DualSolution(a, bias, obj, iters)


def solve_eps_insensitive(
    K, y, C: float, eps: float, tol: float = 1e-6, max_pairs: int = 10**7, trace=None
) -> DualSolution:
    """Max  -0.5 t'Kt + t'y - eps*|t|_1  over t = alpha+ - alpha-
    s.t.  sum(t) = 0,  alpha+/- in [0, C],  alpha+ alpha- = 0.

    Solved as a 2n-variable box QP; the returned alpha is the difference t.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n < 2:
        raise ValueError("need at least two training points")
    if C <= 0:
        raise ValueError("C must be positive")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if not np.all(np.isfinite(K)):
        raise ValueError("non-finite kernel entries")

    z = np.concatenate([np.ones(n), -np.ones(n)])
    Q = np.outer(z, z) * np.tile(K, (2, 2))
    p = np.concatenate([eps - y, eps + y])
    a, bias, iters = _smo(Q, p, z, C, tol, max_pairs, trace)
    # complementarity can be off by round-off; shrinking both parts keeps t
    # and the constraint, and never worsens the objective
    overlap = np.minimum(a[:n], a[n:])
    theta = (a[:n] - overlap) - (a[n:] - overlap)
    obj = dual_objective_eps(K, y, theta, eps, check=False)
    return DualSolution(theta, bias, obj, iters)


def dual_objective_hinge(K, y, alpha, check: bool = True) -> float:
    """sum(a) - 0.5 sum_ij a_i a_j y_i y_j K_ij for feasible alpha."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if check:
        _require_feasible(alpha >= -1e-9, "alpha must be nonnegative")
        _require_feasible(
            abs(float(alpha @ y)) <= 1e-8 * max(1.0, float(np.abs(alpha).sum())),
            "sum_i alpha_i y_i must vanish",
        )
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def dual_objective_eps(K, y, theta, eps: float, check: bool = True) -> float:
    """-0.5 t'Kt + t'y - eps*|t|_1 for feasible t = alpha+ - alpha-."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if check:
        _require_feasible(
            abs(float(theta.sum())) <= 1e-8 * max(1.0, float(np.abs(theta).sum())),
            "sum_i alpha_i must vanish",
        )
    return float(-0.5 * theta @ K @ theta + theta @ y - eps * np.abs(theta).sum())


def _require_feasible(ok, message: str) -> None:
    if isinstance(ok, np.ndarray):
        ok = bool(ok.all())
    if not ok:
        raise ValueError(f"infeasible dual variables: {message}")


def decision_values(K_cross, a_signed, bias: float) -> np.ndarray:
    """f(x) = sum_i a_i k(x_i, x) + b with a_i = alpha_i y_i (hinge) or the
    regression coefficient difference."""
    return np.asarray(K_cross, dtype=np.float64) @ np.asarray(a_signed) + bias
