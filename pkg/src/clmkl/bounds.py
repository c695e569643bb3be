"""Rademacher-complexity and generalization-bound calculators.

The complexity bound is an infimum over an exponent t in [2, 2p/(p-1)] of a
group norm of per-cluster, per-kernel diagonal sums weighted by squared
likelihoods. The function t * M^(2/t) decreases up to t = 2 ln M and
increases after, so the infimum sits at that point clamped into the range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# stand-in for the p = 1 upper endpoint (formally infinite); the minimizer
# 2 ln M is interior for every practical M, so the cap is inert
P1_ENDPOINT_CAP = 1e6

REGIME_LOG = "log-M"
REGIME_POLY = "polynomial-M"


@dataclass
class BoundInputs:
    """Inputs of the complexity and generalization bounds.

    kernel_diagonals: M x n matrix of k_m(x_i, x_i); likelihoods: n x l
    membership matrix; D: squared-group-norm radius of the hypothesis class;
    B: uniform bound on the kernel diagonal; loss_bound and lipschitz
    describe the loss (the Lipschitz constant is recorded but does not enter
    the bound's displayed form).
    """

    likelihoods: np.ndarray
    D: float
    p: float
    B: float
    kernel_diagonals: np.ndarray | None = None
    loss_bound: float = 1.0
    lipschitz: float = 1.0
    delta: float = 0.05

    def __post_init__(self):
        self.likelihoods = np.atleast_2d(np.asarray(self.likelihoods, dtype=np.float64))
        if self.kernel_diagonals is not None:
            self.kernel_diagonals = np.atleast_2d(
                np.asarray(self.kernel_diagonals, dtype=np.float64)
            )
        if self.D <= 0 or self.B <= 0:
            raise ValueError("D and B must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @property
    def n(self) -> int:
        return self.likelihoods.shape[0]

    @property
    def M(self) -> int:
        if self.kernel_diagonals is None:
            raise ValueError("kernel diagonals not supplied")
        return self.kernel_diagonals.shape[0]


@dataclass
class BoundReport:
    rademacher_bound: float
    optimal_t: float
    gen_bound: float
    regime: str


def t_upper(p: float) -> float:
    return P1_ENDPOINT_CAP if p == 1.0 else 2.0 * p / (p - 1.0)


def optimal_t(M: int, p: float) -> float:
    """argmin over [2, 2p/(p-1)] of t M^(2/t): the stationary point 2 ln M
    clamped into the interval."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return min(max(2.0 * math.log(M) if M > 1 else 2.0, 2.0), t_upper(p))


def regime(M: int, p: float) -> str:
    """log-M when the interior minimizer 2 ln M fits under the upper
    endpoint (logarithmic dependence on the number of kernels), polynomial-M
    otherwise (M^((p-1)/(2p)) dependence)."""
    return REGIME_LOG if 2.0 * math.log(max(M, 1)) <= t_upper(p) else REGIME_POLY


def _lt2_norm(v, t: float) -> float:
    """(sum_m v_m^(t/2))^(2/t) for v >= 0, max-factored against overflow."""
    v = np.asarray(v, dtype=np.float64)
    top = v.max()
    if top <= 0.0:
        return 0.0
    return float(top * np.sum((v / top) ** (t / 2.0)) ** (2.0 / t))


def rademacher_bound_exact(inputs: BoundInputs) -> tuple[float, float]:
    """Diagonal-sum form of the complexity bound; returns (bound, t*).

    The infimum is taken over the stationary point 2 ln M and both interval
    endpoints (the objective is unimodal in t).
    """
    if inputs.kernel_diagonals is None:
        raise ValueError("exact bound needs the kernel diagonals")
    diag = inputs.kernel_diagonals
    c2 = inputs.likelihoods**2
    # S[j, m] = sum_i c_j(x_i)^2 k_m(x_i, x_i)
    S = c2.T @ diag.T
    n = inputs.n

    def value(t):
        group = sum(_lt2_norm(row, t) for row in S)
        return math.sqrt(inputs.D) / n * math.sqrt(t * group)

    candidates = {2.0, optimal_t(inputs.M, inputs.p), t_upper(inputs.p)}
    best_t = min(candidates, key=value)
    return value(best_t), best_t


def rademacher_bound_simplified(inputs: BoundInputs, M: int | None = None):
    """Uniform-diagonal form sqrt(DB)/n * sqrt(t M^(2/t) sum_j,i c_j^2);
    returns (bound, t*). Raises if a supplied diagonal exceeds B."""
    if M is None:
        M = inputs.M
    if inputs.kernel_diagonals is not None and np.any(
        inputs.kernel_diagonals > inputs.B * (1 + 1e-12)
    ):
        raise ValueError("kernel diagonal exceeds the claimed bound B")
    c2_total = float((inputs.likelihoods**2).sum())
    t = optimal_t(M, inputs.p)
    bound = (
        math.sqrt(inputs.D * inputs.B)
        / inputs.n
        * math.sqrt(t * M ** (2.0 / t) * c2_total)
    )
    return bound, t


def generalization_bound(
    inputs: BoundInputs, empirical_risk: float, M: int | None = None
) -> float:
    """empirical risk + confidence term + twice the simplified complexity."""
    if empirical_risk < 0:
        raise ValueError("empirical risk must be nonnegative")
    rad, _ = rademacher_bound_simplified(inputs, M)
    confidence = inputs.loss_bound * math.sqrt(
        math.log(2.0 / inputs.delta) / (2.0 * inputs.n)
    )
    return empirical_risk + confidence + 2.0 * rad


def bound_report(
    inputs: BoundInputs, empirical_risk: float = 0.0, M: int | None = None
) -> BoundReport:
    if M is None:
        M = inputs.M
    rad, t = rademacher_bound_simplified(inputs, M)
    gen = generalization_bound(inputs, empirical_risk, M)
    return BoundReport(rad, t, gen, regime(M, inputs.p))


def hypothesis_radius(weight_norms_sq, p: float) -> float:
    """Radius estimate sum_j (sum_m |w_jm|^(2p/(p+1)))^((p+1)/p) from a
    trained model's stored squared weight norms."""
    nsq = np.asarray(weight_norms_sq, dtype=np.float64)
    s = p / (p + 1.0)
    total = 0.0
    for row in nsq:
        top = row.max()
        if top > 0:
            total += top * float(np.sum((row / top) ** s) ** (1.0 / s))
    return total
