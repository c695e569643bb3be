"""Clustered multiple kernel learning by alternating optimization.

The trainer alternates an SVM solve on the composite kernel (kernel weights
and cluster likelihoods folded into a single Gram matrix) with a closed-form
update of the per-cluster kernel weights, and stops once the relative gap
between the block-norm primal and the fully dualized objective drops below
threshold. Global lp-norm MKL is the single-cluster special case of the same
code path, and a plain SVM is the single-kernel, single-cluster case.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .clustering import (
    LikelihoodModel,
    feature_distance_sq,
    likelihoods,
    surrogate_self_vals,
)
from .svm import DualSolution, solve_eps_insensitive, solve_hinge

# Weight floor keeping every quadratic-over-linear term finite; zeroed
# weights otherwise freeze a kernel out permanently under p = 1.
BETA_FLOOR = 1e-12

HINGE = "hinge"
EPS_INSENSITIVE = "eps-insensitive"


@dataclass
class TrainReport:
    outer_iterations: int = 0
    primal_history: list = field(default_factory=list)
    dual_history: list = field(default_factory=list)
    gap_history: list = field(default_factory=list)
    converged: bool = False


@dataclass
class ClmklModel:
    """Trained localized-MKL predictor.

    alpha holds the raw solver variables (nonnegative for hinge); expansions
    use the signed coefficients alpha*y for hinge and alpha itself for the
    epsilon-insensitive loss. train_likelihoods is the cluster membership
    matrix of the training points, needed by the decision function.
    """

    beta: np.ndarray  # l x M, per-cluster lp-constrained kernel weights
    alpha: np.ndarray
    bias: float
    p: float
    C: float
    loss: str = HINGE
    eps: float = 0.0
    y: np.ndarray | None = None  # hinge labels; None for regression
    train_likelihoods: np.ndarray | None = None  # n x l
    likelihood_model: LikelihoodModel | None = None
    weight_norms_sq: np.ndarray | None = None  # l x M
    kernel_names: list = field(default_factory=list)

    @property
    def signed_coefficients(self) -> np.ndarray:
        if self.loss == HINGE:
            return self.alpha * self.y
        return self.alpha

    @property
    def n_train(self) -> int:
        return len(self.alpha)


def composite_kernel(beta, c, kernels) -> np.ndarray:
    """Single effective Gram matrix sum_j sum_m beta_jm c_j(x) c_j(x') k_m."""
    beta = np.asarray(beta, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    l, M = beta.shape
    n = c.shape[0]
    if c.shape[1] != l or len(kernels) != M:
        raise ValueError(
            f"dimension mismatch: beta {beta.shape}, c {c.shape}, M={len(kernels)}"
        )
    out = np.zeros((n, n))
    tmp = np.empty((n, n))
    for j in range(l):
        cj_outer = np.outer(c[:, j], c[:, j])
        for m in range(M):
            if beta[j, m] != 0.0:
                np.multiply(cj_outer, kernels[m], out=tmp)
                tmp *= beta[j, m]
                out += tmp
    return out


def expansion_quadforms(a_signed, c, kernels) -> np.ndarray:
    """u[j, m] = (a*c_j)' K_m (a*c_j), the squared expansion norms per
    cluster and kernel (no kernel-weight scaling)."""
    a = np.asarray(a_signed, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    l = c.shape[1]
    u = np.empty((l, len(kernels)))
    for j in range(l):
        e = a * c[:, j]
        for m, K in enumerate(kernels):
            u[j, m] = e @ K @ e
    return np.maximum(u, 0.0)


def weight_norms_sq(alpha, y, c, beta, kernels) -> np.ndarray:
    """|w_jm|^2 = beta_jm^2 (a*c_j)' K_m (a*c_j) with a = alpha*y (hinge) or
    alpha (regression, pass y=None)."""
    a = np.asarray(alpha, dtype=np.float64)
    if y is not None:
        a = a * np.asarray(y, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    return beta**2 * expansion_quadforms(a, c, kernels)


def update_beta(norms_sq, p: float) -> np.ndarray:
    """Closed-form minimizer of sum_m |w_m|^2 / beta_m over each cluster's
    lp ball: beta_jm = |w_jm|^(2/(p+1)) / (sum_k |w_jk|^(2p/(p+1)))^(1/p).

    Rows with all-zero norms are reset to the uniform weight M^(-1/p)
    (reported via a warning); every returned row satisfies
    sum_m beta_jm^p = 1 up to round-off.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    nsq = np.asarray(norms_sq, dtype=np.float64)
    l, M = nsq.shape
    beta = np.empty_like(nsq)
    for j in range(l):
        top = nsq[j].max()
        if top <= 0.0:
            warnings.warn(
                f"cluster {j}: all weight norms zero, resetting to uniform",
                stacklevel=2,
            )
            beta[j] = M ** (-1.0 / p)
            continue
        t = nsq[j] / top  # scale-invariant formula
        beta[j] = t ** (1.0 / (p + 1.0)) * np.sum(t ** (p / (p + 1.0))) ** (-1.0 / p)
    return beta


def _lp_norm(v, r: float) -> float:
    """(sum v_m^r)^(1/r) for v >= 0, max-factored; r = inf means max."""
    v = np.asarray(v, dtype=np.float64)
    top = v.max()
    if top <= 0.0:
        return 0.0
    if np.isinf(r):
        return float(top)
    return float(top * np.sum((v / top) ** r) ** (1.0 / r))


def block_norm_regularizer(norms_sq, p: float) -> float:
    """0.5 sum_j (sum_m |w_jm|^(2p/(p+1)))^((p+1)/p), the regularizer with
    the kernel weights optimized out."""
    nsq = np.asarray(norms_sq, dtype=np.float64)
    s = p / (p + 1.0)
    return 0.5 * sum(_lp_norm(row, s) for row in nsq)


def dual_group_term(u, p: float) -> float:
    """sum_j |u_j|_{p/(p-1)} with u_jm the squared expansion norms; this is
    the squared 2,2p/(p-1) group norm summed over clusters (max over m at
    p = 1)."""
    u = np.asarray(u, dtype=np.float64)
    r = np.inf if p == 1.0 else p / (p - 1.0)
    return sum(_lp_norm(row, r) for row in u)


def loss_values(decisions, y, loss: str, eps: float = 0.0) -> np.ndarray:
    f = np.asarray(decisions, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if loss == HINGE:
        return np.maximum(0.0, 1.0 - y * f)
    if loss == EPS_INSENSITIVE:
        return np.maximum(0.0, np.abs(y - f) - eps)
    raise ValueError(f"unknown loss {loss!r}")


def primal_objective(norms_sq, p, C, decisions, y, loss=HINGE, eps=0.0) -> float:
    return block_norm_regularizer(norms_sq, p) + C * float(
        loss_values(decisions, y, loss, eps).sum()
    )


def dual_objective(u, alpha, y, p, C, loss=HINGE, eps=0.0) -> float:
    """Fully dualized objective at the given dual point; a valid lower bound
    on the primal optimum for any feasible alpha."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if loss == HINGE:
        if np.any(alpha < -1e-9) or np.any(alpha > C + 1e-9 * max(1.0, C)):
            raise ValueError("infeasible dual variables: alpha outside [0, C]")
        linear = float(alpha.sum())
    elif loss == EPS_INSENSITIVE:
        if np.any(np.abs(alpha) > C + 1e-9 * max(1.0, C)):
            raise ValueError("infeasible dual variables: |alpha| above C")
        linear = float(alpha @ np.asarray(y, dtype=np.float64)) - eps * float(
            np.abs(alpha).sum()
        )
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return linear - 0.5 * dual_group_term(u, p)


def relative_gap(primal: float, dual: float) -> float:
    return (primal - dual) / max(1.0, abs(primal))


def train_clmkl(
    kernels,
    y,
    c,
    p: float,
    C: float,
    loss: str = HINGE,
    eps: float = 0.0,
    gap_tol: float = 1e-3,
    max_outer: int = 200,
    svm_tol: float = 1e-6,
    likelihood_model: LikelihoodModel | None = None,
    kernel_names=None,
    fixed_beta=None,
):
    """Alternating kernel-weight / SVM optimization with a duality-gap stop.

    kernels: list of n x n Gram matrices; c: n x l likelihood matrix;
    fixed_beta freezes the weights (used for the uniform-sum baseline, which
    is a single SVM solve). Returns (ClmklModel, TrainReport); hitting
    max_outer is reported through TrainReport.converged, never raised.
    """
    kernels = [np.asarray(K, dtype=np.float64) for K in kernels]
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n, l = c.shape
    M = len(kernels)
    if p < 1:
        raise ValueError("p must be >= 1")
    if C <= 0:
        raise ValueError("C must be positive")
    if y.shape[0] != n or any(K.shape != (n, n) for K in kernels):
        raise ValueError("inconsistent dimensions between kernels, labels, likelihoods")

    report = TrainReport()
    if fixed_beta is not None:
        beta = np.asarray(fixed_beta, dtype=np.float64).reshape(l, M).copy()
        max_outer = 1
    else:
        beta = np.full((l, M), M ** (-1.0 / p))

    sol = None
    beta_used = beta
    u = nsq = None
    for outer in range(1, max_outer + 1):
        beta_used = np.maximum(beta, BETA_FLOOR)
        Kt = composite_kernel(beta_used, c, kernels)
        if loss == HINGE:
            sol = solve_hinge(Kt, y, C, tol=svm_tol)
            a = sol.alpha * y
        else:
            sol = solve_eps_insensitive(Kt, y, C, eps, tol=svm_tol)
            a = sol.alpha
        u = expansion_quadforms(a, c, kernels)
        nsq = beta_used**2 * u
        decisions = Kt @ a + sol.bias
        if fixed_beta is not None:
            # weights are not optimized, so gauge optimality against the
            # fixed-weight dual (equals the primal at an exact inner solve)
            primal = 0.5 * float((beta_used * u).sum()) + C * float(
                loss_values(decisions, y, loss, eps).sum()
            )
            dual = sol.objective
        else:
            primal = primal_objective(nsq, p, C, decisions, y, loss, eps)
            dual = dual_objective(u, sol.alpha, y, p, C, loss, eps)
        gap = relative_gap(primal, dual)
        report.outer_iterations = outer
        report.primal_history.append(primal)
        report.dual_history.append(dual)
        report.gap_history.append(gap)
        if gap <= gap_tol:
            report.converged = True
            break
        if outer < max_outer:
            beta = update_beta(nsq, p)

    model = ClmklModel(
        beta=beta_used,
        alpha=sol.alpha,
        bias=sol.bias,
        p=p,
        C=C,
        loss=loss,
        eps=eps,
        y=y.copy() if loss == HINGE else None,
        train_likelihoods=c,
        likelihood_model=likelihood_model,
        weight_norms_sq=nsq,
        kernel_names=list(kernel_names) if kernel_names else [],
    )
    return model, report


def representer_multipliers(u, p: float) -> np.ndarray:
    """Scalars turning the per-cluster expansion sum_i a_i c_j(x_i) phi_m
    into the optimal primal weights; they coincide with the closed-form
    kernel weights at convergence.

    u[j, m] holds the squared expansion norms. For p = 1 the dual norm
    degenerates to a max, and the multiplier concentrates uniformly on the
    argmax kernels of each cluster.
    """
    u = np.asarray(u, dtype=np.float64)
    l, M = u.shape
    out = np.zeros_like(u)
    for j in range(l):
        top = u[j].max()
        if top <= 0.0:
            raise ValueError(f"cluster {j}: all expansions are zero")
        t = u[j] / top
        if p == 1.0:
            is_max = t >= 1.0 - 1e-12
            out[j] = is_max / is_max.sum()
        else:
            # norm^(2/(p-1)) * [sum_m norm^(2p/(p-1))]^(-1/p), max-factored
            out[j] = t ** (1.0 / (p - 1.0)) * np.sum(t ** (p / (p - 1.0))) ** (
                -1.0 / p
            )
    return out


def in_sample_decisions(model: ClmklModel, kernels) -> np.ndarray:
    Kt = composite_kernel(model.beta, model.train_likelihoods, kernels)
    return Kt @ model.signed_coefficients + model.bias


def test_likelihood_matrix(
    model: ClmklModel, cluster_cross, cluster_diag=None
) -> np.ndarray:
    """Cluster likelihoods of test points from the clustering kernel's cross
    matrix; self-evaluations may be omitted (memberships are invariant to the
    per-point shift they induce)."""
    lm = model.likelihood_model
    if lm is None:
        raise ValueError("model has no likelihood model; pass test likelihoods explicitly")
    rows = np.atleast_2d(np.asarray(cluster_cross, dtype=np.float64))
    if cluster_diag is None:
        self_vals = surrogate_self_vals(rows, lm)
    else:
        self_vals = np.asarray(cluster_diag, dtype=np.float64)
    d = feature_distance_sq(rows, self_vals, lm)
    return likelihoods(d, lm.tau)


def predict(
    model: ClmklModel,
    cross_values,
    cluster_cross=None,
    cluster_diag=None,
    test_likelihoods=None,
) -> np.ndarray:
    """Decision values on new points.

    cross_values: per base kernel, an (n_test, n_train) matrix in the model's
    kernel order. Likelihoods of the test points are either given directly or
    computed from the clustering kernel's cross matrix; a single-cluster
    model needs neither.
    """
    crosses = [np.asarray(Kx, dtype=np.float64) for Kx in cross_values]
    l, M = model.beta.shape
    if len(crosses) != M:
        raise ValueError(f"model expects {M} cross matrices, got {len(crosses)}")
    n_test = crosses[0].shape[0]
    for Kx in crosses:
        if Kx.shape != (n_test, model.n_train):
            raise ValueError(
                f"cross matrix shape {Kx.shape} incompatible with "
                f"{(n_test, model.n_train)}"
            )
    if test_likelihoods is not None:
        c_test = np.atleast_2d(np.asarray(test_likelihoods, dtype=np.float64))
    elif l == 1:
        c_test = np.ones((n_test, 1))
    else:
        if cluster_cross is None:
            raise ValueError("multi-cluster model needs the clustering kernel's cross matrix")
        c_test = test_likelihood_matrix(model, cluster_cross, cluster_diag)
    if c_test.shape != (n_test, l):
        raise ValueError(f"test likelihoods shape {c_test.shape}, expected {(n_test, l)}")

    a = model.signed_coefficients
    c_train = model.train_likelihoods
    f = np.zeros(n_test)
    for j in range(l):
        e = a * c_train[:, j]
        z = np.zeros(n_test)
        for m in range(M):
            if model.beta[j, m] != 0.0:
                z += model.beta[j, m] * (crosses[m] @ e)
        f += c_test[:, j] * z
    return f + model.bias


def classify(decisions) -> np.ndarray:
    """Hinge label rule: sign of the decision value, zero mapped to +1."""
    d = np.asarray(decisions, dtype=np.float64)
    return np.where(d >= 0.0, 1.0, -1.0)


@dataclass
class OneVsAllModel:
    classes: np.ndarray  # sorted distinct class labels
    models: list  # one ClmklModel per class, same order
    reports: list = field(default_factory=list)


def train_one_vs_all(
    kernels, labels, c, p, C, likelihood_model=None, kernel_names=None, **kwargs
) -> OneVsAllModel:
    """One binary model per class over shared likelihoods; prediction is the
    argmax of decision values with ties to the lowest class index."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("one-vs-all needs at least two classes")
    models, reports = [], []
    for cls in classes:
        y_bin = np.where(labels == cls, 1.0, -1.0)
        model, report = train_clmkl(
            kernels,
            y_bin,
            c,
            p,
            C,
            likelihood_model=likelihood_model,
            kernel_names=kernel_names,
            **kwargs,
        )
        models.append(model)
        reports.append(report)
    return OneVsAllModel(classes, models, reports)


def predict_one_vs_all(
    ova: OneVsAllModel,
    cross_values,
    cluster_cross=None,
    cluster_diag=None,
    test_likelihoods=None,
):
    """Returns (predicted labels, decision-value matrix n_test x n_classes)."""
    scores = np.column_stack(
        [
            predict(m, cross_values, cluster_cross, cluster_diag, test_likelihoods)
            for m in ova.models
        ]
    )
    return ova.classes[np.argmax(scores, axis=1)], scores
