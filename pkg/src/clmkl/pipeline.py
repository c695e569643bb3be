"""End-to-end fitting pipeline shared by the CLI and cross-validation.

Wires together kernel normalization, clustering-kernel selection, kernel
k-means, evenness calibration, and one of the trainers (localized MKL,
global MKL as its single-cluster case, uniform-sum SVM, or the gated
baseline). Normalization state is kept so held-out cross matrices can be
transformed consistently with the training split.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import clustering, kernels, lmkl, train

UNIFORM_SUM = "uniform-sum"

ALGORITHMS = ("clmkl", "mkl", "lmkl", "unif-svm")
NORMALIZATIONS = ("multiplicative", "trace", "none")


@dataclass
class RunParams:
    algorithm: str = "clmkl"
    C: float = 1.0
    p: float = 1.33
    l: int = 3
    evenness: float | None = 0.55
    tau: float | None = None  # overrides evenness calibration when set
    loss: str = train.HINGE
    eps: float = 0.1
    gap_tol: float = 1e-3
    max_outer: int = 200
    svm_tol: float = 1e-6
    restarts: int = 10
    kmeans_max_iter: int = 100
    lmkl_steps: int = 50
    normalization: str = "multiplicative"
    clustering_kernel: str = UNIFORM_SUM
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.loss not in (train.HINGE, train.EPS_INSENSITIVE):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.evenness is None and self.tau is None and self.l > 1:
            raise ValueError("clustered training needs an evenness target or tau")

    def overridden(self, point: dict) -> "RunParams":
        return replace(self, **point)


@dataclass
class NormalizationState:
    mode: str
    train_diagonals: list = field(default_factory=list)  # multiplicative mode
    trace_scales: list = field(default_factory=list)  # trace mode

    def apply_train(self, mats):
        if self.mode == "multiplicative":
            self.train_diagonals = [np.diag(K).copy() for K in mats]
            return [kernels.normalize_multiplicative(K) for K in mats]
        if self.mode == "trace":
            self.trace_scales = [kernels.trace_scale(K) for K in mats]
            return [K * s for K, s in zip(mats, self.trace_scales)]
        return [np.asarray(K, dtype=np.float64) for K in mats]

    def apply_cross(self, cross_mats, test_diags=None):
        """Transform raw test x train matrices with the training factors.
        Multiplicative mode needs per-kernel test self-evaluations."""
        if self.mode == "multiplicative":
            if test_diags is None:
                raise ValueError(
                    "multiplicative normalization needs test self-evaluations "
                    "for the cross matrices"
                )
            out = []
            for Kx, d_test, d_train in zip(
                cross_mats, test_diags, self.train_diagonals
            ):
                cx = kernels.CrossKernelMatrix(Kx, d_test)
                out.append(kernels.normalize_multiplicative_cross(cx, d_train).values)
            return out
        if self.mode == "trace":
            return [
                np.asarray(Kx, dtype=np.float64) * s
                for Kx, s in zip(cross_mats, self.trace_scales)
            ]
        return [np.asarray(Kx, dtype=np.float64) for Kx in cross_mats]


def resolve_clustering_kernel(mats, names, choice: str) -> np.ndarray:
    if choice == UNIFORM_SUM:
        return kernels.sum_uniform(mats)
    if choice in names:
        return mats[list(names).index(choice)]
    raise ValueError(f"clustering kernel {choice!r} not among {list(names)}")


def resolve_clustering_cross(cross_mats, names, choice: str) -> np.ndarray:
    if choice == UNIFORM_SUM:
        out = np.zeros_like(np.asarray(cross_mats[0], dtype=np.float64))
        for Kx in cross_mats:
            out += Kx
        return out / len(cross_mats)
    if choice in names:
        return np.asarray(cross_mats[list(names).index(choice)], dtype=np.float64)
    raise ValueError(f"clustering kernel {choice!r} not among {list(names)}")


@dataclass
class Fitted:
    params: RunParams
    model: object  # ClmklModel, OneVsAllModel, or LmklModel
    report: object
    normalization: NormalizationState
    kernel_names: list
    multiclass: bool = False

    def decide(self, cross_mats, test_diags=None):
        """Decision values (binary/regression) or (labels, scores) for the
        one-vs-all case, from raw cross matrices."""
        crosses = self.normalization.apply_cross(cross_mats, test_diags)
        if isinstance(self.model, lmkl.LmklModel):
            k0x = resolve_clustering_cross(
                crosses, self.kernel_names, self.params.clustering_kernel
            )
            return lmkl.predict_lmkl(self.model, crosses, k0x)
        if self.multiclass:
            k0x = self._cluster_cross(crosses)
            return train.predict_one_vs_all(self.model, crosses, k0x)
        k0x = self._cluster_cross(crosses)
        return train.predict(self.model, crosses, k0x)

    def predict_labels(self, cross_mats, test_diags=None):
        out = self.decide(cross_mats, test_diags)
        if self.multiclass:
            return out[0]
        return train.classify(out)

    def _cluster_cross(self, crosses):
        model = self.model.models[0] if self.multiclass else self.model
        if model.likelihood_model is None or model.likelihood_model.l == 1:
            return None
        return resolve_clustering_cross(
            crosses, self.kernel_names, self.params.clustering_kernel
        )


def _likelihoods_for(mats, names, params: RunParams, n: int, rng_seed):
    """Cluster the training points and calibrate tau; single-cluster setups
    skip both and use the trivial model."""
    if params.algorithm in ("mkl", "unif-svm") or params.l == 1:
        model = clustering.LikelihoodModel(
            [np.arange(n)], 0.0, np.zeros(1), params.clustering_kernel
        )
        return np.ones((n, 1)), model
    K0 = resolve_clustering_kernel(mats, names, params.clustering_kernel)
    assignment = clustering.kernel_kmeans(
        K0,
        params.l,
        restarts=params.restarts,
        max_iter=params.kmeans_max_iter,
        seed=rng_seed,
    )
    dist = clustering.point_cluster_distances(K0, assignment.labels, params.l)
    if params.tau is not None:
        tau = params.tau
    else:
        tau = clustering.calibrate_tau(dist, params.evenness)
    model = clustering.build_likelihood_model(
        K0, assignment, tau, params.clustering_kernel
    )
    c = clustering.likelihoods(dist, tau)
    return c, model


def fit_pipeline(kernel_matrices, names, y, params: RunParams, seed=None) -> Fitted:
    """Normalize, cluster, calibrate, and train according to params.

    y: +1/-1 for binary classification, arbitrary integers for multiclass
    (one-vs-all), reals for the epsilon-insensitive loss.
    """
    names = list(names)
    y = np.asarray(y, dtype=np.float64)
    norm = NormalizationState(params.normalization)
    mats = norm.apply_train([np.asarray(K, dtype=np.float64) for K in kernel_matrices])
    n = mats[0].shape[0]
    if seed is None:
        seed = params.seed
    if isinstance(seed, np.random.SeedSequence):
        kmeans_seed = seed.spawn(1)[0]
    else:
        kmeans_seed = np.random.SeedSequence(entropy=int(seed), spawn_key=(2,))

    if params.algorithm == "lmkl":
        K0 = resolve_clustering_kernel(mats, names, params.clustering_kernel)
        model = lmkl.train_lmkl(
            mats,
            K0,
            y,
            params.C,
            steps=params.lmkl_steps,
            svm_tol=max(params.svm_tol, 1e-8),
            kernel_names=names,
            clustering_kernel_id=params.clustering_kernel,
        )
        return Fitted(params, model, None, norm, names)

    c, lk_model = _likelihoods_for(mats, names, params, n, kmeans_seed)
    fixed_beta = None
    if params.algorithm == "unif-svm":
        fixed_beta = np.full((1, len(mats)), 1.0 / len(mats))

    classes = np.unique(y)
    multiclass = params.loss == train.HINGE and not set(classes) <= {-1.0, 1.0}
    common = dict(
        p=params.p,
        C=params.C,
        loss=params.loss,
        eps=params.eps,
        gap_tol=params.gap_tol,
        max_outer=params.max_outer,
        svm_tol=params.svm_tol,
        likelihood_model=lk_model,
        kernel_names=names,
        fixed_beta=fixed_beta,
    )
    if multiclass:
        ova = train.train_one_vs_all(mats, y, c, **common)
        return Fitted(params, ova, ova.reports, norm, names, multiclass=True)
    model, report = train.train_clmkl(mats, y, c, **common)
    return Fitted(params, model, report, norm, names)
