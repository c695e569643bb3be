"""Batch command-line frontend.

Subcommands: compute-kernels, cluster, train, predict, evaluate, cv, bound.
Configuration comes from key=value text files plus flags (flags win); all
randomness flows from one 64-bit seed through numpy SeedSequence spawn keys,
so reruns are byte-identical. Exit codes: 0 success, 1 usage or I/O error,
2 trainer did not converge (the model is still written, flagged via the
exit code).
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from . import bounds, clustering, evaluation, kernels, modelio, pipeline, train
from .kernels import atomic_write_text

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


class UsageError(ValueError):
    pass


def read_config(path) -> dict:
    """key = value lines; '#' starts a comment; kernel.NAME keys keep file
    order and collect into an ordered kernel list."""
    cfg = {}
    kernel_items = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key.startswith("kernel."):
                kernel_items.append((key[len("kernel.") :], value))
            else:
                cfg[key.replace("-", "_")] = value
    if kernel_items:
        cfg["kernels"] = kernel_items
    return cfg


def _parse_name_file(items) -> list:
    out = []
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"expected NAME=FILE, got {item!r}")
        out.append((name, path))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise UsageError("duplicate kernel names")
    return out


def load_labels(path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise UsageError(f"{path}:{lineno}: non-numeric label {line!r}") from None
    if not values:
        raise UsageError(f"{path}: no labels")
    return np.asarray(values)


def _load_bundle(pairs) -> tuple:
    names, mats = [], []
    for name, path in pairs:
        try:
            mats.append(kernels.load_matrix(path))
        except FileNotFoundError:
            raise UsageError(f"kernel {name!r}: file not found: {path}") from None
        names.append(name)
    bundle = kernels.KernelBundle(mats, names)
    return bundle.kernels, bundle.names


def _merged(cfg: dict, args, keys) -> dict:
    """Flag values override config; absent everywhere stays absent."""
    out = dict(cfg)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


def _params_from(settings: dict) -> pipeline.RunParams:
    def get(key, cast, default):
        if key in settings and settings[key] is not None:
            return cast(settings[key])
        return default

    tau = get("tau", float, None)
    evenness = get("evenness", float, 0.55 if tau is None else None)
    return pipeline.RunParams(
        algorithm=get("algorithm", str, "clmkl"),
        C=get("c", float, 1.0),
        p=get("p", float, 1.33),
        l=get("l", int, 3),
        evenness=evenness,
        tau=tau,
        loss=get("loss", str, train.HINGE),
        eps=get("eps", float, 0.1),
        gap_tol=get("gap_tol", float, 1e-3),
        max_outer=get("max_outer", int, 200),
        svm_tol=get("svm_tol", float, 1e-6),
        restarts=get("restarts", int, 10),
        lmkl_steps=get("lmkl_steps", int, 50),
        normalization=get("normalization", str, "multiplicative"),
        clustering_kernel=get("clustering_kernel", str, pipeline.UNIFORM_SUM),
        seed=get("seed", int, 0),
    )


def _kernel_pairs(settings: dict, args) -> list:
    pairs = list(settings.get("kernels", []))
    flag_pairs = _parse_name_file(getattr(args, "kernel", None))
    if flag_pairs:
        pairs = flag_pairs
    if not pairs:
        raise UsageError("no kernels given (kernel.NAME config keys or --kernel NAME=FILE)")
    return pairs


# ---------------------------------------------------------------- commands


def cmd_compute_kernels(args) -> int:
    specs = _parse_name_file(args.spec)
    if not specs:
        raise UsageError("no kernel specs given")
    X = kernels.load_kernel_csv(args.features)
    manifest = []
    for name, spec_text in specs:
        spec = kernels.parse_kernel_spec(spec_text)
        K = kernels.compute_gram(X, spec)
        path = f"{args.out_dir}/{name}.kmx"
        kernels.store_kernel_matrix(K, path)
        manifest.append({"name": name, "file": path, "spec": spec_text})
    atomic_write_text(
        args.manifest or f"{args.out_dir}/kernels.json",
        json.dumps({"kernels": manifest}, indent=2, sort_keys=True) + "\n",
    )
    print(f"wrote {len(manifest)} kernel files to {args.out_dir}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    settings = _merged(cfg, args, ["l", "restarts", "seed", "evenness", "tau",
                                   "normalization", "clustering_kernel", "out"])
    params = _params_from(settings)
    mats, names = _load_bundle(_kernel_pairs(settings, args))
    norm = pipeline.NormalizationState(params.normalization)
    mats = norm.apply_train(mats)
    K0 = pipeline.resolve_clustering_kernel(mats, names, params.clustering_kernel)
    seed_seq = np.random.SeedSequence(entropy=params.seed, spawn_key=(2,))
    assignment = clustering.kernel_kmeans(
        K0, params.l, restarts=params.restarts, seed=seed_seq
    )
    dist = clustering.point_cluster_distances(K0, assignment.labels, params.l)
    tau = params.tau if params.tau is not None else clustering.calibrate_tau(
        dist, params.evenness
    )
    model = clustering.build_likelihood_model(
        K0, assignment, tau, params.clustering_kernel
    )
    doc = {
        "schema": "clmkl-clustering/1",
        "tau": "inf" if math.isinf(tau) else tau,
        "member_sets": [[int(i) for i in s] for s in model.member_sets],
        "intra_cluster_term": model.intra_cluster_term.tolist(),
        "clustering_kernel": params.clustering_kernel,
        "clustering_error": assignment.clustering_error,
    }
    out = settings.get("out") or "clustering.json"
    atomic_write_text(out, json.dumps(doc, sort_keys=True, indent=1) + "\n")
    print(f"clustered into {params.l} groups, error {assignment.clustering_error:.6g}, "
          f"tau {tau:.6g} -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    keys = ["labels", "algorithm", "c", "p", "l", "evenness", "tau", "loss", "eps",
            "gap_tol", "max_outer", "svm_tol", "restarts", "lmkl_steps",
            "normalization", "clustering_kernel", "seed", "out", "report"]
    settings = _merged(cfg, args, keys)
    params = _params_from(settings)
    if "labels" not in settings:
        raise UsageError("labels file required")
    y = load_labels(settings["labels"])
    mats, names = _load_bundle(_kernel_pairs(settings, args))
    if mats[0].shape[0] != len(y):
        raise UsageError(
            f"{len(y)} labels but kernels are {mats[0].shape[0]}x{mats[0].shape[0]}"
        )

    fitted = pipeline.fit_pipeline(mats, names, y, params)
    out = settings.get("out") or "model.json"
    modelio.save_model(fitted.model, out, params.algorithm, fitted.normalization)

    converged = True
    if params.algorithm in ("clmkl", "mkl"):
        reports = fitted.report if isinstance(fitted.report, list) else [fitted.report]
        converged = all(r.converged for r in reports)
        report_path = settings.get("report")
        if report_path:
            buf = io.StringIO()
            buf.write("model,iteration,primal,dual,gap\n")
            for k, rep in enumerate(reports):
                for i, (pv, dv, gv) in enumerate(
                    zip(rep.primal_history, rep.dual_history, rep.gap_history), start=1
                ):
                    buf.write(f"{k},{i},{float(pv)!r},{float(dv)!r},{float(gv)!r}\n")
            atomic_write_text(report_path, buf.getvalue())
    print(f"model written to {out}" + ("" if converged else " (NOT converged)"))
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _load_crosses_for(model_names, args):
    pairs = dict(_parse_name_file(args.cross))
    crosses = []
    for name in model_names:
        if name not in pairs:
            raise UsageError(f"missing cross-kernel file for kernel {name!r}")
        crosses.append(kernels.load_matrix(pairs[name]))
    extra = set(pairs) - set(model_names)
    if extra:
        raise UsageError(f"cross kernels {sorted(extra)} not in the model")
    diags = None
    if args.test_diag:
        diag_pairs = dict(_parse_name_file(args.test_diag))
        diags = []
        for name in model_names:
            if name not in diag_pairs:
                raise UsageError(f"missing test diagonal for kernel {name!r}")
            d = np.loadtxt(diag_pairs[name], ndmin=1)
            diags.append(d)
    return crosses, diags


def _decide_from_files(args):
    model, algorithm, norm = modelio.load_model(args.model)
    if isinstance(model, train.OneVsAllModel):
        names = model.models[0].kernel_names
    else:
        names = model.kernel_names
    crosses, diags = _load_crosses_for(names, args)
    if args.assume_normalized:
        norm = pipeline.NormalizationState("none")
    n_train = (
        model.models[0].n_train
        if isinstance(model, train.OneVsAllModel)
        else model.n_train
    )
    if crosses[0].shape[1] != n_train:
        raise UsageError(
            f"cross matrices have {crosses[0].shape[1]} columns, model was "
            f"trained on {n_train} points"
        )
    params = pipeline.RunParams(
        algorithm=algorithm,
        clustering_kernel=_clustering_kernel_of(model),
        normalization=norm.mode,
    )
    fitted = pipeline.Fitted(
        params, model, None, norm, names,
        multiclass=isinstance(model, train.OneVsAllModel),
    )
    return fitted, crosses, diags, model, algorithm


def _clustering_kernel_of(model) -> str:
    if isinstance(model, train.OneVsAllModel):
        model = model.models[0]
    lk = getattr(model, "likelihood_model", None)
    if lk is not None and lk.clustering_kernel_id:
        return lk.clustering_kernel_id
    gating = getattr(model, "gating", None)
    if gating is not None and gating.clustering_kernel_id:
        return gating.clustering_kernel_id
    return pipeline.UNIFORM_SUM


def cmd_predict(args) -> int:
    fitted, crosses, diags, model, algorithm = _decide_from_files(args)
    buf = io.StringIO()
    if fitted.multiclass:
        labels, scores = fitted.decide(crosses, diags)
        buf.write("decision,label\n")
        for lab, row in zip(labels, scores):
            buf.write(f"{float(row.max())!r},{lab:g}\n")
    else:
        decisions = fitted.decide(crosses, diags)
        buf.write("decision,label\n")
        if algorithm == "lmkl" or model.loss == train.HINGE:
            for d, lab in zip(decisions, train.classify(decisions)):
                buf.write(f"{float(d)!r},{lab:g}\n")
        else:
            for d in decisions:
                buf.write(f"{float(d)!r},{float(d)!r}\n")
    atomic_write_text(args.out, buf.getvalue())
    print(f"predictions written to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    fitted, crosses, diags, model, algorithm = _decide_from_files(args)
    y = load_labels(args.labels)
    if fitted.multiclass:
        labels, _ = fitted.decide(crosses, diags)
        value = evaluation.accuracy(labels, y)
        metric = "accuracy"
    else:
        decisions = fitted.decide(crosses, diags)
        if args.metric == "auc":
            value = evaluation.auc(decisions, y)
            metric = "auc"
        else:
            value = evaluation.accuracy(train.classify(decisions), y)
            metric = "accuracy"
    print(f"{metric}: {value:.6f}")
    if args.out:
        atomic_write_text(args.out, f"metric,value\n{metric},{value!r}\n")
    return EXIT_OK


def _parse_floats(text) -> tuple:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def cmd_cv(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    keys = ["labels", "algorithm", "loss", "eps", "gap_tol", "max_outer", "svm_tol",
            "restarts", "lmkl_steps", "normalization", "clustering_kernel", "seed",
            "folds", "metric", "cs", "ps", "evenness_values", "ls",
            "evenness_interval", "evenness_points", "out"]
    settings = _merged(cfg, args, keys)
    if "labels" not in settings:
        raise UsageError("labels file required")
    y = load_labels(settings["labels"])
    mats, names = _load_bundle(_kernel_pairs(settings, args))
    base = _params_from(settings)
    folds = int(settings.get("folds", 5))
    seed = int(settings.get("seed", 0))
    metric = settings.get("metric", "accuracy")

    grid_kwargs = {}
    if "cs" in settings:
        grid_kwargs["Cs"] = _parse_floats(settings["cs"])
    if "ps" in settings:
        grid_kwargs["ps"] = _parse_floats(settings["ps"])
    if "evenness_values" in settings:
        grid_kwargs["evenness"] = _parse_floats(settings["evenness_values"])
    if "ls" in settings:
        grid_kwargs["ls"] = tuple(int(v) for v in str(settings["ls"]).split(","))
    if "evenness_interval" in settings:
        grid_kwargs["evenness_interval"] = _parse_floats(settings["evenness_interval"])
    if "evenness_points" in settings:
        grid_kwargs["evenness_points"] = int(settings["evenness_points"])
    grid = evaluation.Grid(**grid_kwargs)

    scorer = make_cv_scorer(mats, names, y, base, metric)
    result = evaluation.cross_validate(mats, y, grid, folds, seed, scorer)

    buf = io.StringIO()
    buf.write("C,p,evenness,l,fold,value\n")
    for row in result.rows:
        pt = row.point
        buf.write(
            f"{float(pt['C'])!r},{float(pt['p'])!r},{float(pt['evenness'])!r},"
            f"{pt['l']},{row.fold},{float(row.metric_value)!r}\n"
        )
    out = settings.get("out") or "cv.csv"
    atomic_write_text(out, buf.getvalue())
    best = result.best_point
    print(
        f"best: C={best['C']:g} p={best['p']:g} evenness={best['evenness']:g} "
        f"l={best['l']} mean {metric} {result.report.accuracy:.6f} -> {out}"
    )
    return EXIT_OK


def make_cv_scorer(mats, names, y, base: pipeline.RunParams, metric: str):
    """Per-(grid point, fold) training and scoring on kernel slices; the
    training slice alone drives normalization, clustering, and calibration."""
    full_diags = [np.diag(K).copy() for K in mats]

    def fit_and_score(point, train_idx, val_idx, fold_seed):
        params = base.overridden(point)
        sub = [K[np.ix_(train_idx, train_idx)] for K in mats]
        fitted = pipeline.fit_pipeline(sub, names, y[train_idx], params, seed=fold_seed)
        crosses = [K[np.ix_(val_idx, train_idx)] for K in mats]
        diags = [d[val_idx] for d in full_diags]
        if metric == "auc":
            decisions = fitted.decide(crosses, diags)
            return evaluation.auc(decisions, y[val_idx])
        return evaluation.accuracy(fitted.predict_labels(crosses, diags), y[val_idx])

    return fit_and_score


def cmd_bound(args) -> int:
    if args.model:
        model, _, _ = modelio.load_model(args.model)
        if isinstance(model, train.OneVsAllModel):
            model = model.models[0]
        c = model.train_likelihoods
        p = model.p if args.p is None else args.p
        D = args.D
        if D is None and model.weight_norms_sq is not None:
            D = bounds.hypothesis_radius(model.weight_norms_sq, model.p)
    elif args.assignment:
        if args.l is None or args.n is None:
            raise UsageError("--assignment needs --l and --n")
        if args.assignment == "uniform":
            c = np.full((args.n, args.l), 1.0 / args.l)
        else:  # hard, balanced round-robin
            c = np.zeros((args.n, args.l))
            c[np.arange(args.n), np.arange(args.n) % args.l] = 1.0
        p = args.p if args.p is not None else 2.0
        D = args.D
    else:
        raise UsageError("either --model or --assignment required")
    if D is None:
        raise UsageError("hypothesis radius --D required")
    if args.M is None:
        raise UsageError("number of kernels --M required")

    inputs = bounds.BoundInputs(
        likelihoods=c, D=D, p=p, B=args.B,
        loss_bound=args.loss_bound, delta=args.delta,
    )
    report = bounds.bound_report(inputs, args.empirical_risk, args.M)
    print(f"rademacher_bound: {report.rademacher_bound!r}")
    print(f"optimal_t: {report.optimal_t!r}")
    print(f"generalization_bound: {report.gen_bound!r}")
    print(f"regime: {report.regime}")
    if args.out:
        atomic_write_text(
            args.out,
            "rademacher_bound,optimal_t,generalization_bound,regime\n"
            f"{float(report.rademacher_bound)!r},{float(report.optimal_t)!r},"
            f"{float(report.gen_bound)!r},{report.regime}\n",
        )
    return EXIT_OK


# ---------------------------------------------------------------- wiring


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; our exit contract
    # reserves 2 for non-convergence, so route through UsageError instead
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="clmkl",
        description="Localized multiple kernel learning over precomputed Gram matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ck = sub.add_parser("compute-kernels", help="Gram matrices from a feature CSV")
    ck.add_argument("--features", required=True)
    ck.add_argument("--spec", action="append", required=True,
                    help="NAME=KIND[:param=value,...], e.g. rbf=gaussian:width=1")
    ck.add_argument("--out-dir", default=".")
    ck.add_argument("--manifest")
    ck.set_defaults(func=cmd_compute_kernels)

    def common_kernel_flags(p):
        p.add_argument("--config")
        p.add_argument("--kernel", action="append", help="NAME=FILE (repeatable)")
        p.add_argument("--normalization", choices=pipeline.NORMALIZATIONS)
        p.add_argument("--clustering-kernel", dest="clustering_kernel")
        p.add_argument("--seed", type=int)

    cl = sub.add_parser("cluster", help="kernel k-means plus evenness calibration")
    common_kernel_flags(cl)
    cl.add_argument("--l", type=int)
    cl.add_argument("--restarts", type=int)
    cl.add_argument("--evenness", type=float)
    cl.add_argument("--tau", type=float)
    cl.add_argument("--out")
    cl.set_defaults(func=cmd_cluster)

    tr = sub.add_parser("train", help="train clmkl / mkl / lmkl / unif-svm")
    common_kernel_flags(tr)
    tr.add_argument("--labels")
    tr.add_argument("--algorithm", choices=pipeline.ALGORITHMS)
    tr.add_argument("--c", type=float)
    tr.add_argument("--p", type=float)
    tr.add_argument("--l", type=int)
    tr.add_argument("--evenness", type=float)
    tr.add_argument("--tau", type=float)
    tr.add_argument("--loss", choices=(train.HINGE, train.EPS_INSENSITIVE))
    tr.add_argument("--eps", type=float)
    tr.add_argument("--gap-tol", dest="gap_tol", type=float)
    tr.add_argument("--max-outer", dest="max_outer", type=int)
    tr.add_argument("--svm-tol", dest="svm_tol", type=float)
    tr.add_argument("--restarts", type=int)
    tr.add_argument("--lmkl-steps", dest="lmkl_steps", type=int)
    tr.add_argument("--out")
    tr.add_argument("--report")
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="decision values from a model file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--cross", action="append", required=True, help="NAME=FILE")
    pr.add_argument("--test-diag", action="append",
                    help="NAME=FILE with test self-evaluations (multiplicative mode)")
    pr.add_argument("--assume-normalized", action="store_true",
                    help="cross matrices are already normalized like the training kernels")
    pr.add_argument("--out", default="predictions.csv")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="accuracy or AUC of a model on labeled data")
    ev.add_argument("--model", required=True)
    ev.add_argument("--cross", action="append", required=True)
    ev.add_argument("--test-diag", action="append")
    ev.add_argument("--assume-normalized", action="store_true")
    ev.add_argument("--labels", required=True)
    ev.add_argument("--metric", choices=("accuracy", "auc"), default="accuracy")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    cv = sub.add_parser("cv", help="k-fold grid search")
    common_kernel_flags(cv)
    cv.add_argument("--labels")
    cv.add_argument("--algorithm", choices=pipeline.ALGORITHMS)
    cv.add_argument("--folds", type=int)
    cv.add_argument("--metric", choices=("accuracy", "auc"))
    cv.add_argument("--cs", help="comma-separated C values")
    cv.add_argument("--ps", help="comma-separated p values")
    cv.add_argument("--evenness-values", dest="evenness_values")
    cv.add_argument("--evenness-interval", dest="evenness_interval")
    cv.add_argument("--evenness-points", dest="evenness_points", type=int)
    cv.add_argument("--ls", help="comma-separated cluster counts")
    cv.add_argument("--out")
    cv.set_defaults(func=cmd_cv)

    bd = sub.add_parser("bound", help="Rademacher and generalization bounds")
    bd.add_argument("--model")
    bd.add_argument("--assignment", choices=("uniform", "hard"))
    bd.add_argument("--l", type=int)
    bd.add_argument("--n", type=int)
    bd.add_argument("--M", type=int)
    bd.add_argument("--p", type=float)
    bd.add_argument("--D", type=float)
    bd.add_argument("--B", type=float, default=1.0)
    bd.add_argument("--delta", type=float, default=0.05)
    bd.add_argument("--loss-bound", dest="loss_bound", type=float, default=1.0)
    bd.add_argument("--empirical-risk", dest="empirical_risk", type=float, default=0.0)
    bd.add_argument("--out")
    bd.set_defaults(func=cmd_bound)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ValueError, OSError, kernels.KernelFormatError,
            modelio.ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
