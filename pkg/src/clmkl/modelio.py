"""Model (de)serialization: one versioned JSON document per trained model.

Floats are emitted through repr, which round-trips float64 exactly; the
document is rendered canonically (sorted keys, fixed separators) so retrained
models from the same seed are byte-identical.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import lmkl, train
from .clustering import LikelihoodModel
from .kernels import atomic_write_text
from .pipeline import NormalizationState

CLMKL_SCHEMA = "clmkl-model/1"
OVA_SCHEMA = "clmkl-ova/1"
LMKL_SCHEMA = "lmkl-model/1"


class ModelFormatError(ValueError):
    pass


def _tau_out(tau: float):
    return "inf" if math.isinf(tau) else float(tau)


def _tau_in(value) -> float:
    return math.inf if value == "inf" else float(value)


def _likelihood_out(lm: LikelihoodModel) -> dict:
    return {
        "tau": _tau_out(lm.tau),
        "member_sets": [[int(i) for i in s] for s in lm.member_sets],
        "intra_cluster_term": lm.intra_cluster_term.tolist(),
        "clustering_kernel": lm.clustering_kernel_id,
    }


def _likelihood_in(doc: dict) -> LikelihoodModel:
    return LikelihoodModel(
        [np.asarray(s, dtype=np.intp) for s in doc["member_sets"]],
        _tau_in(doc["tau"]),
        np.asarray(doc["intra_cluster_term"], dtype=np.float64),
        doc.get("clustering_kernel", ""),
    )


def _norm_out(norm: NormalizationState | None) -> dict:
    if norm is None:
        return {"mode": "none"}
    return {
        "mode": norm.mode,
        "train_diagonals": [d.tolist() for d in norm.train_diagonals],
        "trace_scales": [float(s) for s in norm.trace_scales],
    }


def _norm_in(doc: dict) -> NormalizationState:
    state = NormalizationState(doc.get("mode", "none"))
    state.train_diagonals = [
        np.asarray(d, dtype=np.float64) for d in doc.get("train_diagonals", [])
    ]
    state.trace_scales = list(doc.get("trace_scales", []))
    return state


def _binary_payload(model: train.ClmklModel) -> dict:
    return {
        "alpha": model.alpha.tolist(),
        "bias": float(model.bias),
        "beta": model.beta.tolist(),
        "weight_norms_sq": (
            model.weight_norms_sq.tolist() if model.weight_norms_sq is not None else None
        ),
    }


def _binary_restore(payload: dict, shared: dict) -> train.ClmklModel:
    return train.ClmklModel(
        beta=np.asarray(payload["beta"], dtype=np.float64),
        alpha=np.asarray(payload["alpha"], dtype=np.float64),
        bias=float(payload["bias"]),
        p=shared["p"],
        C=shared["C"],
        loss=shared["loss"],
        eps=shared["eps"],
        y=shared["y"],
        train_likelihoods=shared["train_likelihoods"],
        likelihood_model=shared["likelihood_model"],
        weight_norms_sq=(
            np.asarray(payload["weight_norms_sq"], dtype=np.float64)
            if payload.get("weight_norms_sq") is not None
            else None
        ),
        kernel_names=shared["kernel_names"],
    )


def model_document(model, algorithm: str, normalization=None) -> dict:
    """JSON-ready dict for a ClmklModel, OneVsAllModel, or LmklModel."""
    if isinstance(model, lmkl.LmklModel):
        return {
            "schema": LMKL_SCHEMA,
            "algorithm": "lmkl",
            "C": float(model.C),
            "alpha": model.alpha.tolist(),
            "bias": float(model.bias),
            "labels": model.y.tolist(),
            "gating_r": model.gating.r.tolist(),
            "gating_v0": model.gating.v0.tolist(),
            "train_eta": model.train_eta.tolist(),
            "clustering_kernel": model.gating.clustering_kernel_id,
            "kernel_names": list(model.kernel_names),
            "normalization": _norm_out(normalization),
        }
    if isinstance(model, train.OneVsAllModel):
        first = model.models[0]
        return {
            "schema": OVA_SCHEMA,
            "algorithm": algorithm,
            "classes": [float(c) for c in model.classes],
            "per_class": [
                dict(_binary_payload(m), labels=m.y.tolist()) for m in model.models
            ],
            **_shared_out(first),
            "normalization": _norm_out(normalization),
        }
    doc = {
        "schema": CLMKL_SCHEMA,
        "algorithm": algorithm,
        **_binary_payload(model),
        "labels": model.y.tolist() if model.y is not None else None,
        **_shared_out(model),
        "normalization": _norm_out(normalization),
    }
    return doc


def _shared_out(model: train.ClmklModel) -> dict:
    return {
        "p": float(model.p),
        "C": float(model.C),
        "loss": model.loss,
        "eps": float(model.eps),
        "train_likelihoods": model.train_likelihoods.tolist(),
        "likelihood": (
            _likelihood_out(model.likelihood_model)
            if model.likelihood_model is not None
            else None
        ),
        "kernel_names": list(model.kernel_names),
    }


def _shared_in(doc: dict, labels) -> dict:
    return {
        "p": float(doc["p"]),
        "C": float(doc["C"]),
        "loss": doc["loss"],
        "eps": float(doc["eps"]),
        "y": np.asarray(labels, dtype=np.float64) if labels is not None else None,
        "train_likelihoods": np.asarray(doc["train_likelihoods"], dtype=np.float64),
        "likelihood_model": (
            _likelihood_in(doc["likelihood"]) if doc.get("likelihood") else None
        ),
        "kernel_names": list(doc["kernel_names"]),
    }


def render(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def save_model(model, path, algorithm: str, normalization=None) -> None:
    atomic_write_text(path, render(model_document(model, algorithm, normalization)))


def load_model(path):
    """Returns (model object, algorithm, NormalizationState)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    schema = doc.get("schema")
    norm = _norm_in(doc.get("normalization", {}))
    if schema == LMKL_SCHEMA:
        model = lmkl.LmklModel(
            gating=lmkl.GatingState(
                np.asarray(doc["gating_r"], dtype=np.float64),
                np.asarray(doc["gating_v0"], dtype=np.float64),
                doc.get("clustering_kernel", ""),
            ),
            alpha=np.asarray(doc["alpha"], dtype=np.float64),
            bias=float(doc["bias"]),
            C=float(doc["C"]),
            y=np.asarray(doc["labels"], dtype=np.float64),
            train_eta=np.asarray(doc["train_eta"], dtype=np.float64),
            kernel_names=list(doc["kernel_names"]),
        )
        return model, "lmkl", norm
    if schema == OVA_SCHEMA:
        models = []
        for payload in doc["per_class"]:
            shared = _shared_in(doc, payload["labels"])
            models.append(_binary_restore(payload, shared))
        ova = train.OneVsAllModel(np.asarray(doc["classes"], dtype=np.float64), models)
        return ova, doc["algorithm"], norm
    if schema == CLMKL_SCHEMA:
        shared = _shared_in(doc, doc.get("labels"))
        return _binary_restore(doc, shared), doc["algorithm"], norm
    raise ModelFormatError(f"{path}: unknown model schema {schema!r}")
