import json

import numpy as np
import pytest

from clmkl import clustering, lmkl, modelio, pipeline, train
from conftest import balanced_labels, random_bundle, random_psd


def fitted_clmkl(rng, tau=0.9):
    n = 18
    pts = rng.standard_normal((n, 2))
    K0 = pts @ pts.T
    mats = random_bundle(n, 2, rng)
    assign = clustering.kernel_kmeans(K0, 2, restarts=2, seed=1)
    dist = clustering.point_cluster_distances(K0, assign.labels, 2)
    lk = clustering.build_likelihood_model(K0, assign, tau, "cluster-kernel")
    c = clustering.likelihoods(dist, tau)
    y = balanced_labels(n, rng)
    model, _ = train.train_clmkl(
        mats, y, c, p=1.33, C=1.0, likelihood_model=lk, kernel_names=["ka", "kb"]
    )
    return model, mats, K0


class TestClmklRoundTrip:
    def test_predictions_bit_identical(self, rng, tmp_path):
        model, mats, K0 = fitted_clmkl(rng)
        path = tmp_path / "model.json"
        modelio.save_model(model, path, "clmkl")
        loaded, algorithm, norm = modelio.load_model(path)
        assert algorithm == "clmkl"
        f1 = train.predict(model, mats, cluster_cross=K0)
        f2 = train.predict(loaded, mats, cluster_cross=K0)
        assert f1.tobytes() == f2.tobytes()

    def test_save_is_canonical(self, rng, tmp_path):
        model, _, _ = fitted_clmkl(rng)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        modelio.save_model(model, p1, "clmkl")
        modelio.save_model(model, p2, "clmkl")
        assert p1.read_bytes() == p2.read_bytes()

    def test_fields_survive(self, rng, tmp_path):
        model, _, _ = fitted_clmkl(rng)
        path = tmp_path / "model.json"
        modelio.save_model(model, path, "clmkl")
        loaded, _, _ = modelio.load_model(path)
        assert loaded.p == model.p and loaded.C == model.C
        assert loaded.loss == train.HINGE
        assert np.array_equal(loaded.beta, model.beta)
        assert np.array_equal(loaded.alpha, model.alpha)
        assert loaded.likelihood_model.tau == model.likelihood_model.tau
        assert loaded.likelihood_model.clustering_kernel_id == "cluster-kernel"
        assert loaded.kernel_names == ["ka", "kb"]

    def test_infinite_tau(self, rng, tmp_path):
        model, mats, K0 = fitted_clmkl(rng, tau=np.inf)
        path = tmp_path / "model.json"
        modelio.save_model(model, path, "clmkl")
        loaded, _, _ = modelio.load_model(path)
        assert np.isinf(loaded.likelihood_model.tau)
        json.loads(path.read_text())  # document stays valid JSON

    def test_normalization_state_round_trip(self, rng, tmp_path):
        model, _, _ = fitted_clmkl(rng)
        norm = pipeline.NormalizationState("multiplicative")
        norm.train_diagonals = [np.arange(1.0, 19.0), np.arange(2.0, 20.0)]
        path = tmp_path / "model.json"
        modelio.save_model(model, path, "clmkl", norm)
        _, _, norm2 = modelio.load_model(path)
        assert norm2.mode == "multiplicative"
        assert np.array_equal(norm2.train_diagonals[0], norm.train_diagonals[0])


class TestLmklRoundTrip:
    def test_predictions_bit_identical(self, rng, tmp_path):
        n = 14
        mats = random_bundle(n, 2, rng)
        K0 = random_psd(n, rng)
        y = balanced_labels(n, rng)
        model = lmkl.train_lmkl(mats, K0, y, C=1.0, steps=3, kernel_names=["a", "b"])
        path = tmp_path / "model.json"
        modelio.save_model(model, path, "lmkl")
        loaded, algorithm, _ = modelio.load_model(path)
        assert algorithm == "lmkl"
        f1 = lmkl.predict_lmkl(model, mats, K0)
        f2 = lmkl.predict_lmkl(loaded, mats, K0)
        assert f1.tobytes() == f2.tobytes()


class TestOvaRoundTrip:
    def test_predictions_identical(self, rng, tmp_path):
        n = 24
        centers = np.array([[0, 0], [4, 0], [0, 4]])
        labels = (np.arange(n) % 3).astype(float)
        pts = centers[np.arange(n) % 3] + 0.2 * rng.standard_normal((n, 2))
        K = pts @ pts.T
        ova = train.train_one_vs_all(
            [K], labels, np.ones((n, 1)), p=2.0, C=5.0, kernel_names=["k"]
        )
        path = tmp_path / "model.json"
        modelio.save_model(ova, path, "clmkl")
        loaded, _, _ = modelio.load_model(path)
        p1, s1 = train.predict_one_vs_all(ova, [K])
        p2, s2 = train.predict_one_vs_all(loaded, [K])
        assert np.array_equal(p1, p2)
        assert s1.tobytes() == s2.tobytes()


class TestErrors:
    def test_unknown_schema(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"schema": "mystery/9"}')
        with pytest.raises(modelio.ModelFormatError, match="schema"):
            modelio.load_model(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("not json {")
        with pytest.raises(modelio.ModelFormatError, match="JSON"):
            modelio.load_model(path)
