import math

import numpy as np
import pytest

from reidpipe.errors import (CrcMismatch, DimMismatch, EmptySet, FormatError,
                             InsufficientPairs, RankReducedWarning,
                             SingularCovariance)
from reidpipe.metric import (MahalanobisModel, MetricModel, PairSet, PcaModel,
                             euclidean_dist, fit_kissme, fit_pca,
                             identity_metric, load_model, maha_dist, project,
                             save_model, set_distance_avg, set_distance_min)


def brute_min(x, y):
    best = math.inf
    for a in x:
        for b in y:
            d = math.sqrt(sum((ai - bi) ** 2 for ai, bi in zip(a, b)))
            best = min(best, d)
    return best


def brute_avg(x, y):
    d = [[math.sqrt(sum((ai - bi) ** 2 for ai, bi in zip(a, b))) for b in y]
         for a in x]
    row = sum(min(r) for r in d)
    col = sum(min(d[i][j] for i in range(len(x))) for j in range(len(y)))
    return row / (2 * len(x)) + col / (2 * len(y))


class TestPca:
    def test_single_axis_data(self):
        rng = np.random.default_rng(0)
        t = rng.standard_normal(50)
        X = np.zeros((50, 4))
        X[:, 2] = t  # all variance on axis 2
        with pytest.warns(RankReducedWarning):
            model = fit_pca(X, p=2)  # rank 1 forces a reduction
        assert model.p == 1
        axis = np.zeros(4)
        axis[2] = 1.0
        assert np.allclose(np.abs(model.components[0]), axis, atol=1e-10)
        assert model.components[0][2] > 0  # sign convention

    def test_full_rank_projection_preserves_distances(self):
        rng = np.random.default_rng(1)
        n, d = 12, 11
        X = rng.standard_normal((n, d))
        model = fit_pca(X, p=n - 1)
        Z = project(model, X)
        for i in range(n):
            for j in range(i + 1, n):
                orig = np.linalg.norm(X[i] - X[j])
                proj = np.linalg.norm(Z[i] - Z[j])
                assert proj == pytest.approx(orig, rel=1e-6)

    def test_reconstruction_error_equals_discarded_eigenvalues(self):
        rng = np.random.default_rng(2)
        n, d, p = 200, 10, 5
        X = rng.standard_normal((n, d)) @ np.diag(np.linspace(3, 0.5, d))
        model = fit_pca(X, p=p)

        centered = X - X.mean(axis=0)
        recon = project(model, X) @ model.components
        err = np.sum((centered - recon) ** 2) / (n - 1)

        # oracle: eigendecomposition of the explicitly formed covariance
        cov = centered.T @ centered / (n - 1)
        eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
        assert err == pytest.approx(eig[p:].sum(), rel=1e-6)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(3)
        model = fit_pca(rng.standard_normal((40, 8)), p=5)
        gram = model.components @ model.components.T
        assert np.allclose(gram, np.eye(5), atol=1e-8)

    def test_projected_training_mean_is_zero(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((60, 7)) + 5.0
        model = fit_pca(X, p=3)
        assert np.all(np.abs(project(model, X).mean(axis=0)) <= 1e-8)


class TestProject:
    @pytest.fixture()
    def model(self):
        rng = np.random.default_rng(5)
        return fit_pca(rng.standard_normal((30, 6)), p=4)

    def test_mean_projects_to_zero(self, model):
        assert np.allclose(project(model, model.mean), 0.0, atol=1e-12)

    def test_component_projects_to_unit_vector(self, model):
        v = model.mean + model.components[0]
        out = project(model, v)
        expected = np.zeros(model.p)
        expected[0] = 1.0
        assert np.allclose(out, expected, atol=1e-10)

    def test_batch_equals_per_vector(self, model):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((9, 6))
        batch = project(model, X)
        single = np.stack([project(model, v) for v in X])
        assert np.allclose(batch, single, atol=1e-12)

    def test_dim_mismatch(self, model):
        with pytest.raises(DimMismatch):
            project(model, np.zeros(5))


class TestKissme:
    def test_identical_distributions_give_zero(self):
        rng = np.random.default_rng(7)
        diffs = rng.standard_normal((40, 3))
        pairs = PairSet(similar=[(d, np.zeros(3)) for d in diffs],
                        dissimilar=[(d, np.zeros(3)) for d in diffs])
        model = fit_kissme(pairs)
        assert np.allclose(model.matrix, 0.0, atol=1e-10)
        assert maha_dist(model, np.ones(3), np.zeros(3)) == 0.0

    def test_isotropic_closed_form(self):
        rng = np.random.default_rng(8)
        d, n = 4, 10_000
        sigma_s, sigma_d = 0.5, 2.0
        sim = [(v, np.zeros(d)) for v in
               rng.standard_normal((n, d)) * sigma_s]
        dis = [(v, np.zeros(d)) for v in
               rng.standard_normal((n, d)) * sigma_d]
        model = fit_kissme(PairSet(similar=sim, dissimilar=dis))
        c = 1 / sigma_s ** 2 - 1 / sigma_d ** 2
        assert np.all(np.abs(model.matrix - c * np.eye(d)) <= 0.05 * c)

    def test_insufficient_pairs(self):
        with pytest.raises(InsufficientPairs):
            fit_kissme(PairSet(similar=[], dissimilar=[]))

    def test_singular_covariance(self):
        zeros = [(np.zeros(3), np.zeros(3))] * 5
        with pytest.raises(SingularCovariance):
            fit_kissme(PairSet(similar=zeros, dissimilar=zeros))

    def test_psd_after_clipping(self):
        rng = np.random.default_rng(9)
        sim = [(v, np.zeros(3)) for v in rng.standard_normal((50, 3)) * 2.0]
        dis = [(v, np.zeros(3)) for v in rng.standard_normal((50, 3)) * 0.5]
        # dissimilar tighter than similar: raw difference matrix is negative
        model = fit_kissme(PairSet(similar=sim, dissimilar=dis))
        for v in rng.standard_normal((100, 3)):
            q = v @ model.matrix @ v
            assert q >= -1e-9 * (v @ v)


class TestMahalanobis:
    def test_zero_for_equal_vectors(self):
        m = identity_metric(3)
        v = np.array([1.0, 2.0, 3.0])
        assert maha_dist(m, v, v) == 0.0

    def test_identity_matches_euclidean(self):
        rng = np.random.default_rng(10)
        m = identity_metric(6)
        for _ in range(200):
            a, b = rng.standard_normal(6), rng.standard_normal(6)
            assert maha_dist(m, a, b) == pytest.approx(
                np.linalg.norm(a - b), abs=1e-12)

    def test_diagonal_closed_form(self):
        m = MahalanobisModel(matrix=np.diag([4.0, 0.0]))
        assert maha_dist(m, np.array([1.0, 7.0]), np.zeros(2)) == \
            pytest.approx(2.0)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            maha_dist(identity_metric(3), np.zeros(2), np.zeros(2))


class TestSetDistances:
    def test_single_pair(self):
        x, y = [np.array([0.0, 0.0])], [np.array([3.0, 4.0])]
        assert set_distance_min(x, y) == pytest.approx(5.0)
        assert set_distance_avg(x, y) == pytest.approx(5.0)

    def test_identical_sets_are_zero(self):
        x = [np.array([1.0, 2.0]), np.array([3.0, 4.0])]
        assert set_distance_min(x, x) == 0.0
        assert set_distance_avg(x, x) == 0.0

    def test_min_brute_force_example(self):
        x = [np.array([0.0, 0.0]), np.array([10.0, 0.0])]
        y = [np.array([3.0, 4.0]), np.array([10.0, 1.0])]
        assert set_distance_min(x, y) == pytest.approx(1.0)

    def test_avg_brute_force_example(self):
        x = [np.array([0.0, 0.0]), np.array([4.0, 0.0])]
        y = [np.array([0.0, 0.0])]
        assert set_distance_avg(x, y) == pytest.approx(1.0)

    def test_symmetry_against_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            nx, ny = rng.integers(1, 7, size=2)
            d = int(rng.integers(2, 9))
            x = [rng.standard_normal(d) for _ in range(nx)]
            y = [rng.standard_normal(d) for _ in range(ny)]
            assert set_distance_min(x, y) == pytest.approx(
                set_distance_min(y, x), rel=1e-12)
            assert set_distance_avg(x, y) == pytest.approx(
                set_distance_avg(y, x), rel=1e-12)
            assert set_distance_min(x, y) == pytest.approx(
                brute_min(x, y), rel=1e-12)
            assert set_distance_avg(x, y) == pytest.approx(
                brute_avg(x, y), rel=1e-12)

    def test_empty_set(self):
        with pytest.raises(EmptySet):
            set_distance_min([], [np.zeros(2)])
        with pytest.raises(EmptySet):
            set_distance_avg([np.zeros(2)], [])

    def test_scaling_preserves_order(self):
        rng = np.random.default_rng(12)
        sets = [[rng.standard_normal(4) for _ in range(3)] for _ in range(6)]
        base = [set_distance_avg(sets[0], s) for s in sets[1:]]
        scaled_sets = [[5.0 * v for v in s] for s in sets]
        scaled = [set_distance_avg(scaled_sets[0], s) for s in scaled_sets[1:]]
        for b, s in zip(base, scaled):
            assert s == pytest.approx(5.0 * b, rel=1e-9)
        assert np.argsort(base).tolist() == np.argsort(scaled).tolist()


class TestModelSerialization:
    def _model(self, seed=13, n=40, d=7, p=4):
        rng = np.random.default_rng(seed)
        pca = fit_pca(rng.standard_normal((n, d)), p=p)
        sim = [(v, np.zeros(p)) for v in rng.standard_normal((60, p)) * 0.3]
        dis = [(v, np.zeros(p)) for v in rng.standard_normal((60, p))]
        return MetricModel(pca=pca,
                           maha=fit_kissme(PairSet(sim, dis)))

    def test_roundtrip_bit_exact(self, tmp_path):
        model = self._model()
        path = tmp_path / "model.rdm"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.pca.mean.tobytes() == model.pca.mean.tobytes()
        assert loaded.pca.components.tobytes() == \
            model.pca.components.tobytes()
        assert loaded.maha.matrix.tobytes() == model.maha.matrix.tobytes()

    def test_single_bit_corruption_detected(self, tmp_path):
        path = tmp_path / "model.rdm"
        save_model(self._model(), path)
        data = bytearray(path.read_bytes())
        rng = np.random.default_rng(14)
        for _ in range(20):
            i = int(rng.integers(4, len(data)))
            corrupted = bytearray(data)
            corrupted[i] ^= 1 << int(rng.integers(8))
            path.write_bytes(bytes(corrupted))
            with pytest.raises((CrcMismatch, FormatError)):
                load_model(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.rdm"
        save_model(self._model(), path)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_model(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "model.rdm"
        save_model(self._model(), path)
        path.write_bytes(path.read_bytes()[:10])
        with pytest.raises(FormatError):
            load_model(path)


class TestTypes:
    def test_pca_model_requires_orthonormal_rows(self):
        with pytest.raises(ValueError):
            PcaModel(mean=np.zeros(3), components=np.ones((2, 3)))

    def test_mahalanobis_requires_symmetry(self):
        m = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            MahalanobisModel(matrix=m)

    def test_mahalanobis_requires_psd(self):
        with pytest.raises(ValueError):
            MahalanobisModel(matrix=np.diag([1.0, -0.5]))

    def test_euclidean_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            euclidean_dist(np.zeros(2), np.zeros(3))