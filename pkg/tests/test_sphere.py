import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stsw.sphere import (
    AT_INFINITY,
    DiscreteMeasure,
    OrthogonalTransform,
    geodesic_distance,
    load_point_cloud,
    random_orthogonal,
    sample_uniform_sphere,
    sample_vmf,
    save_point_cloud,
    stereographic_project,
    unit_vector,
)

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])


class TestGeodesicDistance:
    def test_identity(self):
        assert geodesic_distance(E1, E1) == 0.0

    def test_antipodal(self):
        assert geodesic_distance(E1, -E1) == pytest.approx(math.pi, abs=1e-15)

    def test_orthogonal(self):
        assert geodesic_distance(E1, E2) == pytest.approx(math.pi / 2, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            geodesic_distance(E1, np.array([1.0, 0.0]))

    def test_broadcasts(self, rng):
        a = sample_uniform_sphere(rng, 3, 5)
        b = sample_uniform_sphere(rng, 3, 4)
        d = geodesic_distance(a[:, None, :], b[None, :, :])
        assert d.shape == (5, 4)
        assert np.all((d >= 0) & (d <= math.pi))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric_and_triangle(self, seed):
        r = np.random.default_rng(seed)
        a, b, c = sample_uniform_sphere(r, 2, 3)
        assert geodesic_distance(a, b) == geodesic_distance(b, a)
        assert geodesic_distance(a, c) <= geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-12


class TestStereographicProject:
    def test_antipode_goes_to_origin(self, rng):
        x = sample_uniform_sphere(rng, 4, 1)[0]
        assert np.allclose(stereographic_project(x, -x), 0.0, atol=1e-15)

    def test_orthogonal_point_is_fixed(self):
        assert np.array_equal(stereographic_project(E1, E2), E2)

    def test_pole_is_at_infinity(self, rng):
        x = sample_uniform_sphere(rng, 2, 1)[0]
        assert stereographic_project(x, x) is AT_INFINITY

    def test_image_lies_in_hyperplane(self, rng):
        x, y = sample_uniform_sphere(rng, 5, 2)
        assert abs(stereographic_project(x, y) @ x) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            stereographic_project(E1, np.array([0.0, 1.0]))


class TestUniformSampling:
    def test_unit_norm(self):
        pts = sample_uniform_sphere(np.random.default_rng(42), 2, 3)
        assert pts.shape == (3, 3)
        assert np.all(np.abs(np.linalg.norm(pts, axis=1) - 1.0) <= 1e-12)

    def test_deterministic(self):
        a = sample_uniform_sphere(np.random.default_rng(42), 2, 3)
        b = sample_uniform_sphere(np.random.default_rng(42), 2, 3)
        assert np.array_equal(a, b)

    def test_mean_near_origin(self, rng):
        pts = sample_uniform_sphere(rng, 2, 10_000)
        assert np.linalg.norm(pts.mean(axis=0)) <= 0.05


class TestVmfSampling:
    def test_kappa_zero_matches_uniform_cosine_law(self, rng):
        mean = unit_vector([0.3, -0.2, 0.9])
        w = sample_vmf(rng, mean, 0.0, 10_000) @ mean
        # On S^2 the cosine to any fixed axis is uniform on [-1, 1].
        assert stats.kstest(w, stats.uniform(loc=-1, scale=2).cdf).pvalue > 0.01

    def test_cosine_law_for_positive_kappa(self, rng):
        kappa = 5.0
        mean = unit_vector([1.0, 1.0, 0.0])
        w = sample_vmf(rng, mean, kappa, 10_000) @ mean

        def cdf(t):
            return (np.exp(kappa * t) - np.exp(-kappa)) / (np.exp(kappa) - np.exp(-kappa))

        assert stats.kstest(w, cdf).pvalue > 0.01

    def test_huge_kappa_concentrates(self, rng):
        mean = unit_vector([0.0, 0.0, 1.0])
        pts = sample_vmf(rng, mean, 1e6, 5)
        assert np.all(geodesic_distance(pts, mean) < 0.01)

    def test_mean_direction(self, rng):
        mean = unit_vector([0.2, -0.5, 0.8])
        pts = sample_vmf(rng, mean, 50.0, 10_000)
        est = pts.mean(axis=0)
        assert geodesic_distance(est / np.linalg.norm(est), mean) < 0.05

    def test_higher_dimension_unit_norm(self, rng):
        pts = sample_vmf(rng, unit_vector(np.ones(11)), 20.0, 100)
        assert np.all(np.abs(np.linalg.norm(pts, axis=1) - 1.0) <= 1e-12)

    def test_negative_kappa_rejected(self, rng):
        with pytest.raises(ValueError, match="kappa"):
            sample_vmf(rng, E1, -1.0, 3)


class TestOrthogonal:
    def test_is_orthogonal(self, rng):
        q = random_orthogonal(rng, 4).matrix
        assert np.allclose(q @ q.T, np.eye(5), rtol=0, atol=1e-10)
        assert abs(abs(np.linalg.det(q)) - 1.0) <= 1e-10

    def test_preserves_norm(self, rng):
        g = random_orthogonal(rng, 2)
        v = sample_uniform_sphere(rng, 2, 1)[0]
        assert abs(np.linalg.norm(g.apply(v)) - 1.0) <= 1e-12

    def test_rejects_non_orthogonal(self):
        with pytest.raises(ValueError):
            OrthogonalTransform(np.array([[1.0, 0.1], [0.0, 1.0]]))


class TestDiscreteMeasure:
    def test_uniform_default(self, rng):
        m = DiscreteMeasure(sample_uniform_sphere(rng, 2, 4))
        assert np.array_equal(m.weights, np.full(4, 0.25))
        assert m.n == 4 and m.dim == 2

    def test_renormalizes_supports(self):
        m = DiscreteMeasure([[3.0, 4.0, 0.0]])
        assert np.allclose(m.supports, [[0.6, 0.8, 0.0]], atol=1e-15)

    @pytest.mark.parametrize(
        "weights, msg",
        [([0.5, 0.6], "sum"), ([1.5, -0.5], "nonnegative"), ([1.0], "weights")],
    )
    def test_bad_weights(self, weights, msg):
        with pytest.raises(ValueError, match=msg):
            DiscreteMeasure([[1.0, 0.0], [0.0, 1.0]], weights)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure(np.zeros((0, 3)))

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([[0.0, 0.0, 0.0]])

    def test_immutable(self, rng):
        m = DiscreteMeasure(sample_uniform_sphere(rng, 2, 2))
        with pytest.raises(ValueError):
            m.supports[0, 0] = 1.0


class TestPointCloudIO:
    def test_round_trip(self, tmp_path, rng):
        w = rng.random(5)
        m = DiscreteMeasure(sample_uniform_sphere(rng, 3, 5), w / w.sum())
        path = tmp_path / "cloud.csv"
        save_point_cloud(path, m)
        back = load_point_cloud(path)
        assert np.array_equal(back.supports, m.supports)
        assert np.allclose(back.weights, m.weights, rtol=0, atol=1e-15)

    def test_headerless_is_uniform(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("1,0,0\n0,1,0\n")
        m = load_point_cloud(path)
        assert m.dim == 2 and np.array_equal(m.weights, [0.5, 0.5])

    def test_non_unit_rows_warn(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("2,0,0\n0,1,0\n")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            m = load_point_cloud(path)
        assert any("renormalized" in str(w.message) for w in caught)
        assert np.allclose(np.linalg.norm(m.supports, axis=1), 1.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_point_cloud(tmp_path / "nope.csv")
