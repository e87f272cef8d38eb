import numpy as np
import pytest

from hhdkit.fields import (MissingSampleError, annulus_gradient_part,
                           annulus_leray_exact, annulus_target, peaks,
                           peaks_gradient, read_samples, sampled_field,
                           write_samples)

from _oracles import (fd_curl_2d, fd_divergence, fd_gradient,
                      random_annulus_points)

# target values computed ahead of time with an independent computer-algebra
# differentiation of the closed-form target
TARGET_ORACLE = [
    ((0.3, -0.7), (-5.6465211484103614, 3.2558524154136363)),
    ((1.1, 0.4), (3.1100879025460717, -3.6747213971899852)),
    ((-0.8, 1.3), (1.7489593436509257, 2.2313808923089140)),
    ((1.9, -0.2), (-4.3705196747863910, -5.8431740631829716)),
    ((-1.5, -1.2), (-2.6872543668926833, 5.2052742849110244)),
]


def test_swirl_term_vanishes_at_origin():
    np.testing.assert_array_equal(annulus_leray_exact([0.0, 0.0]), np.zeros(2))


def test_target_matches_symbolic_oracle():
    for point, expected in TARGET_ORACLE:
        np.testing.assert_allclose(annulus_target(np.array(point)),
                                   np.array(expected), rtol=1e-12, atol=1e-12)


def test_peaks_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.uniform(-2.5, 2.5, 2)
        g = fd_gradient(lambda z: float(peaks(z[0], z[1])), x)
        px, py = peaks_gradient(x[0], x[1])
        np.testing.assert_allclose([px, py], g, rtol=1e-6, atol=1e-6)


def test_swirl_is_divergence_free():
    rng = np.random.default_rng(12)
    for x in random_annulus_points(rng, 10):
        assert abs(fd_divergence(lambda z: annulus_leray_exact(z), x)) < 1e-6


def test_swirl_tangent_to_annulus_boundary():
    rng = np.random.default_rng(13)
    for radius in (0.75, 2.0):
        theta = rng.uniform(0, 2 * np.pi, 10)
        pts = radius * np.column_stack([np.cos(theta), np.sin(theta)])
        normals = pts / radius
        vals = annulus_leray_exact(pts)
        dots = np.einsum("ij,ij->i", vals, normals)
        assert np.abs(dots).max() <= 1e-12


def test_remainder_is_a_gradient_field():
    # target minus swirl must be curl-free
    rng = np.random.default_rng(14)
    remainder = lambda z: annulus_target(z) - annulus_leray_exact(z)
    for x in random_annulus_points(rng, 10):
        assert abs(fd_curl_2d(remainder, x)) < 1e-6


def test_gradient_part_is_actual_gradient():
    rng = np.random.default_rng(15)
    for _ in range(5):
        x = rng.uniform(-2, 2, 2)
        g = fd_gradient(lambda z: float(peaks(z[0], z[1])), x)
        np.testing.assert_allclose(annulus_gradient_part(x), g, rtol=1e-6, atol=1e-6)


class TestSampledField:
    def test_lookup(self):
        f = sampled_field({(0.0, 0.0): (1.0, 2.0)})
        np.testing.assert_array_equal(f(np.array([0.0, 0.0])), [1.0, 2.0])

    def test_missing_point_named_in_error(self):
        f = sampled_field({(0.0, 0.0): (1.0, 2.0)})
        with pytest.raises(MissingSampleError, match=r"1\.0"):
            f(np.array([1.0, 1.0]))

    def test_batch_lookup(self):
        f = sampled_field({(0.0, 0.0): (1.0, 2.0), (1.0, 0.5): (-1.0, 0.0)})
        out = f(np.array([[1.0, 0.5], [0.0, 0.0]]))
        np.testing.assert_array_equal(out, [[-1.0, 0.0], [1.0, 2.0]])

    def test_inconsistent_table_rejected(self):
        with pytest.raises(ValueError):
            sampled_field({(0.0, 0.0): (1.0, 2.0, 3.0)})
        with pytest.raises(ValueError):
            sampled_field({})

    def test_csv_round_trip_identical(self, tmp_path):
        rng = np.random.default_rng(16)
        table = {tuple(rng.uniform(-2, 2, 2)): tuple(rng.standard_normal(2))
                 for _ in range(25)}
        f = sampled_field(table)
        path = tmp_path / "samples.csv"
        write_samples(f, path)
        back = read_samples(path)
        assert back.table == f.table
        path2 = tmp_path / "samples2.csv"
        write_samples(back, path2)
        assert path.read_text() == path2.read_text()

    def test_csv_header_validated(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            read_samples(path)
