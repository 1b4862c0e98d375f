import math

import numpy as np
import pytest

from l1net.nets import DimensionMismatch
from l1net.targets import (Atom, DataDistribution, Dataset, NoiseSpec, TargetSpec,
                           UnsupportedDistribution, barron_constant, cosine_target, derive_seed,
                           eval_target, min_admissible_V, read_dataset_csv, sample_dataset,
                           write_dataset_csv)

BOX1 = DataDistribution("uniform-box", 1, 1.0)


def test_eval_examples():
    assert eval_target(TargetSpec((), 3), np.array([1.0, 2.0, 3.0])) == 0.0
    assert eval_target(TargetSpec((Atom(1.0, (1.0, 0.0)),), 2), np.zeros(2)) == 1.0
    t = TargetSpec((Atom(2.0, (1.0, 1.0), math.pi / 2),), 2)
    assert eval_target(t, np.array([math.pi / 4, math.pi / 4])) == pytest.approx(-2.0, abs=1e-14)


def test_eval_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        eval_target(cosine_target(2), np.zeros(3))
    with pytest.raises(DimensionMismatch):
        TargetSpec((Atom(1.0, (1.0,)),), 2)


def test_depends_only_on_support():
    rng = np.random.default_rng(0)
    t = TargetSpec((Atom(1.5, (0.0, 2.0, 0.0, -1.0), 0.3), Atom(-0.5, (0.0, 1.0, 0.0, 0.0))), 4)
    assert t.support == {1, 3}
    X = rng.uniform(-1, 1, size=(100, 4))
    Y = X.copy()
    Y[:, [0, 2]] = rng.normal(size=(100, 2)) * 10
    np.testing.assert_array_equal(eval_target(t, X), eval_target(t, Y))


def test_barron_examples():
    assert barron_constant(TargetSpec((), 2), DataDistribution(d=2)) == 0.0
    assert barron_constant(cosine_target(1), BOX1) == 1.0
    t = TargetSpec((Atom(2.0, (1.0, 1.0)), Atom(0.5, (0.0, 3.0))), 2)
    assert barron_constant(t, DataDistribution("uniform-box", 2, 2.0)) == 11.0


def test_barron_homogeneous():
    t = TargetSpec((Atom(2.0, (1.0, -1.0)), Atom(0.5, (0.0, 3.0), 1.0)), 2)
    t3 = TargetSpec(tuple(Atom(3 * a.amplitude, a.frequency, a.phase) for a in t.atoms), 2)
    box = DataDistribution(d=2, M=1.0)
    assert barron_constant(t3, box) == pytest.approx(3 * barron_constant(t, box))
    assert barron_constant(t, DataDistribution(d=2, M=4.0)) == pytest.approx(
        4 * barron_constant(t, box))


def test_barron_needs_box():
    with pytest.raises(UnsupportedDistribution):
        barron_constant(cosine_target(2), DataDistribution("standard-gaussian", 2))
    with pytest.raises(UnsupportedDistribution):
        min_admissible_V(cosine_target(2), DataDistribution("standard-gaussian", 2))


def test_min_admissible():
    assert min_admissible_V(TargetSpec((), 1), BOX1) == 0.0
    assert min_admissible_V(cosine_target(1), BOX1) == 3.0
    assert min_admissible_V(cosine_target(1, phase=math.pi / 2), BOX1) == pytest.approx(2.0)


def test_with_dim_keeps_function():
    t = cosine_target(1)
    t5 = t.with_dim(5)
    assert t5.d == 5 and t5.support == {0} and t5.name == "cos(x1)"
    x = np.array([0.3, 9.0, -2.0, 1.0, 4.0])
    assert eval_target(t5, x) == eval_target(t, x[:1])
    with pytest.raises(ValueError):
        cosine_target(3, k=3).with_dim(2)


class TestNoise:
    def test_mean_abs_closed_forms(self):
        assert NoiseSpec.gaussian(2.0).mean_abs() == pytest.approx(2.0 * math.sqrt(2 / math.pi))
        assert NoiseSpec.laplace(0.7).mean_abs() == 0.7
        assert NoiseSpec.none().mean_abs() == 0.0

    @pytest.mark.parametrize("noise", [NoiseSpec.gaussian(0.8), NoiseSpec.laplace(0.5)])
    def test_mean_abs_matches_sampling(self, noise):
        eps = noise.sample(np.random.default_rng(5), 400_000)
        se = np.abs(eps).std() / math.sqrt(eps.size)
        assert abs(np.abs(eps).mean() - noise.mean_abs()) < 4 * se

    def test_tau_bounds_variance(self):
        assert NoiseSpec.gaussian(0.3).tau == pytest.approx(0.3)
        assert NoiseSpec.laplace(1.0).tau == pytest.approx(math.sqrt(2))
        NoiseSpec.gaussian(0.3, tau=1.0)
        with pytest.raises(ValueError):
            NoiseSpec.laplace(1.0, tau=1.0)
        with pytest.raises(ValueError):
            NoiseSpec("cauchy", 1.0)


class TestSampling:
    def test_noiseless_labels_exact(self):
        t = cosine_target(3, k=2)
        data = sample_dataset(t, DataDistribution(d=3), NoiseSpec.none(), 50, seed=1)
        np.testing.assert_array_equal(data.y, eval_target(t, data.X))

    def test_box_support(self):
        data = sample_dataset(cosine_target(2), DataDistribution(d=2, M=1.0), NoiseSpec.none(),
                              1000, seed=2)
        assert np.abs(data.X).max() <= 1.0

    def test_gaussian_noise_moments(self):
        t = TargetSpec((), 1)
        data = sample_dataset(t, BOX1, NoiseSpec.gaussian(1.0), 100_000, seed=3)
        assert abs(data.y.mean()) < 3 / math.sqrt(1e5)
        assert abs((data.y ** 2).mean() - 1.0) < 0.05

    def test_reproducible_bytes(self):
        args = (cosine_target(2), DataDistribution(d=2), NoiseSpec.laplace(0.2), 64)
        a = sample_dataset(*args, seed=11)
        b = sample_dataset(*args, seed=11)
        c = sample_dataset(*args, seed=12)
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
        assert a.y.tobytes() != c.y.tobytes()

    def test_leading_columns_independent_of_d(self):
        noise = NoiseSpec.gaussian(0.3)
        small = sample_dataset(cosine_target(5), DataDistribution(d=5), noise, 40, seed=7)
        big = sample_dataset(cosine_target(50), DataDistribution(d=50), noise, 40, seed=7)
        np.testing.assert_array_equal(small.X, big.X[:, :5])
        np.testing.assert_array_equal(small.y, big.y)

    def test_gaussian_inputs(self):
        data = sample_dataset(cosine_target(2), DataDistribution("standard-gaussian", 2),
                              NoiseSpec.none(), 20_000, seed=4)
        assert abs(data.X.std() - 1.0) < 0.02

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_dataset(cosine_target(1), BOX1, NoiseSpec.none(), 0, seed=0)
        with pytest.raises(DimensionMismatch):
            sample_dataset(cosine_target(2), BOX1, NoiseSpec.none(), 5, seed=0)


def test_derive_seed():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    assert 0 <= derive_seed(0) < 2 ** 63


class TestDatasetCsv:
    def test_round_trip(self, tmp_path):
        data = sample_dataset(cosine_target(3), DataDistribution(d=3), NoiseSpec.gaussian(0.1),
                              25, seed=9)
        path = tmp_path / "data.csv"
        write_dataset_csv(data, path)
        assert path.read_text().splitlines()[0] == "x1,x2,x3,y"
        back = read_dataset_csv(path)
        np.testing.assert_array_equal(back.X, data.X)
        np.testing.assert_array_equal(back.y, data.y)

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,y\n0.5,1\n0.1\n")
        with pytest.raises(ValueError, match=":3:"):
            read_dataset_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_dataset_csv(path)

    def test_dataset_shape_check(self):
        with pytest.raises(DimensionMismatch):
            Dataset(np.zeros((3, 2)), np.zeros(4))
