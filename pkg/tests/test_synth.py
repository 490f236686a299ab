import math

import numpy as np
import pytest

from fanoise_lab.errors import DegenerateSpectrumError, InvalidParameterError
from fanoise_lab.matrix import RngStream, thin_svd
from fanoise_lab.synth import (
    Explicit,
    LogLinear,
    PairedDatasetSpec,
    PowerLaw,
    SpectrumSpec,
    haar_orthonormal,
    make_paired_dataset,
    make_spectrum_matrix,
)
from fanoise_lab.trainer import evaluate_p_at_1


class TestSpectrumMatrix:
    def test_explicit_round_trip(self):
        x = make_spectrum_matrix(SpectrumSpec(3, 3, Explicit((3.0, 2.0, 1.0)), RngStream(1)))
        np.testing.assert_allclose(thin_svd(x).s, [3, 2, 1], atol=1e-10)

    def test_flat_power_law(self):
        x = make_spectrum_matrix(SpectrumSpec(10, 8, PowerLaw(0.0, 2.0), RngStream(2)))
        np.testing.assert_allclose(thin_svd(x).s, 2.0, rtol=1e-12)

    def test_random_specs_round_trip(self):
        gen = np.random.default_rng(3)
        for i in range(100):
            m, n = int(gen.integers(1, 40)), int(gen.integers(1, 40))
            r = int(gen.integers(1, min(m, n) + 1))
            s = np.sort(gen.uniform(0.1, 10, r))[::-1]
            x = make_spectrum_matrix(SpectrumSpec(m, n, Explicit(tuple(s)), RngStream(i)))
            np.testing.assert_allclose(thin_svd(x).s, s, rtol=1e-9)

    def test_log_linear_fixture_shape(self):
        ts = math.sqrt(1000 / 1536)
        spec = SpectrumSpec(1000, 1536, LogLinear(5 * ts, 0.1 * ts, 24), RngStream(0))
        s = spec.singular_values()
        assert s[0] == pytest.approx(5 * ts) and s[-1] == pytest.approx(0.1 * ts)

    def test_rejects_increasing(self):
        with pytest.raises(DegenerateSpectrumError):
            make_spectrum_matrix(SpectrumSpec(3, 3, Explicit((1.0, 2.0)), RngStream(0)))

    def test_rejects_nonpositive(self):
        with pytest.raises(DegenerateSpectrumError):
            make_spectrum_matrix(SpectrumSpec(3, 3, Explicit((1.0, 0.0)), RngStream(0)))

    def test_haar_deterministic_orthonormal(self):
        a = haar_orthonormal(7, 4, RngStream(5))
        assert a.tobytes() == haar_orthonormal(7, 4, RngStream(5)).tobytes()
        np.testing.assert_allclose(a.T @ a, np.eye(4), atol=1e-12)


class TestPairedDataset:
    def test_noiseless_tied_views(self):
        ds = make_paired_dataset(PairedDatasetSpec(num_pairs=64, num_eval=64, tied_views=True, rng=RngStream(1)))
        np.testing.assert_array_equal(ds.train_x, ds.train_y)
        assert evaluate_p_at_1(None, ds) == 1.0

    def test_deterministic(self):
        spec = PairedDatasetSpec(num_pairs=32, num_eval=20, view_noise=0.3, rng=RngStream(9))
        a, b = make_paired_dataset(spec), make_paired_dataset(spec)
        for name in ("train_x", "train_y", "eval_query", "eval_positive", "eval_distractors"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()

    def test_disjoint_and_distractors(self):
        ds = make_paired_dataset(PairedDatasetSpec(num_pairs=50, num_eval=30, num_distractors_eval=15, rng=RngStream(2)))
        assert not set(ds.train_index) & set(ds.eval_index)
        assert ds.eval_distractors.shape == (30, 15, 32)
        for i in range(30):
            for d in ds.eval_distractors[i]:
                assert not np.array_equal(d, ds.eval_positive[i])

    def test_chance_level(self):
        spec = PairedDatasetSpec(num_pairs=16, num_eval=1024, view_noise=10.0, num_distractors_eval=15, rng=RngStream(3))
        p1 = evaluate_p_at_1(None, make_paired_dataset(spec))
        sd = math.sqrt((1 / 16) * (15 / 16) / 1024)
        assert abs(p1 - 1 / 16) <= 3 * sd

    def test_export(self, tmp_path):
        ds = make_paired_dataset(PairedDatasetSpec(num_pairs=8, num_eval=6, num_distractors_eval=3, rng=RngStream(4)))
        ds.export(tmp_path)
        manifest = dict(l.split("=", 1) for l in (tmp_path / "manifest.txt").read_text().splitlines())
        assert manifest["num_pairs"] == "8" and manifest["seed"] == "4"
        assert (tmp_path / "eval_distractors.csv").read_text().startswith("# rows=18 cols=32")

    def test_invalid_spec(self):
        with pytest.raises(InvalidParameterError):
            PairedDatasetSpec(latent_dim=40, feature_dim=32)
        with pytest.raises(InvalidParameterError):
            PairedDatasetSpec(num_pairs=1)
