import math

import numpy as np
import pytest

from fanoise_lab.errors import InvalidInputError
from fanoise_lab.matrix import RngStream, gaussian_matrix, singular_values
from fanoise_lab.spectral import (
    collapse_index,
    degenerate_indices,
    max_overlap,
    mp_edges,
    run_spectrum_experiment,
    singular_overlap,
    spiked_covariance_check,
    tau_star,
    weyl_check,
)
from fanoise_lab.synth import LogLinear, PowerLaw, SpectrumSpec, make_spectrum_matrix, phase_transition_fixture


class TestClosedForms:
    def test_mp_edges_reference_values(self):
        lo, hi = mp_edges(1000, 1536, 1.0)
        assert lo == pytest.approx(0.193, abs=5e-4)
        assert hi == pytest.approx(1.807, abs=5e-4)
        # reported as roughly [0.2, 1.8] * alpha
        assert round(lo, 1) == 0.2 and round(hi, 1) == 1.8

    def test_mp_edges_square_and_zero(self):
        assert mp_edges(50, 50, 2.0)[0] == 0.0
        assert mp_edges(10, 30, 0.0) == (0.0, 0.0)

    def test_tau_star(self):
        assert tau_star(1000, 1536, 1.0) == pytest.approx(0.807, abs=5e-4)
        assert round(tau_star(1000, 1536, 0.3), 2) == 0.24
        assert round(tau_star(1000, 1536, 1.0), 1) == 0.8
        assert tau_star(40, 40, 0.7) == pytest.approx(0.7)

    @pytest.mark.parametrize("m,n", [(10, 40), (30, 40), (40, 40), (100, 25)])
    def test_tau_star_inside_bulk_iff_ratio_at_least_half(self, m, n):
        lo, hi = mp_edges(m, n, 1.0)
        t = tau_star(m, n, 1.0)
        assert (lo <= t <= hi) == (math.sqrt(m / n) >= 0.5)


class TestWeyl:
    def test_zero_noise(self, rng):
        f = rng.standard_normal((6, 9))
        gap, bound, viol = weyl_check(f, np.zeros_like(f))
        assert gap == 0.0 and bound == 0.0 and viol == 0

    def test_rank_one_plus_tiny_noise(self, rng):
        f = np.outer(rng.standard_normal(20), rng.standard_normal(30))
        gap, bound, viol = weyl_check(f, 1e-6 * rng.standard_normal(f.shape))
        assert viol == 0 and gap <= bound + 1e-9

    def test_random_sweep(self):
        gen = np.random.default_rng(12)
        for _ in range(500):
            m, n = int(gen.integers(1, 201)), int(gen.integers(1, 301))
            f = gen.standard_normal((m, n)) * gen.uniform(0.1, 10)
            noise = gen.standard_normal((m, n)) * gen.uniform(1e-3, 3)
            assert weyl_check(f, noise)[2] == 0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            weyl_check(np.ones((2, 3)), np.ones((3, 2)))


class TestOverlap:
    def test_identical(self, rng):
        f = rng.standard_normal((15, 10))
        np.testing.assert_allclose(singular_overlap(f, f), 1.0, atol=1e-10)
        np.testing.assert_allclose(max_overlap(f, f), 1.0, atol=1e-10)

    def test_well_separated_small_noise(self, rng):
        f = make_spectrum_matrix(SpectrumSpec(40, 30, LogLinear(10.0, 1.0, 6), RngStream(3)))
        noisy = f + 1e-3 * rng.standard_normal(f.shape)
        assert np.all(singular_overlap(f, noisy) >= 0.99)

    def test_phase_transition_fixture(self):
        f = phase_transition_fixture(seed=0)
        rep = run_spectrum_experiment(f, 1.0, RngStream(100))
        s = rep.sigma_base[: len(rep.overlaps)]
        assert np.median(rep.overlaps[s >= 2 * rep.tau_star]) >= 0.9
        assert np.median(rep.overlaps[s <= 0.5 * rep.tau_star]) <= 0.5

    def test_collapse_index(self):
        assert collapse_index([0.99, 0.95, 0.4, 0.9]) == 2
        assert collapse_index([0.99, 0.95]) == 2
        assert collapse_index([0.1, 0.95, 0.3], exclude=[0]) == 2

    def test_degenerate_indices(self):
        np.testing.assert_array_equal(degenerate_indices([3.0, 2.0, 2.0, 1.0]), [1, 2])
        assert degenerate_indices([3.0, 2.0, 1.0]).size == 0


class TestSpikedCovariance:
    def test_alpha_zero_exact(self, rng):
        f = rng.standard_normal((20, 15))
        assert spiked_covariance_check(f, 0.0, 100, RngStream(1)) <= 1e-10

    def test_pure_noise_wishart_mean(self):
        m, n, alpha = 60, 40, 0.5
        dev = spiked_covariance_check(np.zeros((m, n)), alpha, 400, RngStream(2))
        # entries of x^T x / reps have sd ~ alpha^2 sqrt(2m)/n / sqrt(reps); max over n^2 entries
        scale = alpha**2 * math.sqrt(2 * m) / n / math.sqrt(400)
        assert dev <= 6 * scale

    @pytest.mark.slow
    def test_convergence_rate(self):
        f = make_spectrum_matrix(SpectrumSpec(200, 300, PowerLaw(1.0, 3.0, 20), RngStream(4)))
        reps = [100, 400, 1600]
        devs = [spiked_covariance_check(f, 0.5, r, RngStream(5, r)) for r in reps]
        slope = np.polyfit(np.log(reps), np.log(devs), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.15)


class TestSpectrumExperiment:
    def test_alpha_zero(self, rng):
        f = rng.standard_normal((30, 20))
        rep = run_spectrum_experiment(f, 0.0, RngStream(1))
        np.testing.assert_array_equal(rep.sigma_noise, 0.0)
        np.testing.assert_allclose(rep.overlaps, 1.0, atol=1e-10)
        assert rep.weyl_max_gap == 0.0 and rep.weyl_violations == 0

    def test_pure_noise_edges(self):
        m, n = 1000, 1536
        rep = run_spectrum_experiment(np.zeros((m, n)), 1.0, RngStream(42))
        assert rep.sigma_noise.min() >= 0.97 * rep.mp_lower
        assert rep.sigma_noise.max() == pytest.approx(rep.mp_upper, rel=0.03)
        assert rep.sigma_noise.min() == pytest.approx(rep.mp_lower, rel=0.03)

    def test_report_invariants(self):
        f = make_spectrum_matrix(SpectrumSpec(80, 120, PowerLaw(1.0, 4.0, 20), RngStream(6)))
        rep = run_spectrum_experiment(f, 0.5, RngStream(7))
        assert rep.mp_lower <= rep.mp_upper
        assert rep.tau_star == pytest.approx(0.5 * math.sqrt(80 / 120))
        assert rep.weyl_violations == 0
        assert np.all((rep.overlaps >= 0) & (rep.overlaps <= 1))
        assert np.all(np.diff(rep.sigma_noisy) <= 0)

    def test_power_law_collapse_moves_with_alpha(self):
        idx = {}
        for alpha in (0.3, 1.0):
            f = make_spectrum_matrix(SpectrumSpec(1000, 1536, PowerLaw(1.0, 5.0, 32), RngStream(0)))
            idx[alpha] = run_spectrum_experiment(f, alpha, RngStream(1)).collapse_index()
        assert idx[0.3] > idx[1.0]

    def test_csv_and_meta(self, tmp_path, rng):
        f = rng.standard_normal((5, 4))
        rep = run_spectrum_experiment(f, 0.2, RngStream(3))
        rep.write_csv(tmp_path / "spectrum.csv")
        rep.write_meta(tmp_path / "spectrum.meta")
        lines = (tmp_path / "spectrum.csv").read_text().splitlines()
        assert lines[0] == "index,sigma_base,sigma_noise,sigma_noisy,overlap_abs"
        assert len(lines) == 5
        meta = dict(l.split("=", 1) for l in (tmp_path / "spectrum.meta").read_text().splitlines())
        assert set(meta) == {"m", "n", "alpha", "mp_lower", "mp_upper", "tau_star", "weyl_violations", "seed"}
        assert meta["seed"] == "3"
