import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fanoise_lab.errors import (
    DegenerateRowError,
    InvalidInputError,
    InvalidParameterError,
    MatrixParseError,
)
from fanoise_lab.matrix import (
    RngStream,
    gaussian_matrix,
    l2_normalize_rows,
    read_matrix_csv,
    singular_values,
    thin_svd,
    write_matrix_csv,
)


def assert_svd_invariants(x, f):
    m, n = x.shape
    r = f.rank
    assert f.u.shape == (m, r) and f.v.shape == (n, r)
    assert np.all(np.diff(f.s) <= 0)
    if r:
        assert f.s[-1] > f.truncation_tol * f.s[0]
        assert np.abs(f.u.T @ f.u - np.eye(r)).max() <= 1e-10
        assert np.abs(f.v.T @ f.v - np.eye(r)).max() <= 1e-10
    s0 = f.s[0] if r else 0.0
    err = np.linalg.norm((f.u * f.s) @ f.v.T - x)
    assert err <= 1e-9 * max(1.0, s0) * np.sqrt(m * n)


class TestThinSvd:
    def test_identity(self):
        f = thin_svd(np.eye(3), 0.0)
        np.testing.assert_allclose(f.s, [1, 1, 1])
        assert f.rank == 3

    def test_diagonal_truncates_zero(self):
        f = thin_svd(np.diag([3.0, 2.0, 0.0]), 1e-12)
        np.testing.assert_allclose(f.s, [3, 2])
        assert f.rank == 2

    def test_random_reconstruction(self, rng):
        x = rng.standard_normal((50, 20))
        f = thin_svd(x)
        explicit = f.u @ np.diag(f.s) @ f.v.T
        assert np.linalg.norm(explicit - x) <= 1e-9 * f.s[0] * np.sqrt(1000)

    def test_zero_matrix_rank_zero(self):
        f = thin_svd(np.zeros((4, 3)))
        assert f.rank == 0 and f.u.shape == (4, 0) and f.v.shape == (3, 0)

    def test_sign_convention(self, rng):
        f = thin_svd(rng.standard_normal((12, 7)))
        idx = np.argmax(np.abs(f.v), axis=0)
        assert np.all(f.v[idx, np.arange(f.rank)] > 0)

    def test_rejects_nonfinite(self):
        x = np.ones((2, 2))
        x[0, 1] = np.nan
        with pytest.raises(InvalidInputError):
            thin_svd(x)

    def test_rejects_bad_tolerance(self):
        with pytest.raises(InvalidParameterError):
            thin_svd(np.eye(2), 1.0)

    def test_invariants_across_shapes(self):
        dims = (1, 2, 5, 20, 100)
        shapes = list(itertools.product(dims, dims))
        gen = np.random.default_rng(7)
        for i in range(1000):
            m, n = shapes[i % len(shapes)]
            x = gen.standard_normal((m, n)) * 10.0 ** gen.uniform(-3, 3)
            f = thin_svd(x)
            assert_svd_invariants(x, f)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**32 - 1))
    def test_transpose_has_same_singular_values(self, m, n, seed):
        x = np.random.default_rng(seed).standard_normal((m, n))
        a, b = singular_values(x), singular_values(x.T)
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10 * a[0])

    def test_agrees_with_second_driver(self, rng):
        import scipy.linalg

        x = rng.standard_normal((40, 25)) * np.logspace(0, -6, 25)
        ref = scipy.linalg.svd(x, compute_uv=False, lapack_driver="gesvd")
        np.testing.assert_allclose(singular_values(x), ref, rtol=1e-9, atol=1e-12 * ref[0])

    def test_low_rank_truncation(self, rng):
        x = rng.standard_normal((30, 4)) @ rng.standard_normal((4, 25))
        assert thin_svd(x).rank == 4


class TestGaussianMatrix:
    def test_zero_sigma(self):
        np.testing.assert_array_equal(gaussian_matrix(3, 4, 0.0, RngStream(1)), np.zeros((3, 4)))

    def test_moments(self):
        z = gaussian_matrix(1000, 1000, 1.0, RngStream(42))
        assert abs(z.mean()) <= 4 / np.sqrt(1e6)
        assert abs(z.var() - 1.0) <= 0.01

    def test_same_stream_bit_identical(self):
        a = gaussian_matrix(20, 30, 0.7, RngStream(5, 3))
        b = gaussian_matrix(20, 30, 0.7, RngStream(5, 3))
        assert a.tobytes() == b.tobytes()

    def test_distinct_streams_uncorrelated(self):
        a = gaussian_matrix(1, 100_000, 1.0, RngStream(5, 0)).ravel()
        b = gaussian_matrix(1, 100_000, 1.0, RngStream(5, 1)).ravel()
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01

    def test_derived_streams_uncorrelated(self):
        root = RngStream(11)
        a = gaussian_matrix(1, 100_000, 1.0, root.derive(0)).ravel()
        b = gaussian_matrix(1, 100_000, 1.0, root.derive(1)).ravel()
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
        assert root.derive(0) == root.derive(0)

    def test_negative_sigma(self):
        with pytest.raises(InvalidParameterError):
            gaussian_matrix(2, 2, -1.0, RngStream(0))


class TestNormalizeRows:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize_rows([[3.0, 4.0]]), [[0.6, 0.8]])

    def test_idempotent(self, rng):
        u = l2_normalize_rows(rng.standard_normal((5, 7)))
        np.testing.assert_allclose(l2_normalize_rows(u), u, rtol=0, atol=1e-15)

    def test_unit_norms(self, rng):
        u = l2_normalize_rows(rng.standard_normal((8, 16)))
        norms = np.sqrt((u**2).sum(axis=1))
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_degenerate_row(self):
        with pytest.raises(DegenerateRowError) as info:
            l2_normalize_rows([[1.0, 0.0], [0.0, 0.0]])
        assert info.value.row == 1


class TestMatrixCsv:
    def test_round_trip_with_header(self, tmp_path, rng):
        x = rng.standard_normal((4, 3))
        write_matrix_csv(tmp_path / "m.csv", x)
        assert (tmp_path / "m.csv").read_text().startswith("# rows=4 cols=3\n")
        np.testing.assert_array_equal(read_matrix_csv(tmp_path / "m.csv"), x)

    def test_without_header(self, tmp_path):
        (tmp_path / "m.csv").write_text("1,2\n3,4\n")
        np.testing.assert_array_equal(read_matrix_csv(tmp_path / "m.csv"), [[1, 2], [3, 4]])

    def test_parse_error_reports_line(self, tmp_path):
        (tmp_path / "m.csv").write_text("# rows=2 cols=2\n1,2\n3,oops\n")
        with pytest.raises(MatrixParseError) as info:
            read_matrix_csv(tmp_path / "m.csv")
        assert info.value.line == 3

    def test_ragged_rows(self, tmp_path):
        (tmp_path / "m.csv").write_text("1,2\n3\n")
        with pytest.raises(MatrixParseError):
            read_matrix_csv(tmp_path / "m.csv")

    def test_header_mismatch(self, tmp_path):
        (tmp_path / "m.csv").write_text("# rows=3 cols=2\n1,2\n")
        with pytest.raises(MatrixParseError):
            read_matrix_csv(tmp_path / "m.csv")
