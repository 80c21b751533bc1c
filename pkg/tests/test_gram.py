import numpy as np
import pytest

from gramrec import (
    DataError,
    build_disjoint_gram,
    build_gram,
    build_user_weighted_gram,
    load_gram_stats,
    save_gram_stats,
)
from gramrec.gram import PROVENANCE_DISJOINT, PROVENANCE_PLAIN, PROVENANCE_USER_WEIGHTED

from conftest import binary_matrix, matrix_from_dense


def test_gram_small_example():
    x = matrix_from_dense([[1, 1], [0, 1]])
    stats = build_gram(x, x)
    np.testing.assert_array_equal(stats.g, [[1, 1], [1, 2]])
    np.testing.assert_array_equal(stats.c, [[1, 1], [1, 2]])
    assert stats.n_users == 2
    assert stats.mu is None
    assert not stats.centered
    assert stats.provenance == PROVENANCE_PLAIN


def test_gram_matches_dense_products(rng):
    x = binary_matrix(rng, 40, 9)
    yd = rng.random((40, 9)) * (rng.random((40, 9)) < 0.5)
    y = matrix_from_dense(yd)
    stats = build_gram(x, y)
    xd = x.matrix.toarray()
    np.testing.assert_allclose(stats.g, xd.T @ xd, atol=1e-12)
    np.testing.assert_allclose(stats.c, xd.T @ yd, atol=1e-12)


def test_gram_symmetric_and_psd(rng):
    x = binary_matrix(rng, 25, 7)
    stats = build_gram(x, x)
    np.testing.assert_array_equal(stats.g, stats.g.T)
    assert np.linalg.eigvalsh(stats.g).min() >= -1e-10


def test_gram_orthogonal_columns():
    x = matrix_from_dense([[1, 0], [1, 0], [0, 1]])
    stats = build_gram(x, x)
    assert stats.g[0, 1] == 0.0
    np.testing.assert_array_equal(np.diag(stats.g), [2, 1])


def test_gram_shape_mismatch():
    x = matrix_from_dense([[1, 0], [0, 1]])
    y = matrix_from_dense([[1, 0, 0], [0, 1, 0]])
    with pytest.raises(DataError, match="shape"):
        build_gram(x, y)


def test_centered_targets_small_example():
    x = matrix_from_dense([[1, 1], [0, 1]])
    stats = build_gram(x, x, center_y=True)
    np.testing.assert_allclose(stats.mu, [0.5, 1.0])
    np.testing.assert_allclose(stats.c, [[0.5, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(stats.g, [[1, 1], [1, 2]])  # inputs stay raw
    assert stats.centered


def test_centered_matches_explicit_densified(rng):
    x = binary_matrix(rng, 30, 6)
    yd = (rng.random((30, 6)) < 0.4) * rng.integers(1, 5, (30, 6)).astype(np.float64)
    y = matrix_from_dense(yd)
    stats = build_gram(x, y, center_y=True)
    centered = yd - yd.mean(axis=0, keepdims=True)
    np.testing.assert_allclose(stats.c, x.matrix.toarray().T @ centered, atol=1e-10)


def test_disjoint_small_example():
    z = matrix_from_dense([[1, 1], [1, 0]])
    stats = build_disjoint_gram(z)
    np.testing.assert_array_equal(stats.g, [[2, 1], [1, 1]])
    np.testing.assert_array_equal(stats.c, [[0, 1], [1, 0]])
    assert stats.provenance == PROVENANCE_DISJOINT
    np.testing.assert_array_equal(np.diag(stats.c), [0.0, 0.0])


def test_disjoint_exact_expectation_mode(rng):
    z = binary_matrix(rng, 20, 5)
    p = 0.1
    stats = build_disjoint_gram(z, explicit_lambda=False, split_fraction=p)
    zz = z.matrix.toarray().T @ z.matrix.toarray()
    off = zz - np.diag(np.diag(zz))
    np.testing.assert_allclose(stats.c, p * (1 - p) * off, atol=1e-12)
    expected_g = (1 - p) ** 2 * off + ((1 - p) ** 2 + p * (1 - p)) * np.diag(np.diag(zz))
    np.testing.assert_allclose(stats.g, expected_g, atol=1e-12)


def test_disjoint_rejects_non_binary():
    z = matrix_from_dense([[2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DataError, match="binary"):
        build_disjoint_gram(z)


def test_disjoint_rejects_bad_fraction(rng):
    z = binary_matrix(rng, 10, 4)
    with pytest.raises(DataError, match="fraction"):
        build_disjoint_gram(z, explicit_lambda=False, split_fraction=1.0)


def test_unit_weights_bitwise_identical(rng):
    x = binary_matrix(rng, 35, 8)
    plain = build_gram(x, x)
    weighted = build_user_weighted_gram(x, x, np.ones(35))
    np.testing.assert_array_equal(plain.g, weighted.g)
    np.testing.assert_array_equal(plain.c, weighted.c)
    assert weighted.provenance == PROVENANCE_USER_WEIGHTED


def test_weighting_scales_linearly(rng):
    x = binary_matrix(rng, 20, 6)
    base = build_gram(x, x)
    doubled = build_user_weighted_gram(x, x, np.full(20, 2.0))
    np.testing.assert_allclose(doubled.g, 2.0 * base.g, atol=1e-12)
    np.testing.assert_allclose(doubled.c, 2.0 * base.c, atol=1e-12)


def test_weighting_equals_row_duplication(rng):
    dense = (rng.random((10, 5)) < 0.5).astype(np.float64)
    dense[0, 0] = 1.0
    x = matrix_from_dense(dense)
    w = np.ones(10)
    w[3] = 3.0
    weighted = build_user_weighted_gram(x, x, w)
    stacked = matrix_from_dense(np.vstack([dense, dense[3], dense[3]]))
    dup = build_gram(stacked, stacked)
    np.testing.assert_allclose(weighted.g, dup.g, atol=1e-12)
    np.testing.assert_allclose(weighted.c, dup.c, atol=1e-12)


def test_weighting_validation(rng):
    x = binary_matrix(rng, 10, 4)
    with pytest.raises(DataError, match="10 user weights"):
        build_user_weighted_gram(x, x, np.ones(9))
    with pytest.raises(DataError, match="positive"):
        build_user_weighted_gram(x, x, np.zeros(10))
    bad = np.ones(10)
    bad[2] = np.inf
    with pytest.raises(DataError, match="positive and finite"):
        build_user_weighted_gram(x, x, bad)


@pytest.mark.parametrize("center", [False, True])
def test_gram_file_round_trip(tmp_path, rng, center):
    x = binary_matrix(rng, 15, 6)
    stats = build_gram(x, x, center_y=center)
    path = tmp_path / "stats.gram"
    save_gram_stats(path, stats)
    loaded = load_gram_stats(path)
    np.testing.assert_array_equal(loaded.g, stats.g)
    np.testing.assert_array_equal(loaded.c, stats.c)
    assert loaded.n_users == stats.n_users
    assert loaded.provenance == stats.provenance
    if center:
        np.testing.assert_array_equal(loaded.mu, stats.mu)
    else:
        assert loaded.mu is None


def test_gram_file_rejects_corruption(tmp_path, rng):
    x = binary_matrix(rng, 8, 3)
    path = tmp_path / "stats.gram"
    save_gram_stats(path, build_gram(x, x))
    raw = bytearray(path.read_bytes())

    truncated = tmp_path / "short.gram"
    truncated.write_bytes(bytes(raw[:-4]))
    with pytest.raises(DataError, match="bytes"):
        load_gram_stats(truncated)

    bad_magic = tmp_path / "magic.gram"
    bad_magic.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(DataError, match="magic"):
        load_gram_stats(bad_magic)

    bad_version = bytearray(raw)
    bad_version[4] = 99
    versioned = tmp_path / "version.gram"
    versioned.write_bytes(bytes(bad_version))
    with pytest.raises(DataError, match="version"):
        load_gram_stats(versioned)

    tiny = tmp_path / "tiny.gram"
    tiny.write_bytes(b"GR")
    with pytest.raises(DataError, match="truncated"):
        load_gram_stats(tiny)
