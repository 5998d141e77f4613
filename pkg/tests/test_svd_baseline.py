import numpy as np
import pytest

from koopcompress import dictionary, edmd, svd_baseline


def test_reconstruction_error_equals_singular_tail():
    # Eckart-Young: the Frobenius error of the best rank-r approximation is
    # the root sum of squares of the dropped singular values.
    rng = np.random.default_rng(565)
    for _ in range(10):
        k = rng.standard_normal((50, 50))
        sigma = np.linalg.svd(k, compute_uv=False)
        for rank in (1, 5, 20, 49, 50):
            factors = svd_baseline.truncate(k, rank)
            err = np.linalg.norm(k - svd_baseline.reconstruct(factors))
            tail = np.sqrt(np.sum(sigma[rank:] ** 2))
            assert err == pytest.approx(tail, rel=1e-8, abs=1e-10)


def test_error_is_monotone_in_rank():
    rng = np.random.default_rng(99)
    k = rng.standard_normal((50, 50))
    errors = [
        np.linalg.norm(k - svd_baseline.reconstruct(svd_baseline.truncate(k, r)))
        for r in range(1, 51)
    ]
    for worse, better in zip(errors, errors[1:]):
        assert better <= worse + 1e-12
    assert errors[-1] < 1e-12 * np.linalg.norm(k)


def test_element_count_formula():
    rng = np.random.default_rng(4)
    factors = svd_baseline.truncate(rng.standard_normal((30, 30)), 7)
    assert factors.dim == 30
    assert factors.rank == 7
    assert factors.element_count == 2 * 30 * 7
    assert factors.left.shape == (30, 7)
    assert factors.right.shape == (7, 30)


def test_truncate_accepts_koopman_matrix_and_keeps_hash():
    rng = np.random.default_rng(12)
    km = edmd.KoopmanMatrix(k=rng.standard_normal((8, 8)),
                            dict_hash="cafe01", svd_tolerance=1e-10)
    factors = svd_baseline.truncate(km, 3)
    assert factors.source_hash == "cafe01"
    assert factors.dim == 8


def test_full_rank_rollout_matches_direct_iteration():
    dic = dictionary.build(4, 2)
    rng = np.random.default_rng(8)
    k = rng.standard_normal((dic.size, dic.size))
    k *= 0.8 / np.max(np.abs(np.linalg.eigvals(k)))
    km = edmd.KoopmanMatrix(k=k, dict_hash=dic.content_hash(),
                            svd_tolerance=1e-10)
    factors = svd_baseline.truncate(km, dic.size)
    x0 = rng.uniform(-0.5, 0.5, size=4)
    a = edmd.rollout(km, dic, x0, 30)
    b = svd_baseline.rollout(factors, dic, x0, 30)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_rollout_argument_checks():
    dic = dictionary.build(4, 1)
    factors = svd_baseline.truncate(np.eye(5), 2)
    with pytest.raises(ValueError):
        svd_baseline.rollout(factors, dic, np.zeros(4), 0)
    big = dictionary.build(4, 2)
    with pytest.raises(ValueError):
        svd_baseline.rollout(factors, big, np.zeros(4), 5)


def test_rollout_marks_divergence_with_nan():
    dic = dictionary.build(4, 1)
    factors = svd_baseline.SvdFactors(left=np.eye(5) * 2e150, right=np.eye(5))
    pred = svd_baseline.rollout(factors, dic, np.ones(4), 5)
    assert np.all(np.isfinite(pred[:2]))
    assert np.all(np.isnan(pred[2:]))


def test_validation():
    with pytest.raises(ValueError):
        svd_baseline.truncate(np.zeros((3, 4)), 2)
    with pytest.raises(ValueError):
        svd_baseline.truncate(np.eye(4), 0)
    with pytest.raises(ValueError):
        svd_baseline.truncate(np.eye(4), 5)
    with pytest.raises(ValueError):
        svd_baseline.SvdFactors(left=np.zeros((4, 2)), right=np.zeros((3, 4)))
    with pytest.raises(ValueError):
        svd_baseline.SvdFactors(left=np.zeros((4, 2)), right=np.zeros((2, 5)))


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    factors = svd_baseline.truncate(rng.standard_normal((9, 9)), 4,
                                    source_hash="beef")
    svd_baseline.save_factors(tmp_path / "fac", factors)
    back = svd_baseline.load_factors(tmp_path / "fac")
    assert np.array_equal(back.left, factors.left)
    assert np.array_equal(back.right, factors.right)
    assert back.source_hash == "beef"


def test_load_rejects_truncated_binary(tmp_path):
    factors = svd_baseline.truncate(np.eye(6), 2)
    svd_baseline.save_factors(tmp_path / "fac", factors)
    blob = (tmp_path / "fac.left.bin").read_bytes()
    (tmp_path / "fac.left.bin").write_bytes(blob[:-8])
    with pytest.raises(ValueError):
        svd_baseline.load_factors(tmp_path / "fac")
