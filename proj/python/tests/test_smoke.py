import numpy as np
import pytest

import tenspart


def random_symmetric(rng, m, n, density=0.4):
    a = np.zeros((m, m, n))
    mask = rng.random((m, m, n)) < density
    a[mask] = rng.random(mask.sum())
    return a + a.transpose(1, 0, 2)


def test_roundtrip_and_norm(tmp_path):
    rng = np.random.default_rng(1)
    dense = rng.standard_normal((4, 3, 2))
    t = tenspart.from_dense(dense)
    assert tuple(t.dims) == (4, 3, 2)
    np.testing.assert_allclose(t.to_dense(), dense)
    assert t.norm() == pytest.approx(np.linalg.norm(dense))

    path = tmp_path / "t.tns"
    tenspart.save_coordinate_file(t, path)
    assert tenspart.load_coordinate_file(path) == t


def test_multi_multiply_matches_einsum():
    rng = np.random.default_rng(2)
    dense = rng.standard_normal((5, 4, 3))
    x, y, z = rng.standard_normal((5, 2)), rng.standard_normal((4, 2)), rng.standard_normal((3, 1))
    got = tenspart.multi_multiply(tenspart.from_dense(dense), x, y, z)
    np.testing.assert_allclose(got, np.einsum("ijk,ia,jb,kc->abc", dense, x, y, z), atol=1e-12)


def test_approximate_rank_one_exact():
    rng = np.random.default_rng(3)
    u, v, w = rng.random(6), rng.random(5), rng.random(4)
    dense = 3.0 * np.einsum("i,j,k->ijk", u / np.linalg.norm(u), v / np.linalg.norm(v), w / np.linalg.norm(w))
    a = tenspart.approximate(tenspart.from_dense(dense), (1, 1, 1))
    assert a.converged
    assert a.objective == pytest.approx(3.0, rel=1e-12)
    np.testing.assert_allclose(np.abs(a.u[:, 0]), u / np.linalg.norm(u), atol=1e-10)


def test_partition_separates_planted_blocks():
    rng = np.random.default_rng(4)
    m, n = 30, 3
    labels = rng.permutation(m) < 12
    a = np.zeros((m, m, n))
    for k in range(n):
        same = labels[:, None] == labels[None, :]
        links = rng.random((m, m)) < np.where(same, 0.5, 0.02)
        links = np.triu(links, 1)
        a[:, :, k] = links + links.T
    t = tenspart.normalize_slices_adjacency(tenspart.from_dense(a))
    approx = tenspart.approximate(t, (2, 2, 1), symmetric=True)
    report, reordered = tenspart.partition(t, approx, labels=[[str(i) for i in range(m)], None, None])
    order = np.array(report.orders[0])
    split = report.splits[0]
    first = labels[order[:split]]
    assert first.all() or (~first).all()
    assert reordered.nnz == t.nnz
    assert len(report.rankings[0].beginning) == min(25, m)


def test_expand_and_threshold():
    rng = np.random.default_rng(5)
    t = tenspart.from_dense(random_symmetric(rng, 10, 3))
    res = tenspart.expand(t, terms=2, theta=0.0, mode=tenspart.ThresholdMode.absolute, tol=1e-12, max_iters=1000)
    assert len(res.terms) == 2
    assert res.residual_norms[0] == pytest.approx(t.norm())
    for nu, term in enumerate(res.terms):
        assert term.raw_norm == pytest.approx(term.core_norm, rel=1e-12)
        drop = res.residual_norms[nu] ** 2 - res.residual_norms[nu + 1] ** 2
        assert drop == pytest.approx(term.core_norm**2, rel=1e-8)
    c = res.overlap_cosines()
    assert c.shape == (2, 2)

    b = np.array([[0.5, -0.2], [-0.2, 0.1]])
    kept = tenspart.threshold_B(b, 0.0)
    assert kept.nnz == 2


def test_errors_are_translated():
    t = tenspart.from_dense(np.arange(1, 9, dtype=float).reshape(2, 2, 2))
    with pytest.raises(tenspart.TensorError):
        tenspart.approximate(t, (3, 1, 1))
    with pytest.raises(OSError):
        tenspart.load_coordinate_file("/nonexistent/file.tns")
    with pytest.raises(ValueError):
        tenspart.SparseTensor((2, 2, 2), np.zeros((1, 2)), np.zeros(1))
