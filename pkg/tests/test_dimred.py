import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from robust_coords.core_types import Configuration
from robust_coords.dimred import (
    EmbeddingParams,
    classical_mds,
    embed,
    isomap,
    pca_embed,
)
from robust_coords.errors import DegenerateGraph, NotSymmetric, TooFewPoints
from robust_coords.procrustes_pair import procrustes_distance
from robust_coords.synth import swiss_roll

from conftest import random_config, random_motion


def test_params_validation():
    with pytest.raises(ValueError):
        EmbeddingParams(method="isomap", target_dim=2)  # no neighbor rule
    with pytest.raises(ValueError):
        EmbeddingParams(method="isomap", target_dim=2, epsilon=1.0, knn=3)
    with pytest.raises(ValueError):
        EmbeddingParams(method="nope", target_dim=2)
    with pytest.raises(ValueError):
        EmbeddingParams(method="external", target_dim=2)


def test_collinear_points_unroll_exactly():
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
    out = isomap(
        Configuration.from_rows(pts),
        EmbeddingParams(method="isomap", target_dim=1, knn=2),
    )
    emb = np.sort(out.config.present_matrix()[0])
    assert out.dropped.size == 0
    assert np.allclose(np.diff(emb), 1.0, atol=1e-9)


def test_isomap_keeps_global_indexing(rng):
    pts = rng.normal(size=(30, 3))
    idx = np.arange(10, 40)
    cfg = Configuration.from_rows(pts, idx, n_global=50)
    out = isomap(cfg, EmbeddingParams(method="isomap", target_dim=2, knn=6))
    union = np.union1d(out.config.present_indices(), out.dropped)
    assert np.array_equal(union, idx)
    assert np.intersect1d(out.config.present_indices(), out.dropped).size == 0


def test_isomap_drops_isolated_points(rng):
    cloud = rng.normal(size=(20, 2))
    far = np.array([[100.0, 100.0], [101.0, 100.0], [100.0, 101.0]])
    cfg = Configuration.from_rows(np.vstack([cloud, far]))
    out = isomap(cfg, EmbeddingParams(method="isomap", target_dim=2, epsilon=5.0))
    assert np.array_equal(out.dropped, [20, 21, 22])
    assert out.config.n_present == 20


def test_isomap_degenerate_graph():
    pts = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0], [5.0, 5.0]])
    with pytest.raises(DegenerateGraph):
        isomap(
            Configuration.from_rows(pts),
            EmbeddingParams(method="isomap", target_dim=2, epsilon=0.5),
        )
    with pytest.raises(TooFewPoints):
        isomap(
            Configuration.from_rows(pts[:3]),
            EmbeddingParams(method="isomap", target_dim=2, epsilon=0.5),
        )


def test_isomap_complete_graph_equals_mds(rng):
    pts = rng.normal(size=(25, 3))
    cfg = Configuration.from_rows(pts)
    diameter = pdist(pts).max()
    out = isomap(cfg, EmbeddingParams(method="isomap", target_dim=2, epsilon=diameter))
    direct = classical_mds(squareform(pdist(pts)), 2)
    assert procrustes_distance(out.config, direct) <= 1e-9


def test_isomap_equivariance(rng):
    pts = rng.normal(size=(40, 3))
    cfg = Configuration.from_rows(pts)
    moved = cfg.transformed(random_motion(rng, 3))
    params = EmbeddingParams(method="isomap", target_dim=2, knn=7)
    a = isomap(cfg, params)
    b = isomap(moved, params)
    assert procrustes_distance(a.config, b.config) <= 1e-8


def test_isomap_swiss_roll_unrolls():
    sample = swiss_roll(900, seed=5)
    out = isomap(sample.points3d, EmbeddingParams(method="isomap", target_dim=2, knn=10))
    chart = sample.intrinsic
    kept = out.config.present_indices()
    diam = pdist(chart.present_matrix().T).max()
    dist = procrustes_distance(out.config, chart)
    per_point = dist / np.sqrt(kept.size)
    assert per_point <= 0.02 * diam


def test_mds_345_triangle():
    d = np.array([[0.0, 3.0, 5.0], [3.0, 0.0, 4.0], [5.0, 4.0, 0.0]])
    cfg = classical_mds(d, 2)
    rec = np.sort(pdist(cfg.present_matrix().T))
    assert np.allclose(rec, [3.0, 4.0, 5.0], atol=1e-9)


def test_mds_recovers_planar_sets(rng):
    pts = rng.normal(size=(30, 2))
    cfg = classical_mds(squareform(pdist(pts)), 2)
    assert procrustes_distance(cfg, Configuration.from_rows(pts)) <= 1e-8


def test_mds_rank_deficient_axes_are_zero(rng):
    pts = rng.normal(size=(12, 1))  # rank-1 geometry embedded in d=3
    cfg = classical_mds(squareform(pdist(pts)), 3)
    coords = cfg.present_matrix()
    assert np.abs(coords[1:]).max() <= 1e-9


def test_mds_centered_output(rng):
    pts = rng.normal(size=(20, 2)) + 100.0
    cfg = classical_mds(squareform(pdist(pts)), 2)
    assert np.abs(cfg.present_matrix().mean(axis=1)).max() <= 1e-9


def test_mds_rejects_asymmetric():
    d = np.array([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(NotSymmetric):
        classical_mds(d, 1)


def test_pca_plane_reconstruction(rng):
    basis = np.linalg.qr(rng.normal(size=(5, 2)))[0]
    latent = rng.normal(size=(40, 2))
    cfg = Configuration.from_rows(latent @ basis.T)
    out = pca_embed(cfg, 2)
    assert out.dropped.size == 0
    assert np.abs(pdist(out.config.present_matrix().T) - pdist(latent)).max() <= 1e-10


def test_pca_captured_variance(rng):
    pts = rng.normal(size=(300, 4))
    cfg = Configuration.from_rows(pts)
    out = pca_embed(cfg, 2)
    centered = pts - pts.mean(axis=0)
    spectrum = np.linalg.svd(centered, compute_uv=False) ** 2
    captured = float(np.sum(out.config.present_matrix() ** 2))
    assert np.isclose(captured, spectrum[:2].sum(), rtol=1e-10)


def test_pca_full_dim_is_rigid(rng):
    cfg = random_config(rng, d=3, n=30)
    out = pca_embed(cfg, 3)
    assert procrustes_distance(out.config, cfg) <= 1e-9


def test_pca_equivariance(rng):
    cfg = random_config(rng, d=3, n=30)
    moved = cfg.transformed(random_motion(rng, 3))
    a = pca_embed(cfg, 2)
    b = pca_embed(moved, 2)
    assert procrustes_distance(a.config, b.config) <= 1e-8


def test_external_embedding_restricts_to_domain(tmp_path, rng):
    from robust_coords.cli_io import read_points_csv, write_points_csv

    full = Configuration.from_rows(rng.normal(size=(10, 2)))
    path = tmp_path / "ext.csv"
    write_points_csv(full, path)
    sub = Configuration.from_rows(rng.normal(size=(6, 3)), indices=np.arange(2, 8), n_global=10)
    params = EmbeddingParams(method="external", target_dim=2, source=str(path))
    out = embed(sub, params, loader=read_points_csv)
    assert np.array_equal(out.config.present_indices(), np.arange(2, 8))
    assert np.allclose(out.config.coords[:, 2:8], full.coords[:, 2:8])
