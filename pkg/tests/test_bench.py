"""Benchmark harness: agreement gates and report formatting."""

import numpy as np
import pytest

from creaselift import bench


def test_random_segment_soup_shape_and_lengths():
    mesh = bench.random_segment_soup(50, seed=3, max_len=0.01)
    assert mesh.vertices.shape == (100, 2)
    assert mesh.elements.shape == (50, 2)
    a = mesh.vertices[mesh.elements[:, 0]]
    b = mesh.vertices[mesh.elements[:, 1]]
    lengths = np.linalg.norm(a - b, axis=1)
    assert np.all(lengths >= 0.2 * 0.01 - 1e-12)
    assert np.all(lengths <= 0.01 + 1e-12)
    again = bench.random_segment_soup(50, seed=3, max_len=0.01)
    assert np.array_equal(mesh.vertices, again.vertices)


def test_hash_vs_brute_small_scale_agrees():
    report = bench.hash_vs_brute(n_segments=300, n_queries=400, s=0.05,
                                 seed=2, repeats=1)
    assert report.n_within > 0          # property is not vacuous
    assert report.max_diff <= 1e-12
    assert report.far_consistent
    assert report.agree
    text = "\n".join(report.lines())
    assert "segments 300" in text and "PASS" in text


def test_report_flags_disagreement():
    from dataclasses import replace
    report = bench.hash_vs_brute(n_segments=50, n_queries=50, s=0.05,
                                 seed=0, repeats=1)
    broken = replace(report, max_diff=1e-3)
    assert not broken.agree
    assert "FAIL" in "\n".join(broken.lines())


def test_allclose_tree():
    ok = bench._allclose_tree
    a = np.arange(6.0).reshape(2, 3)
    assert ok(a, a.copy())
    assert not ok(a, a + 1e-6)
    assert not ok(a, a.reshape(3, 2))
    assert ok((a, 1.5), (a.copy(), 1.5 + 1e-14))
    nan = np.array([1.0, np.nan])
    assert ok(nan, nan.copy())
    # tolerance scales with the largest entry, not the total
    big = np.array([1e9, -1e9 + 1e-4])
    assert ok(big, big + np.array([0.0, 1e-4]))


def test_kernel_bench_rows_match():
    pytest.importorskip("numba")
    rows = bench.kernel_bench(n_points=200, n_segments=100, n_cubature=64,
                              k=3, seed=1, repeats=1)
    names = {r.name for r in rows}
    assert {"closest_point_batch", "hash_query_batch", "winding_batch",
            "winding_derivative_batch", "jacobi_eigh",
            "reduced_elastic"} <= names
    for r in rows:
        assert r.match, f"{r.name} disagrees between numpy and numba"
        assert r.t_numpy > 0 and r.t_numba > 0
    table = bench.kernel_table(rows)
    assert len(table) == len(rows) + 1
    assert all("yes" in line for line in table[1:])
