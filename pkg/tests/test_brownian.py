import io
import math

import numpy as np
import pytest

from biteuler.brownian import (BrownianGrid, bridge_value, coarsen,
                               coarsen_increments, dump_increments,
                               generate_block, generate_path, load_increments)


def test_same_key_reproduces_exactly():
    a = generate_path(1.0, 64, 2, seed=7, path_index=3)
    b = generate_path(1.0, 64, 2, seed=7, path_index=3)
    np.testing.assert_array_equal(a.increments, b.increments)


def test_distinct_paths_differ():
    a = generate_path(1.0, 64, 1, seed=7, path_index=0)
    b = generate_path(1.0, 64, 1, seed=7, path_index=1)
    assert not np.array_equal(a.increments, b.increments)


def test_block_rows_match_single_paths():
    block = generate_block(2.0, 32, 2, seed=5, first_path=10, count=4)
    for j in range(4):
        single = generate_path(2.0, 32, 2, seed=5, path_index=10 + j)
        np.testing.assert_array_equal(block[j], single.increments)


def test_single_increment_distribution():
    # N_fine = 1: one increment ~ Normal(0, T)
    vals = generate_block(4.0, 1, 1, seed=1, first_path=0, count=50000)[:, 0, 0]
    assert abs(vals.mean()) < 4 * 2.0 / math.sqrt(50000)
    assert abs(vals.var() - 4.0) < 4 * 4.0 * math.sqrt(2.0 / 50000)


def test_increment_variance_matches_step():
    # chi-square concentration: sample variance of each of the 4 increments
    # within 3 standard errors of T/N_fine = 0.25
    M = 100000
    block = generate_block(1.0, 4, 1, seed=9, first_path=0, count=M)[:, :, 0]
    se = 0.25 * math.sqrt(2.0 / (M - 1))
    for k in range(4):
        assert abs(block[:, k].var(ddof=1) - 0.25) < 3 * se


def test_pooled_gaussianity():
    vals = generate_block(1.0, 10, 1, seed=33, first_path=0, count=100000)
    z = (vals / math.sqrt(0.1)).ravel()
    n = z.size
    skew = np.mean(z**3)
    kurt = np.mean(z**4)
    assert abs(skew) < 4 * math.sqrt(6.0 / n)
    assert abs(kurt - 3.0) < 4 * math.sqrt(24.0 / n)


def test_coarsen_identity_and_total():
    path = generate_path(1.0, 8, 2, seed=2, path_index=0)
    np.testing.assert_array_equal(coarsen(path, 8), path.increments)
    total = coarsen(path, 1)[0]
    np.testing.assert_allclose(total, path.increments.sum(axis=0), rtol=1e-14)


def test_coarsen_blocks_are_sums():
    # direct summation oracle
    path = generate_path(1.0, 8, 1, seed=2, path_index=5)
    coarse = coarsen(path, 2)
    oracle0 = np.sum(path.increments[0:4], axis=0)
    oracle1 = np.sum(path.increments[4:8], axis=0)
    np.testing.assert_allclose(coarse[0], oracle0, rtol=1e-14, atol=1e-300)
    np.testing.assert_allclose(coarse[1], oracle1, rtol=1e-14, atol=1e-300)


def test_coarsen_telescoping_bitwise():
    # chain property for power-of-two ratios is exact, not approximate
    path = generate_path(3.0, 256, 3, seed=21, path_index=1)
    for mid in (128, 64, 32):
        via = coarsen_increments(coarsen(path, mid), 8)
        direct = coarsen(path, 8)
        np.testing.assert_array_equal(via, direct)


def test_coarsen_rejects_non_divisor():
    path = generate_path(1.0, 8, 1, seed=2, path_index=0)
    with pytest.raises(ValueError):
        coarsen(path, 3)


def test_bridge_endpoints_exact():
    path = generate_path(1.0, 16, 2, seed=4, path_index=2)
    h = path.h
    np.testing.assert_array_equal(bridge_value(path, 3, 0.0, sub_seed=0),
                                  np.zeros(2))
    np.testing.assert_array_equal(bridge_value(path, 3, h, sub_seed=0),
                                  path.increments[3])


def test_bridge_offset_validation():
    path = generate_path(1.0, 16, 1, seed=4, path_index=2)
    with pytest.raises(ValueError):
        bridge_value(path, 3, 2.0 * path.h, sub_seed=0)


def test_bridge_midpoint_moments():
    # conditional law at s = h/2 is Normal(dW/2, h/4)
    path = generate_path(1.0, 4, 1, seed=8, path_index=0)
    h = path.h
    dw = path.increments[1, 0]
    n = 100000
    vals = np.array([bridge_value(path, 1, h / 2, sub_seed=s)[0] for s in range(n)])
    se_mean = math.sqrt(h / 4 / n)
    assert abs(vals.mean() - dw / 2) < 4 * se_mean
    var = vals.var(ddof=1)
    assert abs(var - h / 4) < 4 * (h / 4) * math.sqrt(2.0 / n)


def test_bridge_deterministic_in_sub_seed():
    path = generate_path(1.0, 4, 2, seed=8, path_index=0)
    a = bridge_value(path, 0, path.h / 3, sub_seed=11)
    b = bridge_value(path, 0, path.h / 3, sub_seed=11)
    c = bridge_value(path, 0, path.h / 3, sub_seed=12)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_dump_load_round_trip():
    path = generate_path(2.5, 32, 3, seed=123, path_index=9)
    buf = io.BytesIO()
    dump_increments(path, buf)
    buf.seek(0)
    back = load_increments(buf)
    assert back.T == path.T and back.N_fine == path.N_fine
    assert back.m == path.m and back.seed == path.seed
    assert back.path_index == path.path_index
    np.testing.assert_array_equal(back.increments, path.increments)


def test_dump_load_file_round_trip(tmp_path):
    path = generate_path(1.0, 8, 1, seed=1, path_index=0)
    fname = str(tmp_path / "path.bin")
    dump_increments(path, fname)
    back = load_increments(fname)
    np.testing.assert_array_equal(back.increments, path.increments)


def test_grid_shape_validation():
    with pytest.raises(ValueError):
        BrownianGrid(T=1.0, N_fine=4, m=2, seed=0, path_index=0,
                     increments=np.zeros((4, 1)))
