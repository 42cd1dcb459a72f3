import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from brainmim.masking import MaskMap, MaskSpec, apply_mask, expand_mask, generate_mask, grid_shape
from brainmim.metrics import LossConfig, dice_score, masked_mse

shapes = st.tuples(*[st.integers(1, 13)] * 3)


@settings(max_examples=60, deadline=None)
@given(shapes, st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_expand_matches_per_voxel_oracle(shape, s, seed):
    mask = generate_mask(shape, MaskSpec(subpatch_size=s), np.random.default_rng(seed))
    assert mask.grid.shape == tuple(-(-n // s) for n in shape)
    assert np.array_equal(expand_mask(mask), oracles.mask_voxels(mask.grid, shape, s))


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1), st.floats(-5, 5))
def test_apply_mask_fills_only_masked(shape, seed, fill):
    r = np.random.default_rng(seed)
    patch = r.random(shape).astype(np.float32)
    mask = generate_mask(shape, MaskSpec(subpatch_size=3), r)
    out = apply_mask(patch, mask, fill)
    vox = expand_mask(mask)
    assert np.all(out[vox] == np.float32(fill))
    assert np.array_equal(out[~vox], patch[~vox])


def test_mask_draws_one_uniform_per_subpatch():
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    mask = generate_mask((16, 16, 16), MaskSpec(), r1)
    assert np.array_equal(mask.grid, r2.random((4, 4, 4)) < 0.6)
    assert r1.random() == r2.random()


def test_extreme_probabilities():
    r = np.random.default_rng(0)
    assert not generate_mask((8, 8, 8), MaskSpec(mask_probability=0.0), r).grid.any()
    assert generate_mask((8, 8, 8), MaskSpec(mask_probability=1.0), r).grid.all()


def test_mask_fraction_near_p():
    fr = generate_mask((128, 128, 128), MaskSpec(), np.random.default_rng(1)).masked_fraction
    assert abs(fr - 0.6) < 0.011


def test_validation():
    with pytest.raises(ValueError):
        MaskSpec(subpatch_size=0)
    with pytest.raises(ValueError):
        MaskSpec(mask_probability=1.2)
    with pytest.raises(ValueError):
        MaskMap(np.zeros((2, 2, 2), bool), (16, 16, 16), 4)
    mask = generate_mask((8, 8, 8), MaskSpec(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        apply_mask(np.zeros((8, 8, 4)), mask)
    assert grid_shape((9, 8, 1), 4) == (3, 2, 1)


def test_masked_mse():
    target = np.zeros((8, 8, 8))
    pred = np.ones((8, 8, 8))
    grid = np.zeros((2, 2, 2), bool)
    grid[0, 0, 0] = True
    mask = MaskMap(grid, (8, 8, 8), 4)
    pred[4:, 4:, 4:] = 3.0
    assert masked_mse(pred, target, mask) == 1.0
    full = masked_mse(pred, target, mask, LossConfig(region="all_voxels"))
    assert full == pytest.approx((7 * 64 * 1 + 64 * 9) / 512)


def test_masked_mse_errors():
    empty = MaskMap(np.zeros((1, 1, 1), bool), (4, 4, 4), 4)
    with pytest.raises(ValueError):
        masked_mse(np.zeros((4, 4, 4)), np.zeros((4, 4, 4)), empty)
    assert masked_mse(np.ones((4, 4, 4)), np.zeros((4, 4, 4)), empty, LossConfig("all_voxels")) == 1.0
    with pytest.raises(ValueError):
        masked_mse(np.zeros((4, 4, 4)), np.zeros((4, 4, 3)), empty)
    with pytest.raises(ValueError):
        LossConfig(region="some")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dice_properties(seed):
    r = np.random.default_rng(seed)
    a = r.random((5, 5, 5)) < 0.3
    b = r.random((5, 5, 5)) < 0.3
    d = dice_score(a, b)
    assert 0.0 <= d <= 1.0
    assert d == dice_score(b, a)
    inter = sum(bool(x and y) for x, y in zip(a.ravel(), b.ravel()))
    if a.sum() + b.sum():
        assert d == pytest.approx(2 * inter / (a.sum() + b.sum()))
    if a.any():
        assert dice_score(a, a) == 1.0


def test_dice_edge_cases():
    z = np.zeros((2, 2, 2))
    assert dice_score(z, z) == 1.0
    assert dice_score(z, np.ones((2, 2, 2))) == 0.0
    with pytest.raises(ValueError):
        dice_score(z, np.zeros((2, 2)))
