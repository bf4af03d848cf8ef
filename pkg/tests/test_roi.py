import numpy as np
import pytest

from camofs.autodiff import Tape
from camofs.roi import EmptyForeground, FgBgPartition, downsample_mask, partition, split_locations


def test_singleton_foreground():
    patch = np.arange(8, dtype=float).reshape(2, 2, 2)
    part = partition(patch, [[1, 0], [0, 0]])
    assert (len(part.fg), len(part.bg)) == (1, 3)
    assert np.array_equal(part.avg.value, patch[:, 0, 0])


def test_all_ones_mask_has_no_background():
    patch = np.arange(8, dtype=float).reshape(2, 2, 2)
    part = partition(patch, np.ones((2, 2)))
    assert len(part.bg) == 0 and not part.has_background
    assert np.array_equal(part.avg.value, patch.reshape(2, -1).mean(axis=1))


def test_avg_matches_accumulation(rng):
    patch = rng.normal(size=(5, 4, 4))
    mask = (rng.random((4, 4)) < 0.5).astype(int)
    mask[0, 0] = 1
    part = partition(patch, mask)
    acc, n = np.zeros(5), 0
    for h in range(4):
        for w in range(4):
            if mask[h, w]:
                for c in range(5):
                    acc[c] += patch[c, h, w]
                n += 1
    assert np.max(np.abs(part.avg.value - acc / n)) <= 1e-12


def test_partition_is_exhaustive_and_exclusive(rng):
    for _ in range(50):
        h, w = rng.integers(1, 6, size=2)
        mask = (rng.random((h, w)) < 0.4).astype(int)
        mask.flat[rng.integers(mask.size)] = 1
        fg, bg = split_locations(mask)
        assert len(fg) + len(bg) == h * w
        assert set(fg).isdisjoint(bg)
        part = partition(rng.normal(size=(3, h, w)), mask)
        assert len(part.fg) + len(part.bg) == h * w


def test_avg_permutation_invariant(rng):
    vecs = list(rng.normal(size=(6, 4)))
    a = FgBgPartition.from_vectors(vecs, []).avg.value
    b = FgBgPartition.from_vectors([vecs[i] for i in rng.permutation(6)], []).avg.value
    assert np.allclose(a, b, atol=1e-12)


def test_constant_patch_avg(rng):
    v = rng.normal(size=3)
    patch = np.broadcast_to(v[:, None, None], (3, 4, 4))
    for _ in range(10):
        mask = (rng.random((4, 4)) < 0.5).astype(int)
        mask[2, 2] = 1
        assert np.allclose(partition(patch, mask).avg.value, v, atol=1e-12)


def test_empty_foreground_raises():
    with pytest.raises(EmptyForeground):
        partition(np.ones((2, 2, 2)), np.zeros((2, 2)))


def test_dim_mismatch_raises():
    with pytest.raises(ValueError):
        partition(np.ones((2, 3, 3)), np.ones((2, 2)))


def test_downsample_identity_and_ones():
    m = np.array([[1, 0, 1], [0, 0, 1]])
    assert np.array_equal(downsample_mask(m, 2, 3), m)
    assert np.array_equal(downsample_mask(np.ones((4, 4)), 2, 2), np.ones((2, 2)))


def test_downsample_checkerboard():
    board = np.indices((4, 4)).sum(axis=0) % 2
    assert np.array_equal(downsample_mask(board, 2, 2), board[np.ix_([0, 2], [0, 2])])


def test_downsample_index_formula(rng):
    m = (rng.random((7, 9)) < 0.5).astype(int)
    out = downsample_mask(m, 3, 4)
    for i in range(3):
        for j in range(4):
            assert out[i, j] == m[i * 7 // 3, j * 9 // 4]


def test_downsample_bad_target():
    with pytest.raises(ValueError):
        downsample_mask(np.ones((2, 2)), 0, 1)


def test_partition_uses_given_empty_tape():
    tape = Tape()
    part = partition(np.ones((2, 2, 2)), [[1, 0], [0, 1]], tape)
    assert all(v.tape is tape for v in part.fg + part.bg)
