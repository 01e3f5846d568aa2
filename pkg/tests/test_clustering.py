import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import brute_delta
from voxelseg._errors import AllZeroDensity, EmptyCentroids, ShapeMismatch
from voxelseg.clustering import (
    CentroidSet,
    _delta_brute,
    _delta_tree,
    assign_instances,
    compute_rho_delta,
    density_peaks,
    oracle_offsets,
    vote_density,
)
from voxelseg.volume import VoxelVolume


def _offsets(data, spacing=1.0):
    return VoxelVolume(np.asarray(data, np.float64), spacing, kind="offset")


def _density(data, spacing=1.0):
    return VoxelVolume(np.asarray(data, np.uint32), spacing, kind="intensity")


def test_zero_offsets_reproduce_mask():
    rng = np.random.default_rng(0)
    fg = rng.random((5, 6, 4)) < 0.4
    d = vote_density(_offsets(np.zeros((5, 6, 4, 3))), fg)
    assert np.array_equal(d.data, fg.astype(np.uint32))


def test_two_blobs_vote_for_their_centres():
    fg = np.zeros((12, 6, 6), bool)
    fg[1:4, 1:4, 1:4] = True
    fg[7:11, 1:3, 2:5] = True
    lab = fg.astype(np.uint16)
    lab[7:] *= 2
    vol = VoxelVolume(lab, 0.5, kind="label")
    cents = [vol.index_to_phys((2, 2, 2)), vol.index_to_phys((9, 1, 3))]
    d = vote_density(oracle_offsets(vol, cents), fg)
    assert np.count_nonzero(d.data) == 2
    assert d.data[2, 2, 2] == 27 and d.data[9, 1, 3] == 24


def test_votes_out_of_grid_dropped():
    off = np.zeros((4, 4, 4, 3))
    off[0, 0, 0] = (-5.0, 0, 0)
    fg = np.zeros((4, 4, 4), bool)
    fg[0, 0, 0] = fg[1, 1, 1] = True
    d = vote_density(_offsets(off), fg)
    assert d.data.sum() == 1


def test_vote_rounds_half_up():
    off = np.zeros((4, 1, 1, 3))
    off[0, 0, 0] = (0.5, 0, 0)
    off[3, 0, 0] = (-0.5, 0, 0)
    fg = np.zeros((4, 1, 1), bool)
    fg[0] = fg[3] = True
    d = vote_density(_offsets(off), fg)
    assert d.data[:, 0, 0].tolist() == [0, 1, 0, 1]


def test_vote_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        vote_density(_offsets(np.zeros((3, 3, 3, 3))), np.zeros((3, 3, 2), bool))


@given(hnp.arrays(np.float64, (5, 4, 3, 3), elements=st.floats(-4, 4)),
       hnp.arrays(bool, (5, 4, 3)))
def test_vote_conservation(off, fg):
    d = vote_density(_offsets(off), fg)
    dest = np.floor(np.argwhere(fg) + off[fg] + 0.5)
    inb = np.all((dest >= 0) & (dest < (5, 4, 3)), axis=1)
    assert d.data.sum() == inb.sum() <= fg.sum()


def test_single_voxel_peak():
    dens = np.zeros((4, 5, 6))
    dens[1, 2, 3] = 5
    c = density_peaks(_density(dens, 0.5), rho_min=1)
    assert len(c) == 1
    assert c[0].delta == pytest.approx(np.linalg.norm([2, 2.5, 3]))


def test_two_peaks_ten_mm_apart():
    dens = np.zeros((15, 3, 3))
    dens[1, 1, 1] = 100
    dens[11, 1, 1] = 90
    c = density_peaks(_density(dens), rho_min=10, delta_min=4)
    assert [p.rho for p in c] == [100, 90]
    assert c[1].delta == pytest.approx(10.0)
    c = density_peaks(_density(dens), rho_min=10, delta_min=12)
    assert [p.rho for p in c] == [100]


def test_plateau_gives_one_peak():
    dens = np.zeros((4, 4, 4))
    dens[1, 2, 2] = 50
    dens[2, 2, 2] = 50
    c = density_peaks(_density(dens), rho_min=10)
    assert len(c) == 1
    # equal z and y, so the lower x ranks first
    assert c[0].position == (1.0, 2.0, 2.0)
    dens[1, 2, 2] = 0
    dens[2, 2, 1] = 50
    c = density_peaks(_density(dens), rho_min=10)
    assert c[0].position == (2.0, 2.0, 1.0)


def test_all_zero_density():
    with pytest.raises(AllZeroDensity):
        density_peaks(_density(np.zeros((3, 3, 3))))


@given(hnp.arrays(np.uint32, (5, 4, 3), elements=st.integers(0, 6)).filter(lambda a: a.any()),
       st.tuples(*[st.floats(0.3, 1.2)] * 3))
def test_rho_delta_matches_double_loop(dens, sp):
    idx, rho, delta = compute_rho_delta(_density(dens, sp))
    want = brute_delta(dens, sp)
    assert [tuple(i) for i in idx] == [w[0] for w in want]
    assert rho.tolist() == [w[1] for w in want]
    assert np.allclose(delta, [w[2] for w in want], rtol=0, atol=1e-12)


def test_tree_path_is_bit_identical_to_scan():
    rng = np.random.default_rng(5)
    dens = rng.integers(0, 4, (30, 30, 10)) * (rng.random((30, 30, 10)) < 0.7)
    idx = np.argwhere(dens > 0)
    rho = dens[dens > 0]
    order = np.lexsort((idx[:, 0], idx[:, 1], idx[:, 2], -rho))
    idx = idx[order]
    assert len(idx) > 4096
    sp = np.array([0.4, 0.5, 0.9])
    assert np.array_equal(_delta_tree(idx, sp), _delta_brute(idx, sp))


@given(hnp.arrays(np.uint32, (6, 5, 4), elements=st.integers(0, 30)).filter(lambda a: a.any()),
       st.floats(0, 30), st.floats(0, 6), st.floats(0, 10), st.floats(0, 3))
def test_thresholds_monotone(dens, r1, d1, dr, dd):
    vol = _density(dens)
    loose = {c.position for c in density_peaks(vol, r1, d1)}
    tight = {c.position for c in density_peaks(vol, r1 + dr, d1 + dd)}
    assert tight <= loose


def test_centroid_set_json_roundtrip(tmp_path):
    dens = np.zeros((15, 3, 3))
    dens[1, 1, 1] = 100
    dens[11, 1, 1] = 90
    c = density_peaks(_density(dens, 0.4), rho_min=10, delta_min=2)
    c.save(tmp_path / "c.json")
    back = CentroidSet.load(tmp_path / "c.json")
    assert back == c
    assert set(c.to_json()[0]) == {"pos_mm", "rho", "delta_mm"}


def test_assign_single_centroid():
    fg = np.zeros((4, 4, 4), bool)
    fg[1:3] = True
    lab = assign_instances(fg, [[0.0, 0.0, 0.0]])
    assert np.array_equal(lab.data, fg.astype(np.uint16))


def test_assign_line_split_at_midpoint():
    fg = np.zeros((11, 1, 1), bool)
    fg[:] = True
    lab = assign_instances(fg, [[0.0, 0, 0], [10.0, 0, 0]]).data[:, 0, 0]
    assert lab.tolist() == [1] * 6 + [2] * 5


def test_assign_empty_centroids():
    with pytest.raises(EmptyCentroids):
        assign_instances(np.ones((2, 2, 2), bool), np.empty((0, 3)))


@given(hnp.arrays(bool, (6, 5, 4)), st.integers(1, 5), st.randoms(use_true_random=False))
def test_assign_partition_and_permutation(fg, k, rnd):
    rng = np.random.default_rng(rnd.randint(0, 1 << 30))
    cents = rng.uniform(0, 6, (k, 3))
    lab = assign_instances(fg, cents).data
    assert np.array_equal(lab > 0, fg) and lab.max() <= k
    perm = rng.permutation(k)
    lab2 = assign_instances(fg, cents[perm]).data
    # generic positions have no ties, so the partition is preserved
    mapped = np.zeros_like(lab2)
    for new, old in enumerate(perm, start=1):
        mapped[lab2 == new] = old + 1
    assert np.array_equal(mapped, lab)
