import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import brute_boundary, brute_edt, brute_sdm
from voxelseg._errors import EmptyMask, EmptyPointSet, NotBinary
from voxelseg.sdt import boundary_mask, boundary_voxels, dilate, edt, signed_distance_map
from voxelseg.volume import VoxelVolume

masks = hnp.arrays(bool, st.tuples(*[st.integers(1, 7)] * 3))
spacings = st.tuples(*[st.floats(0.2, 1.0)] * 3)


def test_boundary_single_voxel():
    m = np.zeros((3, 3, 3), np.uint8)
    m[1, 1, 1] = 1
    assert boundary_voxels(m).tolist() == [[1, 1, 1]]


def test_boundary_solid_block():
    m = np.zeros((5, 5, 5), bool)
    m[1:4, 1:4, 1:4] = True
    b = boundary_mask(m)
    assert b.sum() == 26 and not b[2, 2, 2]


def test_boundary_empty_and_not_binary():
    assert len(boundary_voxels(np.zeros((3, 3, 3)))) == 0
    with pytest.raises(NotBinary):
        boundary_mask(np.full((2, 2, 2), 2))


def test_boundary_full_grid_is_its_border():
    b = boundary_mask(np.ones((4, 4, 4), bool))
    assert b.sum() == 64 - 8


@given(masks)
def test_boundary_matches_enumeration(m):
    assert np.array_equal(boundary_mask(m), brute_boundary(m))


def test_edt_all_points_zero():
    d = edt(np.ones((3, 4, 5), bool), (3, 4, 5), 0.7)
    assert np.all(d.data == 0)


def test_edt_single_point_symmetry():
    d = edt([[1, 1, 1]], (3, 3, 3)).data
    assert d[1, 1, 1] == 0
    assert d[0, 1, 1] == 1.0 and d[1, 2, 1] == 1.0
    assert d[0, 0, 1] == pytest.approx(math.sqrt(2), abs=1e-15)
    assert d[0, 0, 0] == pytest.approx(math.sqrt(3), abs=1e-15)


def test_edt_empty():
    with pytest.raises(EmptyPointSet):
        edt(np.empty((0, 3), int), (3, 3, 3))


@given(masks.filter(lambda m: m.any()), spacings)
def test_edt_matches_brute_force(m, sp):
    assert np.abs(edt(m, m.shape, sp).data - brute_edt(m, sp)).max() <= 1e-9


def test_sdm_single_voxel():
    m = np.zeros((3, 3, 3), np.uint8)
    m[1, 1, 1] = 1
    s = signed_distance_map(m, 0.5).data
    assert s[1, 1, 1] == 0 and np.all(s[m == 0] > 0)
    assert s[0, 0, 0] == pytest.approx(math.sqrt(3) * 0.5)


def test_sdm_block_centre():
    m = np.zeros((7, 7, 7), bool)
    m[2:5, 2:5, 2:5] = True
    s = signed_distance_map(m).data
    assert s[3, 3, 3] == -1.0
    assert np.array_equal(s, brute_sdm(m, (1, 1, 1)))


def test_sdm_empty():
    with pytest.raises(EmptyMask):
        signed_distance_map(np.zeros((3, 3, 3)))


def test_sdm_keeps_geometry():
    vol = VoxelVolume(np.ones((2, 2, 2), np.uint8), (0.3, 0.4, 0.5), (1, 2, 3), kind="label")
    s = signed_distance_map(vol)
    assert s.kind == "distance" and s.spacing == vol.spacing and s.origin == vol.origin


@given(masks.filter(lambda m: m.any()), spacings)
def test_sdm_sign_partition_and_zero_set(m, sp):
    s = signed_distance_map(m, sp).data
    assert np.array_equal((s <= 0), m)
    assert np.array_equal(s == 0, boundary_mask(m))


@given(masks.filter(lambda m: m.any()), spacings)
def test_sdm_lipschitz(m, sp):
    s = signed_distance_map(m, sp).data
    for axis in range(3):
        if m.shape[axis] > 1:
            step = np.abs(np.diff(s, axis=axis))
            assert step.max() <= sp[axis] + 1e-6


@given(masks.filter(lambda m: m.any()), spacings)
def test_unsigned_part_invariant_to_side(m, sp):
    edge = boundary_mask(m)
    a = np.abs(signed_distance_map(m, sp).data)
    assert np.allclose(a, edt(edge, m.shape, sp).data, atol=0, rtol=0)


def test_dilate_radius():
    m = np.zeros((9, 9, 9), bool)
    m[4, 4, 4] = True
    assert dilate(m, 1.0).sum() == 7
    assert dilate(m, math.sqrt(2)).sum() == 19
    assert np.array_equal(dilate(m, 0.0), m)
