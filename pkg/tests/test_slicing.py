from __future__ import annotations

import numpy as np
import pytest

from octnav import phantom as ph
from octnav.slicing import (PlaneSpec, SlicePlaneError, frame_only_bscan,
                            tool_aligned_plane, virtual_bscan)
from octnav.volume import IoctVolume
from conftest import small_scene


def test_tool_aligned_plane_axis_cases():
    p0 = tool_aligned_plane(0.0, 100.0, 200.0)
    assert np.allclose(p0.point_um[:2], [100.0, 200.0])
    assert np.allclose(p0.normal, [0.0, 1.0, 0.0])

    p90 = tool_aligned_plane(np.pi / 2, 100.0, 200.0)
    assert np.allclose(p90.normal, [1.0, 0.0, 0.0], atol=1e-12)

    p30 = tool_aligned_plane(np.deg2rad(30.0), 100.0, 200.0)
    assert np.allclose(p30.normal, [0.5, np.sqrt(3) / 2, 0.0])
    assert abs(np.linalg.norm(p30.normal) - 1.0) <= 1e-9


def test_tool_aligned_plane_bounds_check():
    with pytest.raises(ValueError, match="outside"):
        tool_aligned_plane(0.0, -5.0, 0.0, lateral_extent_um=(100.0, 100.0))
    with pytest.raises(ValueError):
        tool_aligned_plane(float("nan"), 0.0, 0.0)


def test_non_unit_normal_rejected():
    with pytest.raises(ValueError, match="unit"):
        PlaneSpec(point_um=np.zeros(3), normal=np.array([0.0, 2.0, 0.0]))


def test_native_plane_equivalence_random_volume():
    rng = np.random.default_rng(9)
    data = rng.integers(0, 65536, size=(20, 64, 32), dtype=np.uint16)
    vol = IoctVolume(data=data, spacing_um=(2.5, 25.0, 3.0))
    sy = vol.spacing_um[1]
    for i in range(vol.dims[1]):
        plane = PlaneSpec(point_um=np.array([0.0, i * sy, 0.0]),
                          normal=np.array([0.0, 1.0, 0.0]))
        sl = virtual_bscan(vol, plane)
        assert np.array_equal(sl.image, vol.native_bscan(i).T.astype(np.float64))
        assert sl.valid_columns.all()


def test_linear_field_exactness():
    x, y, z = 120, 40, 16
    vals = (np.arange(x)[None, :, None] + 2 * np.arange(y)[:, None, None]
            ) * np.ones((1, 1, z))
    vol = IoctVolume(data=vals.astype(np.uint16), spacing_um=(2.5, 25.0, 3.0))
    for deg in (10.0, 30.0, 45.0, 60.0, -25.0):
        plane = tool_aligned_plane(np.deg2rad(deg), 150.0, 500.0)
        sl = virtual_bscan(vol, plane)
        pos = sl.frame.column_positions()
        expected = pos[:, 0] / 2.5 + 2 * (pos[:, 1] / 25.0)
        got = sl.image[0]
        v = sl.valid_columns
        rel = np.abs(got[v] - expected[v]) / np.maximum(1.0, np.abs(expected[v]))
        assert rel.max() < 1e-6


def test_oblique_plane_rejected(clean_volume):
    n = np.array([0.0, np.sqrt(0.5), np.sqrt(0.5)])
    with pytest.raises(SlicePlaneError, match="vertical"):
        virtual_bscan(clean_volume, PlaneSpec(point_um=np.zeros(3), normal=n))


def test_plane_missing_volume_rejected(clean_volume):
    plane = PlaneSpec(point_um=np.array([0.0, -5000.0, 0.0]),
                      normal=np.array([0.0, 1.0, 0.0]))
    with pytest.raises(SlicePlaneError, match="intersect"):
        virtual_bscan(clean_volume, plane)


def test_45_degree_needle_slice_is_connected():
    scene = small_scene(seed=31, theta_z=np.deg2rad(45.0))
    vol = ph.render_volume(scene)
    plane = tool_aligned_plane(scene.needle.theta_z, *scene.needle.tip_um[:2],
                               lateral_extent_um=vol.extent_um)
    sl = virtual_bscan(vol, plane)
    bright = sl.image >= 0.9 * scene.appearance.needle_brightness
    cols = np.flatnonzero(bright.any(axis=0))
    assert cols.size > 50
    assert np.all(np.diff(cols) == 1)          # one connected straight segment
    # each column's needle pixels are contiguous in depth
    for c in cols[:: max(1, cols.size // 20)]:
        zz = np.flatnonzero(bright[:, c])
        assert np.all(np.diff(zz) == 1)


def test_default_u_spacing_matches_sx(clean_volume):
    plane = tool_aligned_plane(np.deg2rad(20.0), 600.0, 700.0)
    sl = virtual_bscan(clean_volume, plane)
    assert sl.frame.su_um == clean_volume.spacing_um[0]
    assert sl.frame.sz_um == clean_volume.spacing_um[2]


def test_frame_only_bscan_matches_sampled_geometry(clean_volume):
    plane = tool_aligned_plane(np.deg2rad(25.0), 700.0, 600.0)
    sampled = virtual_bscan(clean_volume, plane)
    geom = frame_only_bscan(clean_volume.dims, clean_volume.spacing_um, plane)
    assert geom.frame.width == sampled.frame.width
    assert np.allclose(geom.frame.origin_um, sampled.frame.origin_um)
    assert np.array_equal(geom.valid_columns, sampled.valid_columns)
    assert not geom.image.any()


def test_pixel_metric_mapping_roundtrip(clean_volume):
    plane = tool_aligned_plane(np.deg2rad(-20.0), 700.0, 900.0)
    sl = virtual_bscan(clean_volume, plane)
    pt = sl.frame.pixel_to_metric(10.0, 25.0)
    assert pt.shape == (3,)
    assert abs(sl.frame.lateral_to_column(pt[:2]) - 10.0) < 1e-9
    assert abs(pt[2] - 25.0 * sl.frame.sz_um) < 1e-12
