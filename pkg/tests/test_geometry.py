import numpy as np
import pytest

from bdrelax.geometry import (Box, box_halfplane_area, box_plane_chord, box_plane_segment,
                              box_quadrature, box_slab_area, clip_halfplane, polygon_area,
                              segment_panels)


def test_box_basics():
    b = Box(lo=(-1.0, 0.0), hi=(1.0, 3.0))
    assert b.volume == 6.0
    assert np.allclose(b.center, [0.0, 1.5])
    s = b.scaled_about_center(0.5)
    assert np.allclose(s.extent, [1.0, 1.5])
    with pytest.raises(ValueError):
        Box(lo=(0.0, 0.0), hi=(0.0, 1.0))


def test_halfplane_area():
    b = Box.cube((0.0, 0.0), 1.0)
    assert box_halfplane_area(b, (1.0, 0.0), 0.0) == pytest.approx(0.5, abs=0)
    assert box_halfplane_area(b, (1.0, 0.0), 10.0) == pytest.approx(1.0, abs=0)
    assert box_halfplane_area(b, (1.0, 0.0), -10.0) == 0.0
    # diagonal cut through a corner: triangle of area 1/8
    nu = np.array([1.0, 1.0]) / np.sqrt(2.0)
    area = box_halfplane_area(b, nu, -np.sqrt(2.0) / 4.0)
    assert area == pytest.approx(1.0 / 8.0, rel=1e-12)


def test_plane_chords():
    b = Box.cube((0.0, 0.0), 1.0)
    assert box_plane_segment(b, (1.0, 0.0), 0.2) == pytest.approx(1.0, abs=0)
    assert box_plane_segment(b, (1.0, 0.0), 0.7) == 0.0
    nu = np.array([1.0, 1.0]) / np.sqrt(2.0)
    assert box_plane_segment(b, nu, 0.0) == pytest.approx(np.sqrt(2.0), rel=1e-12)
    chord = box_plane_chord(b, (0.0, 1.0), 0.25)
    assert chord is not None
    p, q = chord
    assert p[1] == pytest.approx(0.25) and q[1] == pytest.approx(0.25)


def test_slab_area():
    b = Box.cube((0.0, 0.0), 1.0)
    assert box_slab_area(b, (1.0, 0.0), -0.25, 0.25) == pytest.approx(0.5, abs=1e-15)
    assert box_slab_area(b, (1.0, 0.0), 0.25, 0.25) == 0.0


def test_quadrature_exactness():
    b = Box(lo=(0.0, -1.0), hi=(2.0, 1.0))
    pts, w = box_quadrature(b, cells=3, npts=2)
    assert w.sum() == pytest.approx(b.volume, rel=1e-14)
    # 2-pt Gauss integrates cubics exactly
    val = np.sum(w * pts[:, 0] ** 3 * pts[:, 1] ** 2)
    exact = (2.0 ** 4 / 4.0) * (2.0 / 3.0)
    assert val == pytest.approx(exact, rel=1e-13)


def test_segment_panels_split():
    mids, halves = segment_panels(np.zeros(2), np.array([1.0, 0.0]), [0.3], panels=10)
    total = 2.0 * np.sqrt((halves ** 2).sum(axis=1)).sum()
    assert total == pytest.approx(1.0, rel=1e-14)
    # breakpoints are respected: no panel straddles 0.3
    lo = mids[:, 0] - halves[:, 0]
    hi = mids[:, 0] + halves[:, 0]
    assert not np.any((lo < 0.3 - 1e-12) & (hi > 0.3 + 1e-12))


def test_polygon_clip_degenerate():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert polygon_area(clip_halfplane(tri, (1.0, 0.0), -1.0)) == 0.0
    assert polygon_area(clip_halfplane(tri, (1.0, 0.0), 2.0)) == pytest.approx(0.5)
