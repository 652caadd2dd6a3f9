import json

import numpy as np
import pytest

from needfinder.region import Box, Polygon, RegionError, RegionSpec, load_region


def winding_number(poly: np.ndarray, lat: float, lon: float) -> int:
    """Independent oracle: signed crossings of the horizontal ray (Sunday's algorithm)."""
    wn = 0
    n = len(poly)
    for i in range(n):
        (y0, x0), (y1, x1) = poly[i], poly[(i + 1) % n]
        side = (x1 - x0) * (lat - y0) - (lon - x0) * (y1 - y0)
        if y0 <= lat < y1 and side > 0:
            wn += 1
        elif y1 <= lat < y0 and side < 0:
            wn -= 1
    return wn


def random_convex(rng, n=8):
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    radius = rng.uniform(0.5, 2.0)
    c = rng.uniform(-10, 10, 2)
    return np.column_stack([c[0] + radius * np.sin(angles), c[1] + radius * np.cos(angles)])


def test_box_is_inclusive():
    box = Box(0.0, 0.0, 1.0, 2.0)
    assert box.contains(0.0, 0.0) and box.contains(1.0, 2.0) and box.contains(0.5, 1.0)
    assert not box.contains(1.0000001, 1.0)


def test_polygon_agrees_with_winding_number_oracle():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(10):
        verts = random_convex(rng)
        poly = Polygon([tuple(v) for v in verts])
        lo, hi = verts.min(axis=0) - 0.3, verts.max(axis=0) + 0.3
        pts = rng.uniform(lo, hi, size=(100, 2))
        got = poly.contains(pts[:, 0], pts[:, 1])
        want = np.array([winding_number(verts, la, lo_) != 0 for la, lo_ in pts])
        assert np.array_equal(got, want)
        checked += len(pts)
    assert checked == 1000


def test_polygon_boundary_counts_as_inside():
    square = Polygon([(0, 0), (0, 1), (1, 1), (1, 0)])
    for lat, lon in [(0, 0), (0.5, 0), (1, 0.25), (0, 1), (0.5, 1)]:
        assert square.contains(lat, lon)
    tri = Polygon([(0, 0), (2, 0), (0, 2)])
    assert tri.contains(1.0, 1.0)          # on the hypotenuse
    assert not tri.contains(1.01, 1.01)


def test_closing_vertex_is_dropped_and_degenerate_rejected():
    p = Polygon([(0, 0), (0, 1), (1, 1), (0, 0)])
    assert len(p.vertices) == 3
    with pytest.raises(RegionError):
        Polygon([(0, 0), (0, 1), (0, 0)])


def test_region_union_and_roundtrip(tmp_path):
    region = RegionSpec.from_dict({
        "name": "two-parts",
        "boxes": [[0, 0, 1, 1]],
        "polygons": [[[5, 5], [6, 5], [5, 6]]],
    })
    lat = np.array([0.5, 5.2, 3.0])
    lon = np.array([0.5, 5.2, 3.0])
    assert region.contains(lat, lon).tolist() == [True, True, False]
    assert region.contains(0.5, 0.5) is True
    path = tmp_path / "region.json"
    path.write_text(json.dumps(region.to_dict()))
    assert load_region(path).to_dict() == region.to_dict()


@pytest.mark.parametrize("data, field", [
    ({"name": "x"}, "region"),
    ({"name": "x", "boxes": [[0, 0, 1]]}, "region.boxes[0]"),
    ({"name": "x", "polygons": [[[0, 0], [1, 1]]]}, "region.polygons[0]"),
    ({"name": "x", "boxes": [[0, 0, 100, 1]]}, "region.boxes[0]"),
])
def test_region_errors_name_the_field(data, field):
    with pytest.raises(RegionError, match=field.replace("[", r"\[").replace("]", r"\]")):
        RegionSpec.from_dict(data)
