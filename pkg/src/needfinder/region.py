"""
Region geometry: unions of lat/lon boxes and simple polygons.

Containment uses even-odd ray casting. Points lying exactly on a box edge
or a polygon edge/vertex count as inside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MalformedInputError

_EDGE_EPS = 1e-12


class RegionError(MalformedInputError):
    pass


@dataclass(frozen=True)
class Box:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self):
        if not (self.min_lat <= self.max_lat and self.min_lon <= self.max_lon):
            raise RegionError(f"degenerate box {self}")

    def contains(self, lat, lon):
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        return ((lat >= self.min_lat) & (lat <= self.max_lat)
                & (lon >= self.min_lon) & (lon <= self.max_lon))


@dataclass(frozen=True)
class Polygon:
    """Closed ring of (lat, lon) vertices. A repeated closing vertex is dropped."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = [tuple(map(float, v)) for v in self.vertices]
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        if len(set(verts)) < 3:
            raise RegionError("polygon ring needs at least 3 distinct vertices")
        object.__setattr__(self, "vertices", tuple(verts))

    def bounds(self) -> Box:
        arr = np.array(self.vertices)
        return Box(arr[:, 0].min(), arr[:, 1].min(), arr[:, 0].max(), arr[:, 1].max())

    def contains(self, lat, lon):
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        ring = np.array(self.vertices)
        inside = np.zeros(lat.shape, dtype=bool)
        on_edge = np.zeros(lat.shape, dtype=bool)
        n = len(ring)
        for i in range(n):
            y1, x1 = ring[i - 1]
            y2, x2 = ring[i]
            # boundary test: collinear and within the segment's bounding box
            cross = (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1)
            scale = max(abs(x2 - x1), abs(y2 - y1), 1.0)
            within = ((lon >= min(x1, x2) - _EDGE_EPS) & (lon <= max(x1, x2) + _EDGE_EPS)
                      & (lat >= min(y1, y2) - _EDGE_EPS) & (lat <= max(y1, y2) + _EDGE_EPS))
            on_edge |= (np.abs(cross) <= _EDGE_EPS * scale) & within
            # half-open rule on lat avoids double counting at vertices
            straddles = (y1 > lat) != (y2 > lat)
            if y2 != y1:
                x_cross = x1 + (lat - y1) * (x2 - x1) / (y2 - y1)
                inside ^= straddles & (lon < x_cross)
        return inside | on_edge


@dataclass(frozen=True)
class RegionSpec:
    """Named area of interest; a point is inside if any element contains it."""

    name: str
    boxes: tuple[Box, ...] = ()
    polygons: tuple[Polygon, ...] = ()
    _bounds: Box = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.boxes and not self.polygons:
            raise RegionError(f"region {self.name!r} has no geometry")
        parts = list(self.boxes) + [p.bounds() for p in self.polygons]
        object.__setattr__(self, "_bounds", Box(
            min(b.min_lat for b in parts), min(b.min_lon for b in parts),
            max(b.max_lat for b in parts), max(b.max_lon for b in parts)))

    @property
    def bounds(self) -> Box:
        return self._bounds

    def contains(self, lat, lon):
        """Vectorised containment test; returns a bool (scalar input) or bool array."""
        scalar = np.ndim(lat) == 0 and np.ndim(lon) == 0
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        out = np.zeros(np.broadcast(lat, lon).shape, dtype=bool)
        cand = self._bounds.contains(lat, lon)
        if cand.any():
            la, lo = lat[cand], lon[cand]
            hit = np.zeros(la.shape, dtype=bool)
            for elem in (*self.boxes, *self.polygons):
                hit |= elem.contains(la, lo)
            out[cand] = hit
        return bool(out[0]) if scalar else out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "boxes": [[b.min_lat, b.min_lon, b.max_lat, b.max_lon] for b in self.boxes],
            "polygons": [[list(v) for v in p.vertices] for p in self.polygons],
        }

    @classmethod
    def from_dict(cls, data: dict, path: str = "region") -> "RegionSpec":
        try:
            name = str(data["name"])
            boxes = []
            for i, b in enumerate(data.get("boxes", [])):
                if isinstance(b, dict):
                    b = [b["min_lat"], b["min_lon"], b["max_lat"], b["max_lon"]]
                if len(b) != 4:
                    raise RegionError(f"{path}.boxes[{i}]: expected [min_lat, min_lon, max_lat, max_lon]")
                boxes.append(Box(*map(float, b)))
            polygons = []
            for i, ring in enumerate(data.get("polygons", [])):
                try:
                    polygons.append(Polygon(tuple(tuple(v) for v in ring)))
                except RegionError as exc:
                    raise RegionError(f"{path}.polygons[{i}]: {exc}") from None
        except (KeyError, TypeError) as exc:
            raise RegionError(f"{path}: malformed region ({exc})") from None
        for where, lat, lon in _all_vertices(boxes, polygons):
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise RegionError(f"{path}.{where}: coordinate ({lat}, {lon}) out of range")
        return cls(name, tuple(boxes), tuple(polygons))


def _all_vertices(boxes, polygons):
    for i, b in enumerate(boxes):
        yield f"boxes[{i}]", b.min_lat, b.min_lon
        yield f"boxes[{i}]", b.max_lat, b.max_lon
    for i, p in enumerate(polygons):
        for lat, lon in p.vertices:
            yield f"polygons[{i}]", lat, lon


def load_region(path) -> RegionSpec:
    with open(Path(path), encoding="utf-8") as fh:
        return RegionSpec.from_dict(json.load(fh))
