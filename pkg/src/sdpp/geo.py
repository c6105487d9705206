"""Local planar projection, polyline resampling/offsetting and Chamfer distance.

Polylines are plain ``(n, 2)`` float arrays of metres in a :class:`LocalFrame`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

EARTH_RADIUS = 6378137.0
MITER_LIMIT = 2.0
MIN_SEGMENT = 1e-9
# local-map assumption: points stay within this many degrees of the origin
MAX_SPAN_DEG = 1.0


class GeometryDomainError(ValueError):
    pass


class DegenerateGeometryError(ValueError):
    def __init__(self, message: str, way_id: int | None = None):
        if way_id is not None:
            message = f"way {way_id}: {message}"
        super().__init__(message)
        self.way_id = way_id


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular tangent frame anchored at ``(origin_lat, origin_lon)``."""

    origin_lat: float
    origin_lon: float
    earth_radius: float = EARTH_RADIUS

    @property
    def _sy(self) -> float:
        # metres per degree of latitude
        return self.earth_radius * math.pi / 180.0

    @property
    def _sx(self) -> float:
        return self._sy * math.cos(math.radians(self.origin_lat))

    @classmethod
    def centroid_of(cls, latlons: Iterable[Sequence[float]]) -> LocalFrame:
        pts = np.asarray(list(latlons), dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            return cls(0.0, 0.0)
        lat, lon = pts.mean(axis=0)
        return cls(float(lat), float(lon))

    def _check(self, lat, lon):
        dlat = np.abs(np.asarray(lat, dtype=float) - self.origin_lat)
        dlon = np.abs(np.asarray(lon, dtype=float) - self.origin_lon)
        if not (np.all(dlat < MAX_SPAN_DEG) and np.all(dlon < MAX_SPAN_DEG)):
            raise GeometryDomainError(
                f"coordinates more than {MAX_SPAN_DEG} degree from frame origin "
                f"({self.origin_lat}, {self.origin_lon})"
            )

    def to_xy(self, latlon) -> np.ndarray:
        """Project an ``(n, 2)`` array of (lat, lon) degrees to metres."""
        ll = np.asarray(latlon, dtype=float).reshape(-1, 2)
        self._check(ll[:, 0], ll[:, 1])
        x = (ll[:, 1] - self.origin_lon) * self._sx
        y = (ll[:, 0] - self.origin_lat) * self._sy
        return np.column_stack([x, y])

    def to_latlon(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        lat = self.origin_lat + xy[:, 1] / self._sy
        lon = self.origin_lon + xy[:, 0] / self._sx
        return np.column_stack([lat, lon])

    def displace(self, latlon, dxy) -> np.ndarray:
        """Move (lat, lon) points by planar displacements given in metres.

        Equivalent to ``to_latlon(to_xy(p) + d)`` but adds the displacement to
        the original degrees, so a zero displacement returns the input bits.
        """
        ll = np.asarray(latlon, dtype=float).reshape(-1, 2)
        dxy = np.asarray(dxy, dtype=float).reshape(-1, 2)
        self._check(ll[:, 0], ll[:, 1])
        return np.column_stack([ll[:, 0] + dxy[:, 1] / self._sy, ll[:, 1] + dxy[:, 0] / self._sx])


def project(frame: LocalFrame, lat: float, lon: float) -> tuple[float, float]:
    x, y = frame.to_xy([[lat, lon]])[0]
    return float(x), float(y)


def unproject(frame: LocalFrame, x: float, y: float) -> tuple[float, float]:
    lat, lon = frame.to_latlon([[x, y]])[0]
    return float(lat), float(lon)


def as_polyline(points, way_id: int | None = None) -> np.ndarray:
    """Validate and convert to an ``(n, 2)`` float array.

    Raises :class:`DegenerateGeometryError` for fewer than two points or for
    consecutive points closer than ``MIN_SEGMENT``.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 2:
        raise DegenerateGeometryError("polyline needs at least 2 (x, y) points", way_id)
    if not np.all(np.isfinite(p)):
        raise DegenerateGeometryError("polyline has non-finite coordinates", way_id)
    seg = np.hypot(*np.diff(p, axis=0).T)
    if np.any(seg <= MIN_SEGMENT):
        i = int(np.argmax(seg <= MIN_SEGMENT))
        raise DegenerateGeometryError(f"consecutive duplicate points at index {i}", way_id)
    return p


def polyline_length(p) -> float:
    p = np.asarray(p, dtype=float)
    return float(np.hypot(*np.diff(p, axis=0).T).sum())


def resample_polyline(p, step: float) -> np.ndarray:
    """Points along ``p`` at arc lengths ``0, step, 2*step, ...`` plus the endpoint."""
    if not step > 0:
        raise ValueError("step must be positive")
    p = as_polyline(p)
    seg = np.hypot(*np.diff(p, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    # a sample within MIN_SEGMENT of the end collapses onto the endpoint
    n_inner = int(math.floor((total - MIN_SEGMENT) / step)) + 1
    s = np.arange(n_inner, dtype=float) * step
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = (s - cum[idx]) / seg[idx]
    pts = p[idx] + (p[idx + 1] - p[idx]) * t[:, None]
    pts[0] = p[0]
    return np.vstack([pts, p[-1:]])


def vertex_normals(p) -> np.ndarray:
    """Left-pointing miter vectors, one per vertex.

    Endpoints use the unit normal of their only segment. Interior vertices use
    the normalized bisector of the two adjacent segment normals, scaled by
    ``1 / cos(turn / 2)`` and capped at ``MITER_LIMIT``.
    """
    p = as_polyline(p)
    d = np.diff(p, axis=0)
    t = d / np.hypot(*d.T)[:, None]
    n = np.column_stack([-t[:, 1], t[:, 0]])
    out = np.empty_like(p)
    out[0] = n[0]
    out[-1] = n[-1]
    if len(p) > 2:
        n_in, n_out = n[:-1], n[1:]
        s = n_in + n_out
        norm = np.hypot(*s.T)
        # hairpin: the bisector vanishes; fall back to the reversed incoming tangent
        flat = norm < 1e-12
        b = np.where(flat[:, None], -t[:-1], s / np.where(flat, 1.0, norm)[:, None])
        cos_half = np.einsum("ij,ij->i", b, n_in)
        scale = 1.0 / np.maximum(cos_half, 1.0 / MITER_LIMIT)
        out[1:-1] = b * scale[:, None]
    return out


def offset_polyline(p, d: float) -> np.ndarray:
    """Shift ``p`` sideways by signed distance ``d`` (positive = left of travel).

    One output vertex per input vertex, which keeps lanes aligned with the
    source nodes.
    """
    if not abs(d) < 100.0:
        raise GeometryDomainError(f"offset {d} m out of range")
    p = as_polyline(p)
    return p + vertex_normals(p) * d


def _nearest(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cKDTree(b).query(a)[0]


def chamfer_directed(a, b, step: float = 1.0) -> float:
    """Mean distance from each resampled point of ``a`` to its nearest resampled point of ``b``."""
    ra = resample_polyline(a, step)
    rb = resample_polyline(b, step)
    return float(np.mean(_nearest(ra, rb)))


def chamfer_symmetric(a, b, step: float = 1.0) -> float:
    return (chamfer_directed(a, b, step) + chamfer_directed(b, a, step)) / 2.0
