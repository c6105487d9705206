"""Lane geometry synthesis from road segments and extracted road specs.

Lanes are parallel offsets of the OSM centerline, so every output polyline
has exactly one vertex per source node and the zero-offset lane reproduces
the source coordinates bit for bit.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import BackendError
from .geo import DegenerateGeometryError, LocalFrame, as_polyline, vertex_normals
from .knowledge import (
    SPEC_FIELDS,
    ExtractionBackend,
    ExtractionError,
    ExtractionQuery,
    RoadSpec,
    SpecError,
    VectorStore,
    extract_road_spec,
    make_road_spec,
)
from .knowledge.retrieval import DEFAULT_K
from .osm import RoadSegment

VARIANTS = ("OSG", "IG", "IG_CONTEXT")
DRIVE, BIKE, BOUNDARY = "drive", "bike", "boundary"
FORWARD, BACKWARD = "forward", "backward"
DRIVE_SIDES = ("right", "left")
# where road boundaries go: half the extracted total width, or the outer lane edges
BOUNDARY_SOURCES = ("total_width", "lanes")

MAX_TOTAL_WIDTH = 60.0
MIN_LANE_WIDTH, MAX_LANE_WIDTH = 2.0, 6.0

# errors that fail one segment without aborting the map
SEGMENT_ERRORS = (ExtractionError, SpecError, BackendError, DegenerateGeometryError)


@dataclass(frozen=True)
class LaneGeometry:
    way_id: int
    lane_index: int
    kind: str
    direction: str
    polyline: tuple[tuple[float, float], ...]
    width: float

    def to_dict(self) -> dict:
        return {
            "way_id": self.way_id,
            "lane_index": self.lane_index,
            "kind": self.kind,
            "direction": self.direction,
            "width": self.width,
            "polyline": [[lat, lon] for lat, lon in self.polyline],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> LaneGeometry:
        return cls(
            way_id=int(d["way_id"]),
            lane_index=int(d["lane_index"]),
            kind=d["kind"],
            direction=d["direction"],
            polyline=tuple((float(a), float(b)) for a, b in d["polyline"]),
            width=float(d["width"]),
        )


@dataclass(frozen=True)
class SegmentResult:
    segment: RoadSegment
    spec: RoadSpec
    lanes: tuple[LaneGeometry, ...]

    def drive_lanes(self) -> list[LaneGeometry]:
        return [ln for ln in self.lanes if ln.kind == DRIVE]


@dataclass
class EnhancedMap:
    segments: list[SegmentResult]
    variant: str
    generation_metadata: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[dict]:
        return self.generation_metadata.get("failures", [])

    def by_way(self) -> dict[int, SegmentResult]:
        return {s.segment.way_id: s for s in self.segments}


@dataclass
class ValidityReport:
    total_maps: int
    valid_maps: int
    failures: list[str] = field(default_factory=list)

    @property
    def valid_pct(self) -> float:
        # vacuous 100% for an empty batch
        return 100.0 * self.valid_maps / self.total_maps if self.total_maps else 100.0

    def __add__(self, other: ValidityReport) -> ValidityReport:
        return ValidityReport(
            self.total_maps + other.total_maps,
            self.valid_maps + other.valid_maps,
            self.failures + other.failures,
        )


def timestamp() -> str:
    """UTC ISO timestamp; honours ``SOURCE_DATE_EPOCH`` for reproducible builds."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return now.isoformat(timespec="seconds")


def lane_layout(
    seg: RoadSegment, spec: RoadSpec, drive_side: str = "right", boundary: str = "total_width"
) -> list[tuple[str, int, str, float, float]]:
    """``(kind, lane_index, direction, offset, width)`` rows for one segment.

    Offsets are signed metres, positive to the left of the way direction.
    Indices count from the leftmost element of each kind. On two-way roads
    the lanes on the driving side of the centerline run forward. Boundaries
    sit at half of ``total_width`` either side, or on the outer edges of the
    drive and bike lanes when ``boundary="lanes"``.
    """
    if drive_side not in DRIVE_SIDES:
        raise ValueError(f"drive_side must be one of {DRIVE_SIDES}")
    if boundary not in BOUNDARY_SOURCES:
        raise ValueError(f"boundary must be one of {BOUNDARY_SOURCES}")
    n, w = seg.lane_count, spec.lane_width
    sign = 1.0 if drive_side == "right" else -1.0

    def direction(d: float) -> str:
        if seg.oneway:
            return FORWARD
        # offsets on the far side of the centerline carry opposing traffic
        return BACKWARD if sign * d > 0 else FORWARD

    rows = []
    for i in range(n):
        d = ((n - 1) / 2.0 - i) * w
        rows.append((DRIVE, i, direction(d), d, w))

    b = spec.bike_lane_width
    if seg.has_bike_lane and b > 0:
        d = (n * w + b) / 2.0
        if seg.oneway:
            # curb side of the driving direction
            rows.append((BIKE, 0, FORWARD, -sign * d, b))
        else:
            rows.append((BIKE, 0, direction(d), d, b))
            rows.append((BIKE, 1, direction(-d), -d, b))

    if boundary == "lanes":
        left = max(d + wd / 2.0 for _, _, _, d, wd in rows)
        right = min(d - wd / 2.0 for _, _, _, d, wd in rows)
    else:
        left, right = spec.total_width / 2.0, -spec.total_width / 2.0
    rows.append((BOUNDARY, 0, FORWARD, left, 0.0))
    rows.append((BOUNDARY, 1, FORWARD, right, 0.0))
    return rows


def generate_lanes_for_segment(
    seg: RoadSegment,
    spec: RoadSpec,
    frame: LocalFrame,
    drive_side: str = "right",
    boundary: str = "total_width",
) -> list[LaneGeometry]:
    try:
        xy = as_polyline(frame.to_xy(seg.centerline), seg.way_id)
    except DegenerateGeometryError:
        raise
    except ValueError as exc:
        raise DegenerateGeometryError(str(exc), seg.way_id) from None
    normals = vertex_normals(xy)
    lanes = []
    for kind, idx, direction, d, width in lane_layout(seg, spec, drive_side, boundary):
        latlon = frame.displace(seg.centerline, normals * d)
        lanes.append(
            LaneGeometry(
                way_id=seg.way_id,
                lane_index=idx,
                kind=kind,
                direction=direction,
                polyline=tuple((float(a), float(b)) for a, b in latlon),
                width=float(width),
            )
        )
    return lanes


def _merge_provenance(acc: list[int], new: Iterable[int]):
    for i in new:
        if i not in acc:
            acc.append(i)


def extract_segment_spec(
    seg: RoadSegment,
    backend: ExtractionBackend,
    store: VectorStore | None,
    variant: str = "OSG",
    k: int = DEFAULT_K,
) -> RoadSpec:
    """Run one extraction schedule for a single segment.

    ``OSG`` asks for every field at once. ``IG`` asks field by field.
    ``IG_CONTEXT`` asks field by field in order, handing each query the
    values already obtained.
    """
    values: dict[str, float] = {}
    provenance: list[int] = []
    if variant == "OSG":
        ext = extract_road_spec(ExtractionQuery(seg, "all"), backend, store, k)
        values.update(ext.values)
        _merge_provenance(provenance, ext.provenance)
    elif variant in ("IG", "IG_CONTEXT"):
        for f in SPEC_FIELDS:
            prior = tuple(values.items()) if variant == "IG_CONTEXT" else ()
            ext = extract_road_spec(ExtractionQuery(seg, f, prior), backend, store, k)
            values[f] = ext.values[f]
            _merge_provenance(provenance, ext.provenance)
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return make_road_spec(seg, values, provenance, backend.name)


def _map_ordered(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def extract_specs(
    segments: Sequence[RoadSegment],
    backend: ExtractionBackend,
    store: VectorStore | None,
    variant: str = "OSG",
    k: int = DEFAULT_K,
    jobs: int = 1,
) -> tuple[dict[int, RoadSpec], list[dict]]:
    """Extract specs for all segments; returns ``(specs by way id, failures)``.

    A segment whose extraction fails is reported in ``failures`` and left out
    of the result. Output order follows the input order whatever ``jobs`` is.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")

    def one(seg):
        try:
            return extract_segment_spec(seg, backend, store, variant, k)
        except SEGMENT_ERRORS as exc:
            return exc

    specs, failures = {}, []
    for seg, out in zip(segments, _map_ordered(one, list(segments), jobs)):
        if isinstance(out, Exception):
            failures.append({"way_id": seg.way_id, "reason": f"{type(out).__name__}: {out}"})
        else:
            specs[seg.way_id] = out
    return specs, failures


def assemble_map(
    segments: Sequence[RoadSegment],
    specs: Mapping[int, RoadSpec],
    frame: LocalFrame,
    variant: str,
    failures: Sequence[dict] = (),
    metadata: Mapping | None = None,
    drive_side: str = "right",
    boundary: str = "total_width",
) -> EnhancedMap:
    """Build lane geometry for every segment that has a spec."""
    failures = list(failures)
    failed = {f["way_id"] for f in failures}
    results = []
    for seg in segments:
        spec = specs.get(seg.way_id)
        if spec is None:
            if seg.way_id not in failed:
                failures.append({"way_id": seg.way_id, "reason": "no road spec"})
            continue
        try:
            lanes = generate_lanes_for_segment(seg, spec, frame, drive_side, boundary)
        except DegenerateGeometryError as exc:
            failures.append({"way_id": seg.way_id, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        results.append(SegmentResult(seg, spec, tuple(lanes)))
    meta = {
        "backend": None,
        "template": None,
        "created_at": timestamp(),
        "drive_side": drive_side,
        "boundary": boundary,
        "frame": {"origin_lat": frame.origin_lat, "origin_lon": frame.origin_lon},
    }
    meta.update(metadata or {})
    meta["failures"] = failures
    return EnhancedMap(results, variant, meta)


def generate_map(
    segments: Sequence[RoadSegment],
    backend: ExtractionBackend,
    store: VectorStore | None,
    frame: LocalFrame,
    variant: str = "OSG",
    *,
    k: int = DEFAULT_K,
    jobs: int = 1,
    template: str | None = None,
    drive_side: str = "right",
    boundary: str = "total_width",
) -> EnhancedMap:
    specs, failures = extract_specs(segments, backend, store, variant, k, jobs)
    meta = {"backend": backend.name, "template": template}
    return assemble_map(segments, specs, frame, variant, failures, meta, drive_side, boundary)


def generate_map_osg(segments, backend, store, frame, **kw) -> EnhancedMap:
    return generate_map(segments, backend, store, frame, "OSG", **kw)


def generate_map_ig(segments, backend, store, frame, **kw) -> EnhancedMap:
    return generate_map(segments, backend, store, frame, "IG", **kw)


def generate_map_ig_context(segments, backend, store, frame, **kw) -> EnhancedMap:
    return generate_map(segments, backend, store, frame, "IG_CONTEXT", **kw)


def validate_map(m: EnhancedMap, input_segments: Sequence[RoadSegment] | None = None) -> ValidityReport:
    """Structural validity of one generated map.

    Valid means: every input segment present once, drive-lane count equal to
    the segment's lane count, finite coordinates, widths inside sanity bounds
    and one lane vertex per centerline vertex. Without ``input_segments`` the
    expected set is the generated segments plus the recorded failures.
    """
    reasons = []
    present = [s.segment.way_id for s in m.segments]
    if input_segments is None:
        expected = present + [f["way_id"] for f in m.failures if f["way_id"] not in present]
        by_id = {s.segment.way_id: s.segment for s in m.segments}
    else:
        expected = [s.way_id for s in input_segments]
        by_id = {s.way_id: s for s in input_segments}
    for wid in expected:
        count = present.count(wid)
        if count == 0:
            why = next((f["reason"] for f in m.failures if f["way_id"] == wid), "not generated")
            reasons.append(f"way {wid}: segment missing ({why})")
        elif count > 1:
            reasons.append(f"way {wid}: segment appears {count} times")

    for res in m.segments:
        seg = by_id.get(res.segment.way_id, res.segment)
        wid = seg.way_id
        n_drive = len(res.drive_lanes())
        if n_drive != seg.lane_count:
            reasons.append(f"way {wid}: lane count mismatch ({n_drive} drive lanes, expected {seg.lane_count})")
        spec = res.spec
        if not MIN_LANE_WIDTH <= spec.lane_width <= MAX_LANE_WIDTH:
            reasons.append(f"way {wid}: lane_width {spec.lane_width} m out of range")
        if not seg.lane_count * MIN_LANE_WIDTH <= spec.total_width <= MAX_TOTAL_WIDTH:
            reasons.append(f"way {wid}: total_width {spec.total_width} m out of range")
        n_vertices = len(seg.centerline)
        for ln in res.lanes:
            pts = np.asarray(ln.polyline, dtype=float)
            if len(ln.polyline) != n_vertices:
                reasons.append(
                    f"way {wid}: {ln.kind} lane {ln.lane_index} vertex count mismatch "
                    f"({len(ln.polyline)} vs {n_vertices})"
                )
            if not np.all(np.isfinite(pts)) or not math.isfinite(ln.width):
                reasons.append(f"way {wid}: {ln.kind} lane {ln.lane_index} has non-finite values")
    return ValidityReport(1, 0 if reasons else 1, reasons)


def validate_maps(maps: Iterable[EnhancedMap]) -> ValidityReport:
    total = ValidityReport(0, 0)
    for m in maps:
        total = total + validate_map(m)
    return total


# -- serialization ---------------------------------------------------------------

def enhanced_to_dict(m: EnhancedMap) -> dict:
    return {
        "variant": m.variant,
        "generation_metadata": m.generation_metadata,
        "segments": [
            {
                "segment": r.segment.to_dict(),
                "spec": r.spec.to_dict(),
                "lanes": [ln.to_dict() for ln in r.lanes],
            }
            for r in m.segments
        ],
    }


def dump_enhanced(m: EnhancedMap) -> str:
    return json.dumps(enhanced_to_dict(m), indent=2) + "\n"


def load_enhanced(text: str) -> EnhancedMap:
    d = json.loads(text)
    segments = [
        SegmentResult(
            RoadSegment.from_dict(s["segment"]),
            RoadSpec.from_dict(s["spec"]),
            tuple(LaneGeometry.from_dict(ln) for ln in s["lanes"]),
        )
        for s in d["segments"]
    ]
    return EnhancedMap(segments, d["variant"], d.get("generation_metadata", {}))


def to_geojson(m: EnhancedMap) -> dict:
    """One LineString feature per lane geometry (coordinates in lon, lat order)."""
    features = []
    for r in m.segments:
        for ln in r.lanes:
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "LineString",
                        "coordinates": [[lon, lat] for lat, lon in ln.polyline],
                    },
                    "properties": {
                        "way_id": ln.way_id,
                        "lane_index": ln.lane_index,
                        "kind": ln.kind,
                        "direction": ln.direction,
                        "width": ln.width,
                    },
                }
            )
    return {"type": "FeatureCollection", "features": features}


def dump_specs(
    specs: Mapping[int, RoadSpec],
    failures: Sequence[dict],
    variant: str,
    backend: str,
    template: str | None = None,
) -> str:
    return json.dumps(
        {
            "variant": variant,
            "backend": backend,
            "template": template,
            "specs": [s.to_dict() for s in specs.values()],
            "failures": list(failures),
        },
        indent=2,
    ) + "\n"


def load_specs(text: str) -> tuple[dict[int, RoadSpec], dict]:
    """Inverse of :func:`dump_specs`: ``(specs by way id, header fields incl. failures)``."""
    d = json.loads(text)
    specs = {s.way_id: s for s in (RoadSpec.from_dict(x) for x in d.pop("specs"))}
    d.setdefault("failures", [])
    return specs, d
