"""OpenStreetMap XML parsing, road filtering and per-way normalization."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping
from xml.parsers import expat
from xml.sax.saxutils import quoteattr

logger = logging.getLogger(__name__)

ROAD_CLASSES: frozenset[str] = frozenset(
    base + suffix
    for base in (
        "motorway",
        "trunk",
        "primary",
        "secondary",
        "tertiary",
        "residential",
        "unclassified",
        "service",
        "living_street",
    )
    for suffix in ("", "_link")
)

ONEWAY_TRUE = frozenset({"yes", "true", "1"})
CYCLEWAY_KEYS = ("cycleway", "cycleway:left", "cycleway:right", "cycleway:both")


class OsmParseError(ValueError):
    """Malformed or structurally invalid OSM XML."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DanglingReferenceError(OsmParseError):
    def __init__(self, way_id: int, node_id: int):
        super().__init__(f"way {way_id} references missing node {node_id}")
        self.way_id = way_id
        self.node_id = node_id


class LaneTagWarning(UserWarning):
    """A ``lanes`` tag could not be interpreted; a default lane count was used."""


@dataclass(frozen=True)
class OsmNode:
    id: int
    lat: float
    lon: float
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"node {self.id}: latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"node {self.id}: longitude {self.lon} out of range")


@dataclass(frozen=True)
class OsmWay:
    id: int
    node_refs: tuple[int, ...]
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.node_refs) < 2:
            raise ValueError(f"way {self.id} has fewer than 2 node references")


@dataclass(frozen=True)
class OsmDocument:
    nodes: Mapping[int, OsmNode]
    ways: Mapping[int, OsmWay]

    def __post_init__(self):
        for way in self.ways.values():
            for ref in way.node_refs:
                if ref not in self.nodes:
                    raise DanglingReferenceError(way.id, ref)


@dataclass(frozen=True)
class RoadSegment:
    way_id: int
    highway_class: str
    name: str | None
    lane_count: int
    oneway: bool
    has_bike_lane: bool
    centerline: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.highway_class not in ROAD_CLASSES:
            raise ValueError(f"way {self.way_id}: unknown road class {self.highway_class!r}")
        if self.lane_count < 1:
            raise ValueError(f"way {self.way_id}: lane_count must be >= 1")
        if len(self.centerline) < 2:
            raise ValueError(f"way {self.way_id}: centerline needs at least 2 vertices")

    def to_dict(self) -> dict:
        return {
            "way_id": self.way_id,
            "highway_class": self.highway_class,
            "name": self.name,
            "lane_count": self.lane_count,
            "oneway": self.oneway,
            "has_bike_lane": self.has_bike_lane,
            "centerline": [[lat, lon] for lat, lon in self.centerline],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> RoadSegment:
        return cls(
            way_id=int(d["way_id"]),
            highway_class=d["highway_class"],
            name=d.get("name"),
            lane_count=int(d["lane_count"]),
            oneway=bool(d["oneway"]),
            has_bike_lane=bool(d["has_bike_lane"]),
            centerline=tuple((float(lat), float(lon)) for lat, lon in d["centerline"]),
        )


class _Builder:
    """expat callbacks accumulating nodes and ways; everything else is skipped."""

    def __init__(self, parser):
        self.parser = parser
        self.nodes: dict[int, OsmNode] = {}
        self.ways: dict[int, OsmWay] = {}
        self._current: str | None = None
        self._attrs: dict[str, str] = {}
        self._tags: dict[str, str] = {}
        self._refs: list[int] = []

    def _fail(self, message: str):
        raise OsmParseError(message, self.parser.CurrentByteIndex)

    def _int(self, attrs, key, what):
        try:
            return int(attrs[key])
        except (KeyError, ValueError):
            self._fail(f"{what} has missing or invalid {key!r} attribute")

    def start(self, name, attrs):
        if name in ("node", "way"):
            self._current = name
            self._attrs = attrs
            self._tags = {}
            self._refs = []
        elif self._current is None:
            return
        elif name == "tag":
            if "k" not in attrs or "v" not in attrs:
                self._fail(f"{self._current} tag without k/v attributes")
            self._tags[attrs["k"]] = attrs["v"]
        elif name == "nd" and self._current == "way":
            self._refs.append(self._int(attrs, "ref", "nd"))

    def end(self, name):
        if name != self._current:
            return
        if name == "node":
            node_id = self._int(self._attrs, "id", "node")
            try:
                lat, lon = float(self._attrs["lat"]), float(self._attrs["lon"])
                node = OsmNode(node_id, lat, lon, self._tags)
            except (KeyError, ValueError) as exc:
                self._fail(f"node {node_id}: {exc}")
            if node_id in self.nodes:
                self._fail(f"duplicate node id {node_id}")
            self.nodes[node_id] = node
        else:
            way_id = self._int(self._attrs, "id", "way")
            if way_id in self.ways:
                self._fail(f"duplicate way id {way_id}")
            try:
                self.ways[way_id] = OsmWay(way_id, tuple(self._refs), self._tags)
            except ValueError as exc:
                self._fail(str(exc))
        self._current = None


def parse_osm(xml_bytes: bytes) -> OsmDocument:
    """Parse an OSM v0.6 XML extract.

    ``relation`` elements (and anything else that is not a node or a way) are
    skipped. Malformed XML raises :class:`OsmParseError` carrying the byte
    offset of the failure; a way pointing at an absent node raises
    :class:`DanglingReferenceError`.
    """
    parser = expat.ParserCreate()
    builder = _Builder(parser)
    parser.StartElementHandler = builder.start
    parser.EndElementHandler = builder.end
    try:
        parser.Parse(xml_bytes, True)
    except expat.ExpatError as exc:
        raise OsmParseError(
            f"malformed XML: {expat.ErrorString(exc.code)}", parser.ErrorByteIndex
        ) from None
    return OsmDocument(builder.nodes, builder.ways)


def load_osm(path: str | Path) -> OsmDocument:
    return parse_osm(Path(path).read_bytes())


def serialize_osm(doc: OsmDocument) -> bytes:
    """Write ``doc`` back out as OSM v0.6 XML.

    Coordinates use ``repr`` so that re-parsing reproduces identical doubles.
    """
    out = ['<?xml version="1.0" encoding="UTF-8"?>', '<osm version="0.6" generator="sdpp">']

    def tag_lines(tags, indent):
        return [f"{indent}<tag k={quoteattr(k)} v={quoteattr(v)}/>" for k, v in tags.items()]

    for node in doc.nodes.values():
        head = f'  <node id="{node.id}" lat="{node.lat!r}" lon="{node.lon!r}"'
        if node.tags:
            out.append(head + ">")
            out.extend(tag_lines(node.tags, "    "))
            out.append("  </node>")
        else:
            out.append(head + "/>")
    for way in doc.ways.values():
        out.append(f'  <way id="{way.id}">')
        out.extend(f'    <nd ref="{ref}"/>' for ref in way.node_refs)
        out.extend(tag_lines(way.tags, "    "))
        out.append("  </way>")
    out.append("</osm>")
    return ("\n".join(out) + "\n").encode("utf-8")


def is_road(way: OsmWay) -> bool:
    return way.tags.get("highway") in ROAD_CLASSES


def filter_roads(doc: OsmDocument) -> OsmDocument:
    """Keep only drivable-road ways and the nodes they reference.

    Element order from the source document is preserved.
    """
    ways = {wid: w for wid, w in doc.ways.items() if is_road(w)}
    used = {ref for w in ways.values() for ref in w.node_refs}
    nodes = {nid: n for nid, n in doc.nodes.items() if nid in used}
    return OsmDocument(nodes, ways)


def default_lane_count(highway_class: str, oneway: bool) -> int:
    # Every two-way class currently defaults to 2; kept as a function so the
    # table can diverge per class without touching callers.
    if oneway:
        return 1
    return 2


def _lane_count(way: OsmWay, oneway: bool) -> int:
    default = default_lane_count(way.tags["highway"], oneway)
    raw = way.tags.get("lanes")
    if raw is None:
        return default
    try:
        value = int(raw.strip())
    except ValueError:
        value = 0
    if value >= 1:
        return value
    msg = f"way {way.id}: cannot interpret lanes={raw!r}, using default {default}"
    logger.warning(msg)
    warnings.warn(msg, LaneTagWarning, stacklevel=3)
    return default


def _has_bike_lane(tags: Mapping[str, str]) -> bool:
    return any(key in tags and tags[key] != "no" for key in CYCLEWAY_KEYS)


def normalize_roads(doc: OsmDocument) -> list[RoadSegment]:
    """Turn each road way of a filtered document into a :class:`RoadSegment`."""
    segments = []
    for way in doc.ways.values():
        oneway = way.tags.get("oneway", "").strip().lower() in ONEWAY_TRUE
        centerline = tuple((doc.nodes[r].lat, doc.nodes[r].lon) for r in way.node_refs)
        segments.append(
            RoadSegment(
                way_id=way.id,
                highway_class=way.tags["highway"],
                name=way.tags.get("name"),
                lane_count=_lane_count(way, oneway),
                oneway=oneway,
                has_bike_lane=_has_bike_lane(way.tags),
                centerline=centerline,
            )
        )
    return segments


def dump_segments(segments: Iterable[RoadSegment]) -> str:
    return json.dumps({"segments": [s.to_dict() for s in segments]}, indent=2) + "\n"


def load_segments(text: str) -> list[RoadSegment]:
    return [RoadSegment.from_dict(d) for d in json.loads(text)["segments"]]
