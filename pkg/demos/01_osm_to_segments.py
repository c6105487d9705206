"""
From OSM XML to road segments
=============================

Parse the bundled mini-map, keep only drivable roads and turn each way into a
``RoadSegment`` with lane count, direction and bike-lane flags.
"""

# %%
# The fixture holds two roads, a building outline and a route relation.
from importlib import resources

from sdpp.osm import filter_roads, normalize_roads, parse_osm, serialize_osm

raw = resources.files("sdpp.data").joinpath("mini_map.osm").read_bytes()
doc = parse_osm(raw)
for way in doc.ways.values():
    print(way.id, way.tags)

# %%
# Filtering drops the building and any node it alone referenced.
roads = filter_roads(doc)
print(f"{len(doc.ways)} ways -> {len(roads.ways)} roads, {len(doc.nodes)} nodes -> {len(roads.nodes)}")

# %%
# Normalization fills in defaults. Way 101 has no ``lanes`` tag and is two-way,
# so it gets two lanes; way 102 carries ``lanes=3`` and ``oneway=yes``.
for seg in normalize_roads(roads):
    print(f"{seg.way_id} {seg.highway_class:<12} lanes={seg.lane_count} "
          f"oneway={seg.oneway} bike={seg.has_bike_lane} vertices={len(seg.centerline)}")

# %%
# The filtered document serializes back to OSM XML and re-parses to the same value.
assert parse_osm(serialize_osm(roads)) == roads
