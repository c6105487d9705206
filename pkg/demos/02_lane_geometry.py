"""
Lane geometry from a centerline
===============================

Offset a centerline into drive lanes, bike lanes and road boundaries, and see
how the miter rule behaves at corners.
"""

# %%
import numpy as np

from sdpp.generation import generate_lanes_for_segment, lane_layout
from sdpp.geo import LocalFrame, offset_polyline, vertex_normals
from sdpp.knowledge import RoadSpec
from sdpp.osm import RoadSegment

# %%
# A right-angle corner: the offset vertex sits on the bisector, pushed out by
# 1/cos(45 deg) so both adjoining edges stay exactly 1 m away.
corner = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
print(offset_polyline(corner, 1.0))

# %%
# Sharp turns are capped: the normal never grows past twice the offset.
a = np.radians(160)
spike = [[0, 0], [10, 0], [10 + 10 * np.cos(a), 10 * np.sin(a)]]
print(np.hypot(*vertex_normals(spike).T))

# %%
# A 100 m two-way residential street with bike lanes on both sides.
frame = LocalFrame(37.44, -122.16)
east = frame.to_latlon([[0.0, 0.0], [50.0, 0.0], [100.0, 0.0]])
seg = RoadSegment(1, "residential", "Demo Street", 2, False, True, tuple(map(tuple, east)))
spec = RoadSpec(1, lane_width=3.0, bike_lane_width=1.5, shoulder_width=0.0, total_width=9.0)

for kind, idx, direction, offset, width in lane_layout(seg, spec):
    print(f"{kind:<8} #{idx} {direction:<8} offset {offset:+.2f} m  width {width:.2f} m")

# %%
# Back in degrees every lane keeps one vertex per centerline vertex, and the
# metric offsets come back when projected into the frame.
for lane in generate_lanes_for_segment(seg, spec, frame):
    y = frame.to_xy(lane.polyline)[:, 1]
    print(lane.kind, lane.lane_index, len(lane.polyline), np.round(y, 6))

# %%
# The same street in a left-hand traffic country flips the directions.
print([row[2] for row in lane_layout(seg, spec, drive_side="left")[:2]])
