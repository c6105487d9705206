import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdpp.osm import (
    DanglingReferenceError,
    LaneTagWarning,
    OsmDocument,
    OsmNode,
    OsmParseError,
    OsmWay,
    RoadSegment,
    dump_segments,
    filter_roads,
    load_segments,
    normalize_roads,
    parse_osm,
    serialize_osm,
)


def osm(body: str) -> bytes:
    return f'<?xml version="1.0"?><osm version="0.6">{body}</osm>'.encode()


def way_xml(way_id, refs, tags):
    nds = "".join(f'<nd ref="{r}"/>' for r in refs)
    tg = "".join(f'<tag k="{k}" v="{v}"/>' for k, v in tags.items())
    return f'<way id="{way_id}">{nds}{tg}</way>'


def nodes_xml(ids, lat0=37.0, lon0=-122.0):
    return "".join(f'<node id="{i}" lat="{lat0 + i * 1e-4}" lon="{lon0}"/>' for i in ids)


def single_way(tags, n_nodes=3):
    ids = list(range(1, n_nodes + 1))
    return parse_osm(osm(nodes_xml(ids) + way_xml(10, ids, tags)))


class TestParse:
    def test_two_nodes_no_ways(self):
        doc = parse_osm(osm(nodes_xml([1, 2])))
        assert len(doc.nodes) == 2 and len(doc.ways) == 0

    def test_relation_only_is_ignored(self):
        doc = parse_osm(osm('<relation id="5"><member type="way" ref="1" role=""/>'
                            '<tag k="type" v="route"/></relation>'))
        assert len(doc.nodes) == 0 and len(doc.ways) == 0

    def test_mini_map(self, mini_map_bytes):
        # counted by hand in src/sdpp/data/mini_map.osm
        doc = parse_osm(mini_map_bytes)
        assert len(doc.ways) == 3
        assert len(doc.nodes) == 14
        assert doc.ways[101].tags["highway"] == "residential"
        assert doc.ways[101].node_refs == (1, 2, 3, 4, 5)
        assert doc.nodes[8].tags == {"highway": "traffic_signals"}

    def test_malformed_xml_reports_byte_offset(self):
        data = b'<osm version="0.6"><node id="1" lat="1" lon="2"></osm>'
        with pytest.raises(OsmParseError) as info:
            parse_osm(data)
        assert info.value.offset is not None
        assert 0 < info.value.offset <= len(data)
        assert "byte offset" in str(info.value)

    def test_dangling_reference(self):
        with pytest.raises(DanglingReferenceError) as info:
            parse_osm(osm(nodes_xml([1]) + way_xml(7, [1, 99], {"highway": "service"})))
        assert info.value.way_id == 7 and info.value.node_id == 99
        assert "7" in str(info.value) and "99" in str(info.value)

    def test_duplicate_node_rejected(self):
        with pytest.raises(OsmParseError, match="duplicate"):
            parse_osm(osm(nodes_xml([1, 1])))

    def test_latitude_out_of_range(self):
        with pytest.raises(OsmParseError):
            parse_osm(osm('<node id="1" lat="91" lon="0"/>'))

    def test_single_node_way_rejected(self):
        with pytest.raises(OsmParseError):
            parse_osm(osm(nodes_xml([1]) + way_xml(3, [1], {})))

    def test_file_order_preserved(self):
        doc = parse_osm(osm(nodes_xml([3, 1, 2]) + way_xml(5, [2, 3, 1], {})))
        assert list(doc.nodes) == [3, 1, 2]
        assert doc.ways[5].node_refs == (2, 3, 1)

    def test_large_ids(self):
        big = 2**62 + 7
        doc = parse_osm(osm(f'<node id="{big}" lat="0" lon="0"/>'))
        assert big in doc.nodes


class TestFilter:
    def test_building_removed(self):
        doc = filter_roads(single_way({"building": "yes"}))
        assert not doc.ways and not doc.nodes

    def test_residential_kept(self):
        doc = filter_roads(single_way({"highway": "residential"}))
        assert list(doc.ways) == [10]
        assert set(doc.nodes) == {1, 2, 3}

    @pytest.mark.parametrize("value", ["footway", "cycleway", "path", "steps", "track", "proposed"])
    def test_non_drivable_highways_removed(self, value):
        assert not filter_roads(single_way({"highway": value})).ways

    @pytest.mark.parametrize("value", ["motorway_link", "living_street", "service", "trunk"])
    def test_whitelist_members_kept(self, value):
        assert filter_roads(single_way({"highway": value})).ways

    def test_mini_map(self, mini_map_bytes):
        doc = filter_roads(parse_osm(mini_map_bytes))
        assert sorted(doc.ways) == [101, 102]
        assert sorted(doc.nodes) == list(range(1, 11))


class TestNormalize:
    def test_residential_defaults(self):
        (seg,) = normalize_roads(filter_roads(single_way({"highway": "residential"})))
        assert seg.lane_count == 2 and seg.oneway is False and seg.has_bike_lane is False

    def test_tags_pass_through(self):
        (seg,) = normalize_roads(single_way({"highway": "motorway", "lanes": "3", "oneway": "yes"}))
        assert seg.lane_count == 3 and seg.oneway is True

    def test_unparseable_lanes_falls_back(self):
        with pytest.warns(LaneTagWarning, match="two"):
            (seg,) = normalize_roads(single_way({"highway": "residential", "lanes": "two"}))
        assert seg.lane_count == 2

    def test_zero_lanes_falls_back(self):
        with pytest.warns(LaneTagWarning):
            (seg,) = normalize_roads(single_way({"highway": "primary", "lanes": "0", "oneway": "yes"}))
        assert seg.lane_count == 1

    @pytest.mark.parametrize(
        "cls, oneway, expected",
        [
            ("residential", "no", 2),
            ("service", None, 2),
            ("living_street", None, 2),
            ("unclassified", None, 2),
            ("primary", None, 2),
            ("secondary", None, 2),
            ("tertiary", None, 2),
            ("trunk", None, 2),
            ("motorway", None, 2),
            ("motorway", "yes", 1),
            ("residential", "true", 1),
            ("tertiary", "1", 1),
        ],
    )
    def test_default_lane_table(self, cls, oneway, expected):
        tags = {"highway": cls}
        if oneway:
            tags["oneway"] = oneway
        (seg,) = normalize_roads(single_way(tags))
        assert seg.lane_count == expected

    @pytest.mark.parametrize("value, expected", [("yes", True), ("true", True), ("1", True),
                                                 ("no", False), ("-1", False), ("reversible", False)])
    def test_oneway_values(self, value, expected):
        (seg,) = normalize_roads(single_way({"highway": "residential", "oneway": value}))
        assert seg.oneway is expected

    @pytest.mark.parametrize(
        "tags, expected",
        [
            ({"cycleway": "lane"}, True),
            ({"cycleway:right": "track"}, True),
            ({"cycleway:both": "lane"}, True),
            ({"cycleway": "no"}, False),
            ({"cycleway:left": "no"}, False),
            ({}, False),
        ],
    )
    def test_bike_lane_flag(self, tags, expected):
        (seg,) = normalize_roads(single_way({"highway": "residential", **tags}))
        assert seg.has_bike_lane is expected

    def test_geometry_bit_identical(self, mini_map_bytes):
        doc = filter_roads(parse_osm(mini_map_bytes))
        for seg in normalize_roads(doc):
            refs = doc.ways[seg.way_id].node_refs
            assert seg.centerline == tuple((doc.nodes[r].lat, doc.nodes[r].lon) for r in refs)

    def test_segments_json_round_trip(self, mini_map_bytes):
        segs = normalize_roads(filter_roads(parse_osm(mini_map_bytes)))
        text = dump_segments(segs)
        assert load_segments(text) == segs
        d = json.loads(text)["segments"][0]
        assert set(d) == {"way_id", "highway_class", "name", "lane_count", "oneway",
                          "has_bike_lane", "centerline"}

    def test_segment_invariants(self):
        with pytest.raises(ValueError):
            RoadSegment(1, "residential", None, 0, False, False, ((0, 0), (0, 1)))
        with pytest.raises(ValueError):
            RoadSegment(1, "residential", None, 1, False, False, ((0, 0),))


# -- properties -------------------------------------------------------------------

TAG_VALUES = st.sampled_from(["residential", "primary", "footway", "motorway_link", None])


@st.composite
def documents(draw):
    n_nodes = draw(st.integers(2, 12))
    nodes = {
        i: OsmNode(i, draw(st.floats(-89, 89)), draw(st.floats(-179, 179)))
        for i in range(1, n_nodes + 1)
    }
    ways = {}
    for wid in range(100, 100 + draw(st.integers(0, 5))):
        refs = draw(st.lists(st.integers(1, n_nodes), min_size=2, max_size=6))
        hw = draw(TAG_VALUES)
        tags = {"highway": hw} if hw else {"building": "yes"}
        ways[wid] = OsmWay(wid, tuple(refs), tags)
    return OsmDocument(nodes, ways)


@given(documents())
@settings(max_examples=60)
def test_filter_idempotent_and_subset(doc):
    once = filter_roads(doc)
    assert filter_roads(once) == once
    assert set(once.nodes) <= set(doc.nodes)
    assert set(once.ways) <= set(doc.ways)


@given(documents())
@settings(max_examples=60)
def test_serialize_round_trip(doc):
    kept = filter_roads(doc)
    assert parse_osm(serialize_osm(kept)) == kept


def test_serialize_escapes_tag_values():
    doc = OsmDocument({1: OsmNode(1, 0.1, 0.2), 2: OsmNode(2, 0.3, 0.4)},
                      {5: OsmWay(5, (1, 2), {"name": 'A & "B" <C>', "highway": "service"})})
    assert parse_osm(serialize_osm(doc)) == doc
