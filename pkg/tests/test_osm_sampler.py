"""OSM parsing, tag-to-category rules, and window extraction."""

import numpy as np
import pytest

from rsforge.errors import (
    MalformedXmlError,
    RuleTableError,
    UnsupportedVersionError,
)
from rsforge.geo_raster import GeoRaster, Rect
from rsforge.osm_sampler import (
    OsmNode,
    OsmRelation,
    OsmWay,
    RuleTable,
    associate_category,
    element_window,
    parse_osm,
    sample_manmade,
    serialize_osm,
)

# geo = pixel grid: x right, y down via negative pixel height
FLAT = (0.0, 1.0, 0.0, 0.0, 0.0, -1.0)


def image_raster(side=128):
    data = np.zeros((side, side, 3), dtype=np.uint8)
    return GeoRaster(width=side, height=side, bands=3, data=data, transform=FLAT)


def doc_from(xml_body, version="0.6"):
    return parse_osm(f'<osm version="{version}">{xml_body}</osm>')


# -------------------------------------------------------------- parsing

def test_parse_nodes_ways_relations():
    doc = doc_from(
        '<node id="1" lat="-3.5" lon="2.5"><tag k="amenity" v="parking"/></node>'
        '<node id="2" lat="-4.5" lon="3.5"/>'
        '<way id="7" timestamp="2020-01-01T00:00:00Z">'
        '<nd ref="1"/><nd ref="2"/><tag k="aeroway" v="apron"/></way>'
        '<relation id="9"><member type="way" ref="7" role="outer"/>'
        '<tag k="landuse" v="education"/></relation>'
    )
    assert set(doc.nodes) == {1, 2}
    assert doc.nodes[1].tags == {"amenity": "parking"}
    assert doc.ways[7].node_ids == (1, 2)
    assert doc.ways[7].timestamp == "2020-01-01T00:00:00Z"
    assert doc.relations[9].members == (("way", 7, "outer"),)


def test_parse_rejects_malformed_and_wrong_version():
    with pytest.raises(MalformedXmlError):
        parse_osm("<osm version='0.6'><node id=")
    with pytest.raises(UnsupportedVersionError):
        parse_osm('<osm version="0.5"></osm>')


def test_parse_skips_unresolvable_ways():
    doc = doc_from('<way id="3"><nd ref="404"/></way>')
    assert 3 not in doc.ways
    assert doc.skipped_elements == 1


def test_element_coords_recursion_guard():
    doc = doc_from(
        '<relation id="1"><member type="relation" ref="2" role=""/></relation>'
        '<relation id="2"><member type="relation" ref="1" role=""/></relation>'
    )
    assert doc.element_coords(doc.relations[1]) == []


def test_serialize_roundtrip():
    doc = doc_from(
        '<node id="1" lat="-3.0" lon="2.0"/>'
        '<node id="5" lat="-8.0" lon="9.0" timestamp="2019-06-01T12:00:00Z">'
        '<tag k="amenity" v="school"/></node>'
        '<way id="7"><nd ref="1"/><nd ref="5"/><tag k="x" v="y"/></way>'
    )
    back = parse_osm(serialize_osm(doc))
    assert back.nodes == doc.nodes
    assert back.ways == doc.ways
    assert back.relations == doc.relations


# ----------------------------------------------------------- rule table

def test_default_table_spec_mappings():
    rules = RuleTable.default()
    cases = {
        "aerodrome": "Airport",
        "airfield": "Airport",
        "apron": "Airport",
        "parking": "Parking",
        "parking space": "Parking",
        "car park": "Parking",
        "university": "School",
        "college": "School",
        "school": "School",
    }
    for value, want in cases.items():
        cat = associate_category({"any": value}, rules)
        assert cat is not None and cat.name == want, value


def test_unmapped_values_give_none():
    rules = RuleTable.default()
    assert associate_category({"amenity": "phone"}, rules) is None
    assert associate_category({"shop": "advice"}, rules) is None
    assert associate_category({}, rules) is None


def test_matching_is_casefolded_first_wins():
    rules = RuleTable.from_text("apron => Airport\nparking => Parking\n")
    assert associate_category({"a": "APRON"}, rules).name == "Airport"
    # value set matching: any tag value can hit
    assert associate_category({"x": "junk", "y": "Parking"}, rules).name == "Parking"


def test_rule_table_errors():
    with pytest.raises(RuleTableError):
        RuleTable.from_text("no arrow here\n")
    with pytest.raises(RuleTableError):
        RuleTable.from_text("apron => NotACategory\n")
    with pytest.raises(RuleTableError):
        RuleTable.from_text("apron => Forest\n")  # natural class
    with pytest.raises(RuleTableError):
        RuleTable.from_text(" => Airport\n")


def test_rule_table_comments_and_load(tmp_path):
    text = "# header\napron => Airport  # trailing\n\nparking => Parking\n"
    t = tmp_path / "rules.txt"
    t.write_text(text)
    rules = RuleTable.load(t)
    assert [p for p, _ in rules.rules] == ["apron", "parking"]


# -------------------------------------------------------------- windows

def test_node_window_is_centered_fixed_size():
    img = image_raster(128)
    doc = doc_from('<node id="1" lat="-64.0" lon="64.0"/>')
    win = element_window(doc.nodes[1], doc, img, sample_side=32)
    assert win == Rect(48, 48, 32, 32)


def test_node_window_clamped_at_border():
    img = image_raster(128)
    doc = doc_from('<node id="1" lat="-2.0" lon="2.0"/>')
    win = element_window(doc.nodes[1], doc, img, sample_side=32, min_side=8)
    assert win.col0 == 0 and win.row0 == 0
    assert win.col1 <= 128 and win.row1 <= 128


def test_way_window_bbox_plus_pad():
    img = image_raster(128)
    doc = doc_from(
        '<node id="1" lat="-20.0" lon="20.0"/>'
        '<node id="2" lat="-60.0" lon="80.0"/>'
        '<way id="5"><nd ref="1"/><nd ref="2"/></way>'
    )
    win = element_window(doc.ways[5], doc, img, pad=0.1)
    # bbox cols [20, 80], rows [20, 60]; 10% pad per side
    assert win == Rect(14, 16, 72, 48)


def test_window_too_small_is_rejected():
    img = image_raster(128)
    doc = doc_from(
        '<node id="1" lat="-20.0" lon="20.0"/>'
        '<node id="2" lat="-20.5" lon="22.0"/>'
        '<way id="5"><nd ref="1"/><nd ref="2"/></way>'
    )
    assert element_window(doc.ways[5], doc, img, pad=0.0, min_side=8) is None


def test_window_fully_outside_is_rejected():
    img = image_raster(64)
    doc = doc_from('<node id="1" lat="-500.0" lon="500.0"/>')
    assert element_window(doc.nodes[1], doc, img) is None


# -------------------------------------------------------- sample_manmade

SAMPLE_XML = (
    '<node id="30" lat="-100.0" lon="30.0"><tag k="amenity" v="school"/></node>'
    '<node id="1" lat="-10.0" lon="10.0"/>'
    '<node id="2" lat="-10.0" lon="60.0"/>'
    '<node id="3" lat="-50.0" lon="60.0"/>'
    '<node id="4" lat="-50.0" lon="10.0"/>'
    '<way id="10" timestamp="2021-05-01T00:00:00Z">'
    '<nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="4"/>'
    '<tag k="aeroway" v="aerodrome"/></way>'
    '<node id="40" lat="-80.0" lon="90.0"><tag k="amenity" v="phone"/></node>'
)


def test_sample_manmade_labels_and_order():
    img = image_raster(128)
    doc = doc_from(SAMPLE_XML)
    samples = sample_manmade(img, doc, RuleTable.default(), image_id="tile")
    names = [s.label.name for s in samples]
    # nodes before ways, ids ascending; unmapped "phone" skipped
    assert names == ["School", "Airport"]
    for s in samples:
        assert s.image_id == "tile"
        assert s.source_kind == "man-made"


def test_sample_manmade_deduplicates():
    img = image_raster(128)
    doc = doc_from(
        '<node id="1" lat="-40.0" lon="40.0"><tag k="amenity" v="parking"/></node>'
        '<node id="2" lat="-40.2" lon="40.2"><tag k="amenity" v="parking"/></node>'
    )
    samples = sample_manmade(img, doc, RuleTable.default(), sample_side=32)
    # both nodes floor to the same window and label; one survives
    assert len(samples) == 1


def test_sample_manmade_time_filter():
    img = image_raster(128)
    doc = doc_from(SAMPLE_XML)
    rules = RuleTable.default()
    inside = sample_manmade(
        img, doc, rules,
        time_range=("2021-01-01T00:00:00Z", "2021-12-31T23:59:59Z"),
    )
    outside = sample_manmade(
        img, doc, rules,
        time_range=("1999-01-01T00:00:00Z", "1999-12-31T23:59:59Z"),
    )
    # the way is stamped 2021; untimestamped school node passes both
    assert {s.label.name for s in inside} == {"School", "Airport"}
    assert {s.label.name for s in outside} == {"School"}


def test_sample_manmade_deterministic():
    img = image_raster(128)
    doc = doc_from(SAMPLE_XML)
    rules = RuleTable.default()
    assert sample_manmade(img, doc, rules) == sample_manmade(img, doc, rules)
