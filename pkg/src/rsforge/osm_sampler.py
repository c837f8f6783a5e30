"""Man-made scene sampling from OSM vector annotations.

Parses the node/way/relation subset of OSM XML, maps free-form tag values
onto man-made scene categories through an ordered rule table, and turns
each matched element's geometry into a pixel window on the target image.
Point features get a fixed-size window; extended features get their
bounding box plus a fractional pad.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import (
    MalformedXmlError,
    RuleTableError,
    UnsupportedVersionError,
)
from .geo_raster import GeoRaster, Rect, geo_to_pixel_float
from .natural_sampler import Sample
from .taxonomy import SceneCategory, category_by_name

SUPPORTED_OSM_VERSION = "0.6"


@dataclass(frozen=True)
class OsmNode:
    id: int
    lon: float
    lat: float
    tags: dict = field(default_factory=dict)
    timestamp: str | None = None


@dataclass(frozen=True)
class OsmWay:
    id: int
    node_ids: tuple
    tags: dict = field(default_factory=dict)
    timestamp: str | None = None


@dataclass(frozen=True)
class OsmRelation:
    id: int
    members: tuple  # (type, ref, role) triples
    tags: dict = field(default_factory=dict)
    timestamp: str | None = None


@dataclass
class OsmDocument:
    nodes: dict
    ways: dict
    relations: dict
    skipped_elements: int = 0
    timestamp_range: tuple | None = None

    def element_coords(self, elem, _seen=None):
        """Resolvable (lon, lat) pairs of an element, recursing into members."""
        if isinstance(elem, OsmNode):
            return [(elem.lon, elem.lat)]
        if isinstance(elem, OsmWay):
            return [
                (self.nodes[i].lon, self.nodes[i].lat)
                for i in elem.node_ids
                if i in self.nodes
            ]
        if isinstance(elem, OsmRelation):
            seen = _seen or set()
            if elem.id in seen:
                return []
            seen.add(elem.id)
            coords = []
            for mtype, ref, _role in elem.members:
                pool = {"node": self.nodes, "way": self.ways, "relation": self.relations}
                member = pool.get(mtype, {}).get(ref)
                if member is not None:
                    coords.extend(self.element_coords(member, seen))
            return coords
        raise TypeError(f"not an OSM element: {type(elem)}")


def _elem_tags(xml_elem) -> dict:
    return {
        t.attrib["k"]: t.attrib["v"]
        for t in xml_elem
        if t.tag == "tag" and "k" in t.attrib and "v" in t.attrib
    }


def parse_osm(text: str) -> OsmDocument:
    """Parse an OSM XML document (v0.6 subset: node, way, relation).

    Ways whose node refs do not resolve inside the document are skipped
    and counted.  Unknown element kinds are ignored.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        line, col = getattr(e, "position", (0, 0))
        raise MalformedXmlError(f"XML parse error at line {line}, col {col}: {e}") from e
    if root.tag != "osm":
        raise MalformedXmlError(f"root element is <{root.tag}>, expected <osm>")
    version = root.attrib.get("version")
    if version is not None and version != SUPPORTED_OSM_VERSION:
        raise UnsupportedVersionError(f"unsupported OSM version {version!r}")

    nodes: dict = {}
    ways: dict = {}
    relations: dict = {}
    skipped = 0
    timestamps = []

    for child in root:
        if child.tag != "node":
            continue
        try:
            nid = int(child.attrib["id"])
            lat = float(child.attrib["lat"])
            lon = float(child.attrib["lon"])
        except (KeyError, ValueError):
            skipped += 1
            continue
        ts = child.attrib.get("timestamp")
        if ts:
            timestamps.append(ts)
        nodes[nid] = OsmNode(nid, lon, lat, _elem_tags(child), ts)

    for child in root:
        if child.tag == "way":
            try:
                wid = int(child.attrib["id"])
            except (KeyError, ValueError):
                skipped += 1
                continue
            refs = tuple(
                int(nd.attrib["ref"]) for nd in child if nd.tag == "nd" and "ref" in nd.attrib
            )
            if not refs or any(r not in nodes for r in refs):
                skipped += 1
                continue
            ts = child.attrib.get("timestamp")
            if ts:
                timestamps.append(ts)
            ways[wid] = OsmWay(wid, refs, _elem_tags(child), ts)
        elif child.tag == "relation":
            try:
                rid = int(child.attrib["id"])
            except (KeyError, ValueError):
                skipped += 1
                continue
            members = tuple(
                (m.attrib.get("type", ""), int(m.attrib["ref"]), m.attrib.get("role", ""))
                for m in child
                if m.tag == "member" and "ref" in m.attrib
            )
            ts = child.attrib.get("timestamp")
            if ts:
                timestamps.append(ts)
            relations[rid] = OsmRelation(rid, members, _elem_tags(child), ts)

    ts_range = (min(timestamps), max(timestamps)) if timestamps else None
    return OsmDocument(nodes, ways, relations, skipped, ts_range)


def serialize_osm(doc: OsmDocument) -> str:
    """Round-trippable XML serialization of a parsed document."""
    root = ET.Element("osm", {"version": SUPPORTED_OSM_VERSION})
    for node in doc.nodes.values():
        attrs = {"id": str(node.id), "lat": repr(node.lat), "lon": repr(node.lon)}
        if node.timestamp:
            attrs["timestamp"] = node.timestamp
        el = ET.SubElement(root, "node", attrs)
        for k, v in node.tags.items():
            ET.SubElement(el, "tag", {"k": k, "v": v})
    for way in doc.ways.values():
        attrs = {"id": str(way.id)}
        if way.timestamp:
            attrs["timestamp"] = way.timestamp
        el = ET.SubElement(root, "way", attrs)
        for ref in way.node_ids:
            ET.SubElement(el, "nd", {"ref": str(ref)})
        for k, v in way.tags.items():
            ET.SubElement(el, "tag", {"k": k, "v": v})
    for rel in doc.relations.values():
        attrs = {"id": str(rel.id)}
        if rel.timestamp:
            attrs["timestamp"] = rel.timestamp
        el = ET.SubElement(root, "relation", attrs)
        for mtype, ref, role in rel.members:
            ET.SubElement(el, "member", {"type": mtype, "ref": str(ref), "role": role})
        for k, v in rel.tags.items():
            ET.SubElement(el, "tag", {"k": k, "v": v})
    return ET.tostring(root, encoding="unicode")


@dataclass(frozen=True)
class RuleTable:
    """Ordered (tag-value pattern -> man-made category) mapping."""

    rules: tuple

    @classmethod
    def from_text(cls, text: str) -> "RuleTable":
        rules = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=>" not in line:
                raise RuleTableError(f"line {lineno}: expected 'pattern => Category'")
            pattern, _, name = line.partition("=>")
            pattern = pattern.strip().casefold()
            name = name.strip()
            if not pattern:
                raise RuleTableError(f"line {lineno}: empty pattern")
            try:
                cat = category_by_name(name)
            except KeyError:
                raise RuleTableError(f"line {lineno}: unknown category {name!r}") from None
            if cat.kind != "man-made":
                raise RuleTableError(
                    f"line {lineno}: {name!r} is not a man-made category"
                )
            rules.append((pattern, cat))
        return cls(rules=tuple(rules))

    @classmethod
    def load(cls, path) -> "RuleTable":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def default(cls) -> "RuleTable":
        text = resources.files("rsforge").joinpath("data/osm_rules.txt").read_text()
        return cls.from_text(text)


def associate_category(tags: dict, rules: RuleTable):
    """First rule whose pattern equals any tag value (case-folded); None if none."""
    values = {str(v).casefold() for v in tags.values()}
    for pattern, cat in rules.rules:
        if pattern in values:
            return cat
    return None


def element_window(
    elem,
    doc: OsmDocument,
    image: GeoRaster,
    pad: float = 0.1,
    *,
    sample_side: int = 64,
    min_side: int = 8,
):
    """Pixel window of an element on the image, or None when unusable.

    Nodes get a sample_side window centered on the point; ways and
    relations get their coordinate bbox expanded by ``pad`` per side.
    The result is clamped to the image and must reach min_side.
    """
    coords = doc.element_coords(elem)
    if not coords:
        return None
    cols = []
    rows = []
    for lon, lat in coords:
        c, r = geo_to_pixel_float(image, lon, lat)
        cols.append(c)
        rows.append(r)

    if isinstance(elem, OsmNode):
        half = sample_side / 2.0
        c0 = math.floor(cols[0] - half)
        r0 = math.floor(rows[0] - half)
        c1 = c0 + sample_side
        r1 = r0 + sample_side
    else:
        c0f, c1f = min(cols), max(cols)
        r0f, r1f = min(rows), max(rows)
        pw = (c1f - c0f) * pad
        ph = (r1f - r0f) * pad
        c0 = math.floor(c0f - pw)
        r0 = math.floor(r0f - ph)
        c1 = math.ceil(c1f + pw)
        r1 = math.ceil(r1f + ph)

    c0 = max(0, c0)
    r0 = max(0, r0)
    c1 = min(image.width, c1)
    r1 = min(image.height, r1)
    if c1 - c0 < min_side or r1 - r0 < min_side:
        return None
    return Rect(c0, r0, c1 - c0, r1 - r0)


def _in_time_range(elem, time_range) -> bool:
    if time_range is None or elem.timestamp is None:
        return True
    lo, hi = time_range
    return lo <= elem.timestamp <= hi


def sample_manmade(
    image: GeoRaster,
    doc: OsmDocument,
    rules: RuleTable,
    pad: float = 0.1,
    *,
    image_id: str = "",
    sample_side: int = 64,
    min_side: int = 8,
    time_range=None,
) -> list[Sample]:
    """One sample per matched element with a valid window, deduplicated.

    Elements are visited nodes-then-ways-then-relations in id order, so
    output order is independent of document order.  Duplicate
    (window, label) pairs collapse to the first occurrence.
    """
    samples = []
    seen = set()
    for pool in (doc.nodes, doc.ways, doc.relations):
        for eid in sorted(pool):
            elem = pool[eid]
            if not _in_time_range(elem, time_range):
                continue
            cat = associate_category(elem.tags, rules)
            if cat is None:
                continue
            window = element_window(
                elem, doc, image, pad, sample_side=sample_side, min_side=min_side
            )
            if window is None:
                continue
            key = (window.col0, window.row0, window.width, window.height, cat.id)
            if key in seen:
                continue
            seen.add(key)
            samples.append(
                Sample(
                    image_id=image_id,
                    window=window,
                    label=cat,
                    source_kind="man-made",
                )
            )
    return samples
