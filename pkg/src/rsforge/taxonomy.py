"""Scene category taxonomies for natural and man-made samples.

Natural categories follow the land-cover product legend (9 classes, ids 0-8,
order is load-bearing: the class histogram index equals the category id).
Man-made categories are the 22-class scene system used by the OSM rule table
(ids 9-30), giving 31 categories in total.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SceneCategory:
    id: int
    name: str
    kind: str  # "natural" | "man-made"

    def __post_init__(self):
        if self.kind not in ("natural", "man-made"):
            raise ValueError(f"bad category kind: {self.kind!r}")


_NATURAL_NAMES = (
    "Forest",
    "Grassland",
    "Shrubland",
    "Cropland",
    "Wetland",
    "Water",
    "Tundra",
    "Bareland",
    "Snow/Ice",
)

_MANMADE_NAMES = (
    "Airport",
    "Parking",
    "Commercial area",
    "Residential area",
    "School",
    "Sports center",
    "Industrial area",
    "Railway station",
    "Port",
    "Bridge",
    "Road",
    "Power plant",
    "Storage tank",
    "Stadium",
    "Golf course",
    "Park",
    "Church",
    "Hospital",
    "Dam",
    "Quarry",
    "Construction site",
    "Helipad",
)

NATURAL_CLASSES = tuple(
    SceneCategory(i, name, "natural") for i, name in enumerate(_NATURAL_NAMES)
)
MANMADE_CLASSES = tuple(
    SceneCategory(len(NATURAL_CLASSES) + i, name, "man-made")
    for i, name in enumerate(_MANMADE_NAMES)
)
ALL_CLASSES = NATURAL_CLASSES + MANMADE_CLASSES

NUM_NATURAL = len(NATURAL_CLASSES)
NUM_MANMADE = len(MANMADE_CLASSES)

_BY_NAME = {c.name: c for c in ALL_CLASSES}
_BY_ID = {c.id: c for c in ALL_CLASSES}


def category_by_name(name: str) -> SceneCategory:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise KeyError(f"unknown scene category: {name!r}") from None


def category_by_id(cid: int) -> SceneCategory:
    try:
        return _BY_ID[cid]
    except KeyError:
        raise KeyError(f"unknown scene category id: {cid}") from None


def natural_category(class_id: int) -> SceneCategory:
    """Natural category whose id equals the land-cover class id."""
    if not 0 <= class_id < NUM_NATURAL:
        raise KeyError(f"land-cover class id out of range: {class_id}")
    return NATURAL_CLASSES[class_id]
