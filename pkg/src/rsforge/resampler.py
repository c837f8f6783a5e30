"""Class-balanced resampling of merged sampling manifests.

The natural and man-made samplers produce wildly imbalanced category
counts.  This module merges their manifests and draws a balanced subset:
every natural class is cut to the size of the rarest natural class, and
every man-made class to a budget scaled by the natural/man-made class
ratio.  Selection is uniform without replacement and fully determined by
the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyNaturalClassError,
    ManifestFormatError,
    TaxonomyOverlapError,
)
from .geo_raster import Rect
from .natural_sampler import Sample
from .taxonomy import SceneCategory, category_by_name


@dataclass(frozen=True)
class DatasetManifest:
    id: str
    seed: int
    records: tuple
    # Explicit class list; empty means "derive from the records".  A
    # loaded manifest can legitimately declare classes that currently
    # have zero records.
    taxonomy_names: tuple = ()
    shortfalls: dict = field(default_factory=dict)

    def taxonomy(self) -> tuple:
        """Categories covered by this manifest, ordered by class id."""
        if self.taxonomy_names:
            cats = [category_by_name(n) for n in self.taxonomy_names]
        else:
            cats = {r.label.id: r.label for r in self.records}.values()
        return tuple(sorted(cats, key=lambda c: c.id))

    def counts(self) -> dict:
        tally = {c.name: 0 for c in self.taxonomy()}
        for r in self.records:
            tally[r.label.name] = tally.get(r.label.name, 0) + 1
        return tally

    def __len__(self) -> int:
        return len(self.records)


def merge_manifests(nat: DatasetManifest, man: DatasetManifest) -> DatasetManifest:
    """Concatenate two manifests with disjoint taxonomies."""
    if not nat.records and not nat.taxonomy_names:
        return man
    if not man.records and not man.taxonomy_names:
        return nat
    ids_a = {c.id for c in nat.taxonomy()}
    ids_b = {c.id for c in man.taxonomy()}
    overlap = ids_a & ids_b
    if overlap:
        names = sorted(c.name for c in nat.taxonomy() if c.id in overlap)
        raise TaxonomyOverlapError(f"categories in both manifests: {names}")
    names = tuple(c.name for c in sorted(nat.taxonomy() + man.taxonomy(), key=lambda c: c.id))
    return DatasetManifest(
        id=f"{nat.id}+{man.id}",
        seed=nat.seed,
        records=nat.records + man.records,
        taxonomy_names=names,
    )


def _select(indices_count: int, take: int, rng_key) -> np.ndarray:
    """Sorted positions of a uniform without-replacement draw.

    Taking everything keeps the original order untouched so that
    re-running the draw on its own output is a no-op.
    """
    if take >= indices_count:
        return np.arange(indices_count)
    rng = np.random.default_rng(rng_key)
    picked = rng.choice(indices_count, size=take, replace=False)
    return np.sort(picked)


def rebalance(m: DatasetManifest, seed: int) -> DatasetManifest:
    """Draw the class-balanced subset of a merged manifest.

    Natural classes are cut to n_k, the size of the rarest natural
    class.  Man-made classes are cut to n_k' = floor(n_k * C_nat /
    C_man) where the C are the number of natural and man-made classes
    in the taxonomy; classes with fewer samples keep what they have and
    the shortfall is recorded.
    """
    taxonomy = m.taxonomy()
    natural = [c for c in taxonomy if c.kind == "natural"]
    manmade = [c for c in taxonomy if c.kind == "man-made"]
    if not natural:
        raise EmptyNaturalClassError("manifest declares no natural classes")
    counts = m.counts()
    empty = [c.name for c in natural if counts[c.name] == 0]
    if empty:
        raise EmptyNaturalClassError(f"natural classes without samples: {empty}")

    by_class: dict = {c.id: [] for c in taxonomy}
    for i, r in enumerate(m.records):
        by_class[r.label.id].append(i)

    n_k = min(counts[c.name] for c in natural)
    n_k_man = (n_k * len(natural)) // len(manmade) if manmade else 0

    chosen: list = []
    shortfalls: dict = {}
    for cat in natural:
        pool = by_class[cat.id]
        pos = _select(len(pool), n_k, (seed, cat.id))
        chosen.extend(pool[p] for p in pos)
    for cat in manmade:
        pool = by_class[cat.id]
        take = min(n_k_man, len(pool))
        if take < n_k_man:
            shortfalls[cat.name] = n_k_man - take
        pos = _select(len(pool), take, (seed, cat.id))
        chosen.extend(pool[p] for p in pos)

    out_id = m.id if m.id.endswith("-balanced") else f"{m.id}-balanced"
    return DatasetManifest(
        id=out_id,
        seed=seed,
        records=tuple(m.records[i] for i in chosen),
        taxonomy_names=tuple(c.name for c in taxonomy),
        shortfalls=shortfalls,
    )


def _record_to_json(r: Sample) -> str:
    obj = {
        "image": r.image_id,
        "x": r.window.col0,
        "y": r.window.row0,
        "w": r.window.width,
        "h": r.window.height,
        "label": r.label.name,
        "kind": r.source_kind,
    }
    if r.score is not None:
        obj["score"] = r.score
    return json.dumps(obj, sort_keys=True)


def save_manifest(m: DatasetManifest, path) -> None:
    """Write JSON-lines manifest: one header line, then one record per line."""
    header = {
        "dataset": m.id,
        "seed": m.seed,
        "taxonomy": [c.name for c in m.taxonomy()],
    }
    if m.shortfalls:
        header["shortfalls"] = dict(sorted(m.shortfalls.items()))
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(_record_to_json(r) for r in m.records)
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path) -> DatasetManifest:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ManifestFormatError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ManifestFormatError(f"{path}: bad header: {e}") from e
    if not isinstance(header, dict) or "dataset" not in header:
        raise ManifestFormatError(f"{path}: header must carry a 'dataset' key")

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            label = category_by_name(obj["label"])
            rect = Rect(int(obj["x"]), int(obj["y"]), int(obj["w"]), int(obj["h"]))
            records.append(
                Sample(
                    image_id=obj["image"],
                    window=rect,
                    label=label,
                    source_kind=obj["kind"],
                    score=obj.get("score"),
                )
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise ManifestFormatError(f"{path}:{lineno}: bad record: {e}") from e

    return DatasetManifest(
        id=str(header["dataset"]),
        seed=int(header.get("seed", 0)),
        records=tuple(records),
        taxonomy_names=tuple(header.get("taxonomy", ())),
        shortfalls=dict(header.get("shortfalls", {})),
    )
