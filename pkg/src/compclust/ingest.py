"""Data ingestion and cleaning: CSV records -> a typed point pattern.

Placenames collapse to canonical categories (spelling-variant groups are one
type), duplicate records of one settlement (same type within the merge
threshold, transitively) are replaced by their centroid, and every drop or
merge lands in the cleaning log with a reason.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .osgrid import OSGridError, parse_osgrid
from .patterns import ObservationWindow, PointPattern

__all__ = [
    "RawRecord",
    "IngestResult",
    "read_records",
    "ingest_and_clean",
    "export_pattern_csv",
    "read_pattern_csv",
    "DEFAULT_NAME_GROUPS",
]

# spelling variants treated as one placename category
DEFAULT_NAME_GROUPS = {
    "easton": "aston",
    "charlcot": "charlton",
    "draycot": "drayton",
    "walcot": "walton",
    "bourton": "burton",
    "bierton": "burton",
    "buerton": "burton",
}


@dataclass(frozen=True)
class RawRecord:
    place: str
    gridref: str
    county: str = ""
    parish: str = ""
    date: str = ""
    line: int = 0


@dataclass
class IngestResult:
    pattern: PointPattern
    categories: list[str]
    log: list[dict]
    dropped: int

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.log, fh, indent=1)


def read_records(path) -> list[RawRecord]:
    """Read the full-format CSV (county,place,parish,gridref,date)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        lower = {k.lower().strip(): k for k in reader.fieldnames or []}
        if "place" not in lower or "gridref" not in lower:
            raise ValueError("expected columns include 'place' and 'gridref'")
        for ln, row in enumerate(reader, start=2):
            out.append(RawRecord(
                place=row[lower["place"]].strip(),
                gridref=row[lower["gridref"]].strip(),
                county=row.get(lower.get("county", ""), "").strip(),
                parish=row.get(lower.get("parish", ""), "").strip(),
                date=row.get(lower.get("date", ""), "").strip(),
                line=ln,
            ))
    return out


def canonical_name(place: str, groups: dict | None = None) -> str:
    name = place.strip().lower()
    groups = DEFAULT_NAME_GROUPS if groups is None else groups
    return groups.get(name, name)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def ingest_and_clean(records, merge_threshold: float = 3.0, *,
                     name_groups: dict | None = None,
                     categories: list[str] | None = None,
                     unknown: str = "new",
                     merge_list=None,
                     window: ObservationWindow | None = None,
                     buffer: float = 3.0) -> IngestResult:
    """Parse, canonicalize and merge records into a PointPattern.

    Same-type records within merge_threshold km are identified transitively
    and replaced by the centroid of the group. merge_list may give explicit
    groups of record line numbers to merge first (domain-expert couples).
    unknown: 'new' adds unseen categories, 'reject' drops the record.
    """
    log: list[dict] = []
    pts = []  # (x_km, y_km, canonical name, line)
    for rec in records:
        try:
            parsed = parse_osgrid(rec.gridref)
        except OSGridError as err:
            log.append({"action": "drop", "line": rec.line,
                        "reason": f"gridref: {err}"})
            continue
        name = canonical_name(rec.place, name_groups)
        x, y = parsed.km
        pts.append([x, y, name, rec.line, parsed.precision])

    cats = list(categories) if categories else []
    kept = []
    for x, y, name, line, prec in pts:
        if name not in cats:
            if categories is not None and unknown == "reject":
                log.append({"action": "drop", "line": line,
                            "reason": f"unknown placename {name!r}"})
                continue
            cats.append(name)
        kept.append([x, y, name, line, prec])

    # explicit merge groups first, then the distance threshold, transitively
    uf = _UnionFind(len(kept))
    line_to_idx = {rec[3]: i for i, rec in enumerate(kept)}
    if merge_list:
        for group in merge_list:
            idxs = [line_to_idx[ln] for ln in group if ln in line_to_idx]
            for a, b in zip(idxs, idxs[1:]):
                uf.union(a, b)
            if len(idxs) >= 2:
                log.append({"action": "merge", "reason": "explicit merge list",
                            "lines": [kept[i][3] for i in idxs]})
    if merge_threshold > 0:
        by_name: dict[str, list[int]] = {}
        for i, rec in enumerate(kept):
            by_name.setdefault(rec[2], []).append(i)
        for idxs in by_name.values():
            arr = np.array([[kept[i][0], kept[i][1]] for i in idxs])
            for a in range(len(idxs)):
                d2 = ((arr[a + 1:] - arr[a]) ** 2).sum(axis=1)
                for off in np.flatnonzero(d2 <= merge_threshold**2):
                    uf.union(idxs[a], idxs[a + 1 + off])

    groups: dict[int, list[int]] = {}
    for i in range(len(kept)):
        groups.setdefault(uf.find(i), []).append(i)
    xs, marks = [], []
    for root, members in sorted(groups.items()):
        arr = np.array([[kept[i][0], kept[i][1]] for i in members])
        c = arr.mean(axis=0)
        xs.append(c)
        marks.append(cats.index(kept[root][2]) + 1)
        if len(members) > 1:
            log.append({
                "action": "merge",
                "reason": f"same placename within {merge_threshold} km",
                "lines": [kept[i][3] for i in members],
                "result": [float(c[0]), float(c[1])],
            })
    xy = np.array(xs) if xs else np.zeros((0, 2))
    if window is None:
        if len(xy):
            window = ObservationWindow.rectangle(
                xy[:, 0].min(), xy[:, 0].max(), xy[:, 1].min(), xy[:, 1].max(),
                buffer=buffer)
        else:
            window = ObservationWindow.unit_square()
    pattern = PointPattern(xy, marks, len(cats), window)
    dropped = sum(1 for entry in log if entry["action"] == "drop")
    return IngestResult(pattern=pattern, categories=cats, log=log, dropped=dropped)


def export_pattern_csv(pattern: PointPattern, path, matching=None) -> None:
    """Write the minimal x_km,y_km,type CSV (window recorded in a comment)."""
    xmin, xmax, ymin, ymax = pattern.window.bounds
    with open(path, "w") as fh:
        fh.write(f"# window {xmin:.9g} {xmax:.9g} {ymin:.9g} {ymax:.9g}\n")
        if matching is not None:
            edges = ";".join(",".join(str(i) for i in sorted(e)) for e in sorted(
                matching.edges, key=min))
            fh.write(f"# truth {edges}\n")
        fh.write("x_km,y_km,type\n")
        for (x, y), mk in zip(pattern.xy, pattern.marks):
            fh.write(f"{x!r},{y!r},{mk}\n")


def read_pattern_csv(path, k: int | None = None,
                     window: ObservationWindow | None = None):
    """Read the minimal CSV; returns (pattern, truth_edges or None)."""
    xs, marks = [], []
    bounds = None
    truth = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "window":
                    bounds = tuple(float(v) for v in parts[1:5])
                elif parts and parts[0] == "truth":
                    truth = [tuple(int(i) for i in grp.split(","))
                             for grp in parts[1].split(";")] if len(parts) > 1 else []
                continue
            if line.lower().startswith("x_km"):
                continue
            x, y, mk = line.split(",")
            xs.append((float(x), float(y)))
            marks.append(int(mk))
    if window is None:
        if bounds is not None:
            window = ObservationWindow.rectangle(*bounds)
        else:
            arr = np.array(xs)
            window = ObservationWindow.rectangle(
                arr[:, 0].min(), arr[:, 0].max(), arr[:, 1].min(), arr[:, 1].max(),
                buffer=3.0)
    k = k or (max(marks) if marks else 1)
    return PointPattern(np.array(xs) if xs else np.zeros((0, 2)), marks, k, window), truth
