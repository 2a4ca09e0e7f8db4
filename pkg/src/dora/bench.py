"""Complexity levels, benchmark manifests and per-level metric reports."""

from __future__ import annotations

import enum
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .mesh import MeshError, load_mesh
from .sampling import DEFAULT_TAU, detect_salient_edges

log = logging.getLogger(__name__)

LEVEL_BOUNDS = (5000, 10000, 50000)


class ComplexityLevel(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    L4 = "L4"
    UNCLASSIFIED = "Unclassified"


LEVELS = (ComplexityLevel.L1, ComplexityLevel.L2, ComplexityLevel.L3, ComplexityLevel.L4)


def classify_complexity(n_gamma: int) -> ComplexityLevel:
    """Map a salient edge count to its level; upper bounds are inclusive."""
    if n_gamma < 0:
        raise ValueError("salient edge count must be nonnegative")
    if n_gamma == 0:
        return ComplexityLevel.UNCLASSIFIED
    for bound, level in zip(LEVEL_BOUNDS, LEVELS):
        if n_gamma <= bound:
            return level
    return ComplexityLevel.L4


@dataclass(frozen=True)
class ManifestEntry:
    mesh_id: str
    path: str
    n_gamma: int
    level: ComplexityLevel


@dataclass
class BenchManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    tau: float = DEFAULT_TAU
    dataset: str = ""
    rejects: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.mesh_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("manifest mesh ids must be unique")

    def get(self, mesh_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.mesh_id == mesh_id:
                return e
        raise KeyError(mesh_id)

    def level_counts(self) -> dict[str, int]:
        counts = {lvl.value: 0 for lvl in ComplexityLevel}
        for e in self.entries:
            counts[e.level.value] += 1
        return counts

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "tau": self.tau,
            "entries": [
                {"id": e.mesh_id, "path": e.path, "n_gamma": e.n_gamma, "level": e.level.value}
                for e in self.entries
            ],
            "level_counts": self.level_counts(),
            "rejects": list(self.rejects),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchManifest":
        entries = [
            ManifestEntry(e["id"], e["path"], int(e["n_gamma"]), ComplexityLevel(e["level"]))
            for e in data.get("entries", [])
        ]
        return cls(
            entries,
            float(data.get("tau", DEFAULT_TAU)),
            data.get("dataset", ""),
            list(data.get("rejects", [])),
            list(data.get("warnings", [])),
        )


def mesh_id_for(path: str | Path) -> str:
    return Path(path).stem


def count_salient(path: str | Path, tau: float) -> int:
    return detect_salient_edges(load_mesh(path), tau).count


def build_manifest(
    mesh_paths, tau: float = DEFAULT_TAU, dataset: str = "", jobs: int = 1
) -> BenchManifest:
    """Count salient edges of every mesh and assign its level.

    Unreadable meshes go to ``rejects``; repeated paths are kept once with a
    warning. Entry order follows ``mesh_paths``.
    """
    seen: set[str] = set()
    unique: list[tuple[str, str]] = []
    warnings: list[str] = []
    ids: set[str] = set()
    for p in mesh_paths:
        key = str(Path(p).resolve())
        if key in seen:
            warnings.append(f"duplicate path skipped: {p}")
            continue
        seen.add(key)
        mid = mesh_id_for(p)
        base, k = mid, 1
        while mid in ids:
            k += 1
            mid = f"{base}-{k}"
        ids.add(mid)
        unique.append((mid, str(p)))

    def work(item):
        mid, p = item
        try:
            return mid, p, count_salient(p, tau), None
        except (MeshError, OSError, ValueError) as exc:
            return mid, p, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(work, unique))
    entries, rejects = [], []
    for mid, p, n_gamma, err in results:
        if err is not None:
            log.warning("rejecting %s: %s", p, err)
            rejects.append({"id": mid, "path": p, "reason": err})
        else:
            entries.append(ManifestEntry(mid, p, n_gamma, classify_complexity(n_gamma)))
    return BenchManifest(entries, float(tau), dataset, rejects, warnings)


# ------------------------------------------------------------------ reports

# column key -> (raw metric key, display scale, header)
COLUMNS = {
    "fscore_0.01": ("fscore_0.01", 100.0, "F-score(0.01)x100"),
    "fscore_0.005": ("fscore_0.005", 100.0, "F-score(0.005)x100"),
    "cd": ("cd", 1e4, "CDx10000"),
    "sne": ("sne", 100.0, "SNEx100"),
}


@dataclass
class BenchReport:
    levels: dict[str, dict[str, float | None]]
    counts: dict[str, int]
    rows: list[dict]
    failed: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def render_text(self) -> str:
        """Aligned table: one row per metric, one column per level L1..L4."""
        names = [lvl.value for lvl in LEVELS]
        head = ["metric"] + [f"{n} (n={self.counts.get(n, 0)})" for n in names]
        body = []
        for key, (_, _, header) in COLUMNS.items():
            cells = [header]
            for n in names:
                v = self.levels.get(n, {}).get(key)
                cells.append("-" if v is None else f"{v:.3f}")
            body.append(cells)
        widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
        fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
        lines = [fmt(head), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body]
        return "\n".join(lines) + "\n"


def aggregate_report(manifest: BenchManifest, rows: list[dict]) -> BenchReport:
    """Per-level means of scaled metrics.

    ``rows`` are dicts with ``id`` and raw metric values under the keys of
    ``COLUMNS``; a row with ``failed`` set is reported but not aggregated.
    Unclassified meshes are left out of the level columns.
    """
    known = {e.mesh_id: e for e in manifest.entries}
    per_level: dict[str, list[dict]] = {lvl.value: [] for lvl in LEVELS}
    kept, failed = [], []
    for row in rows:
        if row["id"] not in known:
            raise KeyError(f"metric row references unknown mesh id {row['id']!r}")
        if row.get("failed"):
            failed.append(row)
            continue
        level = known[row["id"]].level
        scaled = {"id": row["id"], "level": level.value}
        for key, (raw, scale, _) in COLUMNS.items():
            if row.get(raw) is not None:
                scaled[key] = float(row[raw]) * scale
        kept.append(scaled)
        if level in LEVELS:
            per_level[level.value].append(scaled)
    levels: dict[str, dict[str, float | None]] = {}
    counts = {}
    for name, items in per_level.items():
        counts[name] = len(items)
        levels[name] = {}
        for key in COLUMNS:
            vals = [r[key] for r in items if key in r]
            # fsum is exact, so the mean does not depend on row order
            levels[name][key] = math.fsum(vals) / len(vals) if vals else None
    return BenchReport(levels, counts, kept, failed)
