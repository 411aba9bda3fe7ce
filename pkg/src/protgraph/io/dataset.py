"""Dataset index CSV: ``id,pdb,mesh,mol,target,split``."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DuplicateId, MissingColumn

COLUMNS = ("id", "pdb", "mesh", "mol", "target", "split")
SPLITS = ("train", "val", "test", "none")


@dataclass
class Record:
    complex_id: str
    pdb: Path
    mesh: Path | None
    mol: Path | None
    target: float
    split: str


@dataclass
class DatasetIndex:
    records: list[Record] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def by_split(self, split: str) -> list[Record]:
        return [r for r in self.records if r.split == split]


def load_dataset_index(path: str | Path, check_paths: bool = True) -> DatasetIndex:
    """Load an index; rows with missing files or bad values go to ``rejected``.

    Relative paths resolve against the CSV's directory. Empty ``mesh``/``mol``
    cells mean "not available". Duplicate ids abort the load.
    """
    path = Path(path)
    base = path.parent
    index = DatasetIndex()
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise MissingColumn(f"index {path} lacks columns {missing}")
        for lineno, row in enumerate(reader, 2):
            cid = (row["id"] or "").strip()
            if cid in seen:
                raise DuplicateId(f"duplicate id {cid!r} on line {lineno}")
            seen.add(cid)
            problems = []
            if not cid:
                problems.append("empty id")
            paths = {}
            for col in ("pdb", "mesh", "mol"):
                cell = (row[col] or "").strip()
                if not cell:
                    paths[col] = None
                    if col == "pdb":
                        problems.append("missing pdb path")
                    continue
                p = Path(cell)
                p = p if p.is_absolute() else base / p
                if check_paths and not p.exists():
                    problems.append(f"{col} file not found: {p}")
                paths[col] = p
            try:
                target = float(row["target"])
            except (TypeError, ValueError):
                problems.append(f"bad target {row['target']!r}")
                target = float("nan")
            split = (row["split"] or "none").strip().lower() or "none"
            if split not in SPLITS:
                problems.append(f"bad split tag {split!r}")
            if problems:
                index.rejected.append({"line": lineno, "id": cid, "reasons": problems})
                continue
            index.records.append(Record(cid, paths["pdb"], paths["mesh"], paths["mol"], target, split))
    return index
