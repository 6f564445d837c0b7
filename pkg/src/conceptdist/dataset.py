"""Loading, validation, and persistence of the games/concepts/values dataset.

The on-disk layout mirrors the public Ludii concept export: three CSV files
(games, concept metadata, long-format values) or alternatively a single wide
matrix CSV plus the concept metadata file. Loaded datasets are immutable;
the value matrix is a read-only float64 array of shape (games, concepts).
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

GAMES_HEADER = ["game_id", "name"]
CONCEPTS_HEADER = ["concept_id", "name", "category", "value_kind", "computation_kind"]
VALUES_HEADER = ["game_id", "concept_id", "value"]


class DatasetError(ValueError):
    """Raised when dataset files are missing, malformed, or inconsistent."""


class Category(Enum):
    PROPERTIES = "Properties"
    EQUIPMENT = "Equipment"
    RULES = "Rules"
    MATH = "Math"
    VISUAL = "Visual"
    IMPLEMENTATION = "Implementation"


class ValueKind(Enum):
    BINARY = "Binary"
    DISCRETE = "Discrete"
    CONTINUOUS = "Continuous"


class ComputationKind(Enum):
    COMPILATION = "Compilation"
    PLAYOUT = "Playout"


@dataclass(frozen=True)
class GameRecord:
    game_id: int
    name: str


@dataclass(frozen=True)
class ConceptMeta:
    concept_id: int
    name: str
    category: Category
    value_kind: ValueKind
    computation_kind: ComputationKind


@dataclass(frozen=True)
class RawDataset:
    """Games, concept metadata, and the dense games x concepts value matrix."""

    games: tuple[GameRecord, ...]
    concepts: tuple[ConceptMeta, ...]
    values: np.ndarray  # float64, shape (len(games), len(concepts)), read-only

    @property
    def num_games(self) -> int:
        return len(self.games)

    @property
    def num_concepts(self) -> int:
        return len(self.concepts)

    def game_index(self) -> dict[int, int]:
        return {g.game_id: i for i, g in enumerate(self.games)}

    def concept_index(self) -> dict[int, int]:
        return {c.concept_id: j for j, c in enumerate(self.concepts)}

    def game_by_name(self, name: str) -> GameRecord:
        for g in self.games:
            if g.name == name:
                return g
        raise KeyError(f"unknown game name: {name!r}")


@dataclass
class ValidationReport:
    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)
    category_counts: Counter = field(default_factory=Counter)
    value_kind_counts: Counter = field(default_factory=Counter)

    @property
    def ok(self) -> bool:
        return not self.errors


def _freeze(games, concepts, values) -> RawDataset:
    values = np.ascontiguousarray(values, dtype=np.float64)
    values.flags.writeable = False
    return RawDataset(games=tuple(games), concepts=tuple(concepts), values=values)


def _read_rows(path: Path, expected_header: list[str]) -> list[list[str]]:
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if header != expected_header:
            raise DatasetError(
                f"{path}: bad header {header!r}, expected {expected_header!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DatasetError(f"{path}:{lineno}: malformed row {row!r}")
            rows.append(row)
    return rows


def _parse_int(text: str, where: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise DatasetError(f"{where}: not an integer: {text!r}") from None
    if value < 0:
        raise DatasetError(f"{where}: negative id: {value}")
    return value


def _parse_enum(enum_cls, text: str, where: str):
    try:
        return enum_cls(text)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise DatasetError(f"{where}: {text!r} is not one of {allowed}") from None


def _parse_games(path: Path) -> list[GameRecord]:
    games = []
    seen_ids: set[int] = set()
    seen_names: set[str] = set()
    for row in _read_rows(path, GAMES_HEADER):
        gid = _parse_int(row[0], f"{path} game_id")
        name = row[1]
        if not name:
            raise DatasetError(f"{path}: game {gid} has an empty name")
        if gid in seen_ids:
            raise DatasetError(f"{path}: duplicate game id {gid}")
        if name in seen_names:
            raise DatasetError(f"{path}: duplicate game name {name!r}")
        seen_ids.add(gid)
        seen_names.add(name)
        games.append(GameRecord(gid, name))
    if not games:
        raise DatasetError(f"{path}: no games")
    return games


def _parse_concepts(path: Path) -> list[ConceptMeta]:
    concepts = []
    seen_ids: set[int] = set()
    seen_names: set[str] = set()
    for row in _read_rows(path, CONCEPTS_HEADER):
        cid = _parse_int(row[0], f"{path} concept_id")
        name = row[1]
        if not name:
            raise DatasetError(f"{path}: concept {cid} has an empty name")
        if cid in seen_ids:
            raise DatasetError(f"{path}: duplicate concept id {cid}")
        if name in seen_names:
            raise DatasetError(f"{path}: duplicate concept name {name!r}")
        seen_ids.add(cid)
        seen_names.add(name)
        concepts.append(
            ConceptMeta(
                concept_id=cid,
                name=name,
                category=_parse_enum(Category, row[2], f"{path} concept {cid}"),
                value_kind=_parse_enum(ValueKind, row[3], f"{path} concept {cid}"),
                computation_kind=_parse_enum(
                    ComputationKind, row[4], f"{path} concept {cid}"
                ),
            )
        )
    if not concepts:
        raise DatasetError(f"{path}: no concepts")
    return concepts


def load_dataset(games_path, concepts_path, values_path) -> RawDataset:
    """Load the long-format trio of CSV files into a RawDataset.

    The values file must hold exactly one finite value per (game, concept)
    pair; missing or duplicated cells and references to unknown ids are hard
    errors rather than being imputed.
    """
    games_path, concepts_path, values_path = (
        Path(games_path),
        Path(concepts_path),
        Path(values_path),
    )
    games = _parse_games(games_path)
    concepts = _parse_concepts(concepts_path)
    gix = {g.game_id: i for i, g in enumerate(games)}
    cix = {c.concept_id: j for j, c in enumerate(concepts)}

    values = np.full((len(games), len(concepts)), np.nan)
    filled = np.zeros(values.shape, dtype=bool)
    for row in _read_rows(values_path, VALUES_HEADER):
        gid = _parse_int(row[0], f"{values_path} game_id")
        cid = _parse_int(row[1], f"{values_path} concept_id")
        if gid not in gix:
            raise DatasetError(f"{values_path}: unknown game id {gid}")
        if cid not in cix:
            raise DatasetError(f"{values_path}: unknown concept id {cid}")
        try:
            value = float(row[2])
        except ValueError:
            raise DatasetError(
                f"{values_path}: non-numeric value {row[2]!r} for ({gid}, {cid})"
            ) from None
        if not math.isfinite(value):
            raise DatasetError(
                f"{values_path}: non-finite value {row[2]!r} for ({gid}, {cid})"
            )
        i, j = gix[gid], cix[cid]
        if filled[i, j]:
            raise DatasetError(
                f"{values_path}: duplicate value for game {gid}, concept {cid}"
            )
        filled[i, j] = True
        values[i, j] = value
    if not filled.all():
        i, j = np.argwhere(~filled)[0]
        raise DatasetError(
            f"{values_path}: missing value for game {games[i].game_id}, "
            f"concept {concepts[j].concept_id}"
        )
    return _freeze(games, concepts, values)


def load_wide_matrix(path, meta_path) -> RawDataset:
    """Load a wide matrix CSV (name column plus one column per concept).

    Concept metadata comes from ``meta_path`` (concepts.csv format) and fixes
    the concept order; the wide header may list the same concepts in any
    order. The wide format carries no game ids, so games are assigned
    sequential ids starting at 1 in row order.
    """
    path, meta_path = Path(path), Path(meta_path)
    concepts = _parse_concepts(meta_path)
    by_name = {c.name: j for j, c in enumerate(concepts)}

    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if not header or header[0] != "name":
            raise DatasetError(f"{path}: first header column must be 'name'")
        col_names = header[1:]
        dupes = [n for n, k in Counter(col_names).items() if k > 1]
        if dupes:
            raise DatasetError(f"{path}: duplicate concept columns {dupes!r}")
        unknown = [n for n in col_names if n not in by_name]
        if unknown:
            raise DatasetError(f"{path}: concepts absent from metadata: {unknown!r}")
        if len(col_names) != len(concepts):
            missing = sorted(set(by_name) - set(col_names))
            raise DatasetError(f"{path}: header missing concepts {missing!r}")
        col_to_concept = [by_name[n] for n in col_names]

        games: list[GameRecord] = []
        seen_names: set[str] = set()
        rows: list[np.ndarray] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: malformed row")
            name = row[0]
            if not name:
                raise DatasetError(f"{path}:{lineno}: empty game name")
            if name in seen_names:
                raise DatasetError(f"{path}:{lineno}: duplicate game name {name!r}")
            seen_names.add(name)
            parsed = np.empty(len(concepts))
            for col, cell in enumerate(row[1:]):
                try:
                    value = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: non-numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DatasetError(f"{path}:{lineno}: non-finite cell {cell!r}")
                parsed[col_to_concept[col]] = value
            games.append(GameRecord(len(games) + 1, name))
            rows.append(parsed)
    if not rows:
        raise DatasetError(f"{path}: no games")
    return _freeze(games, concepts, np.vstack(rows))


def validate_dataset(d: RawDataset) -> ValidationReport:
    """Check every dataset invariant, reporting violations as data.

    Errors: duplicate ids/names, empty names, non-finite cells, binary
    concepts holding values other than 0/1. Constant concept columns are
    flagged as warnings since they carry no signal downstream.
    """
    report = ValidationReport()

    for label, items in (("game", d.games), ("concept", d.concepts)):
        ids = Counter(x.game_id if label == "game" else x.concept_id for x in items)
        names = Counter(x.name for x in items)
        for i, k in ids.items():
            if k > 1:
                report.errors.append((f"{label} {i}", f"duplicate {label} id"))
        for n, k in names.items():
            if k > 1:
                report.errors.append((f"{label} {n!r}", f"duplicate {label} name"))
        for x in items:
            if not x.name:
                report.errors.append((f"{label}s", "empty name"))

    if d.values.shape != (d.num_games, d.num_concepts):
        report.errors.append(
            ("values", f"matrix shape {d.values.shape} does not match "
             f"({d.num_games}, {d.num_concepts})")
        )
        return report

    bad = ~np.isfinite(d.values)
    for i, j in np.argwhere(bad):
        report.errors.append(
            (f"({d.games[i].name}, {d.concepts[j].name})", "non-finite value")
        )

    for j, concept in enumerate(d.concepts):
        col = d.values[:, j]
        if concept.value_kind is ValueKind.BINARY:
            nonbinary = np.isfinite(col) & (col != 0.0) & (col != 1.0)
            for i in np.argwhere(nonbinary).ravel():
                report.errors.append(
                    (
                        f"({d.games[i].name}, {concept.name})",
                        f"binary concept holds {col[i]!r}",
                    )
                )
        finite = col[np.isfinite(col)]
        if finite.size and finite.min() == finite.max():
            report.warnings.append(
                (concept.name, f"constant column (all {finite[0]!r})")
            )

    report.category_counts = Counter(c.category.value for c in d.concepts)
    report.value_kind_counts = Counter(c.value_kind.value for c in d.concepts)
    return report


def save_dataset(d: RawDataset, games_path, concepts_path, values_path) -> None:
    """Write the long-format trio of CSVs; values round-trip bit-faithfully."""
    with open(games_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(GAMES_HEADER)
        for g in d.games:
            writer.writerow([g.game_id, g.name])
    with open(concepts_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CONCEPTS_HEADER)
        for c in d.concepts:
            writer.writerow(
                [c.concept_id, c.name, c.category.value, c.value_kind.value,
                 c.computation_kind.value]
            )
    with open(values_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(VALUES_HEADER)
        for i, g in enumerate(d.games):
            for j, c in enumerate(d.concepts):
                writer.writerow([g.game_id, c.concept_id, repr(d.values[i, j])])


def save_wide_matrix(names, concepts, values: np.ndarray, path) -> None:
    """Write a wide matrix CSV (used for normalized-matrix output)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name"] + [c.name for c in concepts])
        for name, row in zip(names, values):
            writer.writerow([name] + [repr(v) for v in row])
