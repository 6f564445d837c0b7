"""Normalization pipeline and concept weighting pre-processors.

Raw concept values are squashed with an odd, sign-preserving base-2 log
transform and then min-max scaled per concept column, giving values in
[0, 1] with binary concepts untouched. Weighting schemes (IDF over binary
concepts, equal collective weight per category, category exclusion) rescale
or drop columns ahead of the distance kernels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import (
    Category,
    ConceptMeta,
    DatasetError,
    GameRecord,
    RawDataset,
    ValueKind,
)


class Stage(Enum):
    RAW = "Raw"
    LOG_TRANSFORMED = "LogTransformed"
    NORMALIZED = "Normalized"
    WEIGHTED = "Weighted"


class WeightScheme(Enum):
    NONE = "None"
    IDF = "IDF"
    CATEGORY_EQUAL = "CategoryEqual"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class ConceptMatrix:
    """A games x concepts value matrix tagged with its pipeline stage."""

    games: tuple[GameRecord, ...]
    concepts: tuple[ConceptMeta, ...]
    values: np.ndarray
    stage: Stage

    @property
    def num_games(self) -> int:
        return len(self.games)

    @property
    def num_concepts(self) -> int:
        return len(self.concepts)


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray  # non-negative, one per concept
    scheme: WeightScheme


@dataclass(frozen=True)
class NormalizationParams:
    """Per-concept (min, max) of the log-transformed column.

    Persisting these lets new games be projected into an existing normalized
    space without re-fitting; projected values are clamped to [0, 1].
    """

    concept_ids: tuple[int, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def save(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["concept_id", "min", "max"])
            for cid, lo, hi in zip(self.concept_ids, self.mins, self.maxs):
                writer.writerow([cid, format(lo, ".17g"), format(hi, ".17g")])

    @classmethod
    def load(cls, path) -> "NormalizationParams":
        path = Path(path)
        if not path.exists():
            raise DatasetError(f"missing file: {path}")
        ids, mins, maxs = [], [], []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["concept_id", "min", "max"]:
                raise DatasetError(f"{path}: bad header {header!r}")
            for row in reader:
                if not row:
                    continue
                ids.append(int(row[0]))
                mins.append(float(row[1]))
                maxs.append(float(row[2]))
        return cls(tuple(ids), np.array(mins), np.array(maxs))


def bisym_log(x: float) -> float:
    """Bi-symmetric base-2 log squashing: odd, strictly increasing, f(0)=0."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite input: {x!r}")
    return float(np.sign(x) * np.log2(1.0 + abs(x)))


def _bisym_log_array(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.log2(1.0 + np.abs(values))


def normalize(d: RawDataset) -> tuple[ConceptMatrix, NormalizationParams]:
    """Log-transform then min-max scale each concept column across games.

    Columns that are constant after the transform map to all zeros: the
    concept carries no information, and zero keeps it inert under every
    distance measure. Columns already in {0, 1} pass through unchanged.
    """
    if not np.isfinite(d.values).all():
        raise DatasetError("dataset contains non-finite values")
    transformed = _bisym_log_array(d.values)
    mins = transformed.min(axis=0)
    maxs = transformed.max(axis=0)
    span = maxs - mins
    constant = span == 0.0
    safe_span = np.where(constant, 1.0, span)
    scaled = (transformed - mins) / safe_span
    scaled[:, constant] = 0.0
    params = NormalizationParams(
        tuple(c.concept_id for c in d.concepts), mins, maxs
    )
    matrix = ConceptMatrix(d.games, d.concepts, _readonly(scaled), Stage.NORMALIZED)
    return matrix, params


def apply_normalization(params: NormalizationParams, d: RawDataset) -> ConceptMatrix:
    """Project a dataset into an existing normalized space, clamping to [0, 1]."""
    if tuple(c.concept_id for c in d.concepts) != params.concept_ids:
        raise DatasetError("params do not match dataset concepts")
    transformed = _bisym_log_array(d.values)
    span = params.maxs - params.mins
    constant = span == 0.0
    safe_span = np.where(constant, 1.0, span)
    scaled = (transformed - params.mins) / safe_span
    scaled[:, constant] = 0.0
    scaled = np.clip(scaled, 0.0, 1.0)
    return ConceptMatrix(d.games, d.concepts, _readonly(scaled), Stage.NORMALIZED)


def _require_normalized(m: ConceptMatrix, op: str) -> None:
    if m.stage not in (Stage.NORMALIZED, Stage.WEIGHTED):
        raise ValueError(f"{op} requires a normalized matrix, got stage {m.stage.value}")


def idf_weights(m: ConceptMatrix) -> WeightVector:
    """Inverse document frequency weights over binary concepts.

    weight = log2(N / df) for binary concepts, where df counts the games in
    which the concept is present; a concept present nowhere gets weight 0
    (it carries no signal). Non-binary concepts keep weight 1.
    """
    _require_normalized(m, "idf_weights")
    n = m.num_games
    weights = np.ones(m.num_concepts)
    for j, concept in enumerate(m.concepts):
        if concept.value_kind is ValueKind.BINARY:
            df = int(np.count_nonzero(m.values[:, j] == 1.0))
            weights[j] = math.log2(n / df) if df > 0 else 0.0
    return WeightVector(_readonly(weights), WeightScheme.IDF)


def category_equal_weights(m: ConceptMatrix) -> WeightVector:
    """Scale each concept by 1/|category| so every category sums to weight 1."""
    _require_normalized(m, "category_equal_weights")
    sizes: dict[Category, int] = {}
    for concept in m.concepts:
        sizes[concept.category] = sizes.get(concept.category, 0) + 1
    weights = np.array([1.0 / sizes[c.category] for c in m.concepts])
    return WeightVector(_readonly(weights), WeightScheme.CATEGORY_EQUAL)


def exclude_categories(m: ConceptMatrix, excluded: set[Category]) -> ConceptMatrix:
    """Drop all concepts of the excluded categories, preserving column order."""
    _require_normalized(m, "exclude_categories")
    keep = [j for j, c in enumerate(m.concepts) if c.category not in excluded]
    if not keep:
        raise ValueError("excluding these categories would leave no concepts")
    concepts = tuple(m.concepts[j] for j in keep)
    values = _readonly(m.values[:, keep])
    return ConceptMatrix(m.games, concepts, values, m.stage)


def apply_weights(m: ConceptMatrix, w: WeightVector) -> ConceptMatrix:
    """Multiply each concept column by its weight."""
    _require_normalized(m, "apply_weights")
    if len(w.weights) != m.num_concepts:
        raise ValueError(
            f"weight length {len(w.weights)} does not match "
            f"{m.num_concepts} concepts"
        )
    if not np.isfinite(w.weights).all() or (w.weights < 0).any():
        raise ValueError("weights must be finite and non-negative")
    return ConceptMatrix(
        m.games, m.concepts, _readonly(m.values * w.weights), Stage.WEIGHTED
    )


def restrict_weights(w: WeightVector, m: ConceptMatrix, sub: ConceptMatrix) -> WeightVector:
    """Restrict a weight vector computed on ``m`` to the concepts kept in ``sub``."""
    pos = {c.concept_id: j for j, c in enumerate(m.concepts)}
    idx = [pos[c.concept_id] for c in sub.concepts]
    return WeightVector(_readonly(w.weights[idx]), w.scheme)


def matrix_from_normalized_dataset(d: RawDataset) -> ConceptMatrix:
    """Wrap already-normalized values (e.g. a re-loaded pipeline output)."""
    if d.values.size and (d.values.min() < 0.0 or d.values.max() > 1.0):
        raise DatasetError("normalized values must lie in [0, 1]")
    return ConceptMatrix(d.games, d.concepts, d.values, Stage.NORMALIZED)


def _readonly(values: np.ndarray) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    values.flags.writeable = False
    return values
