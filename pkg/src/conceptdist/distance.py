"""Distance kernels, condensed pairwise matrices, and neighbor queries.

All five measures map a pair of concept vectors to [0, 1]. The pairwise
builder stores only the strict upper triangle (n(n-1)/2 entries) and is
bit-identical to a brute-force double loop of kernel calls regardless of
worker count: every pair is computed independently by the same code path
and written to its own slot.
"""

from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .transform import ConceptMatrix, Stage

MAGIC = b"CDM1"


class DistanceError(ValueError):
    """Raised for undefined distances (zero vectors) and misuse."""


class Measure(Enum):
    COSINE = 0
    EUCLIDEAN = 1
    MANHATTAN = 2
    JACCARD = 3
    JENSEN_SHANNON = 4

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")

    @classmethod
    def from_label(cls, label: str) -> "Measure":
        for m in cls:
            if m.label == label.lower():
                return m
        raise ValueError(f"unknown measure {label!r}")


def _pair(c1, c2) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(c1, dtype=np.float64)
    b = np.asarray(c2, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("concept vectors must be one-dimensional")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] == 0:
        raise ValueError("empty concept vectors")
    return a, b


def _cosine_core(a, b, norm_a, norm_b) -> float:
    if np.array_equal(a, b):
        return 0.0
    value = 0.5 * (1.0 - float(np.dot(a, b)) / (norm_a * norm_b))
    # Last-ulp rounding of the norms can push near-parallel vectors a hair
    # outside [0, 1].
    return min(max(value, 0.0), 1.0)


def _euclidean_core(a, b, sqrt_n) -> float:
    d = a - b
    return float(np.sqrt(np.dot(d, d))) / sqrt_n


def _manhattan_core(a, b, n) -> float:
    return float(np.sum(np.abs(a - b))) / n


def _jaccard_core(a, b) -> float:
    max_sum = float(np.sum(np.maximum(a, b)))
    if max_sum == 0.0:
        return 0.0
    min_sum = float(np.sum(np.minimum(a, b)))
    return 1.0 - min_sum / max_sum


def _jsd_core(p, q) -> float:
    m = 0.5 * (p + q)
    pm = p > 0.0
    qm = q > 0.0
    kl_p = float(np.sum(p[pm] * np.log2(p[pm] / m[pm])))
    kl_q = float(np.sum(q[qm] * np.log2(q[qm] / m[qm])))
    jsd = 0.5 * (kl_p + kl_q)
    return math.sqrt(jsd) if jsd > 0.0 else 0.0


def cosine_distance(c1, c2) -> float:
    """Half of (1 - cosine similarity); in [0, 0.5] for non-negative vectors."""
    a, b = _pair(c1, c2)
    norm_a = float(np.sqrt(np.dot(a, a)))
    norm_b = float(np.sqrt(np.dot(b, b)))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DistanceError("cosine distance undefined for a zero vector")
    return _cosine_core(a, b, norm_a, norm_b)


def euclidean_distance(c1, c2) -> float:
    """Euclidean norm of the difference, divided by sqrt(len)."""
    a, b = _pair(c1, c2)
    return _euclidean_core(a, b, math.sqrt(a.shape[0]))


def manhattan_distance(c1, c2) -> float:
    """Mean absolute coordinate difference."""
    a, b = _pair(c1, c2)
    return _manhattan_core(a, b, a.shape[0])


def jaccard_distance(c1, c2) -> float:
    """Generalized Jaccard: 1 - sum(min)/sum(max); two zero vectors give 0."""
    a, b = _pair(c1, c2)
    return _jaccard_core(a, b)


def jensen_shannon_distance(c1, c2) -> float:
    """Square root of the base-2 Jensen-Shannon divergence of the rescaled vectors."""
    a, b = _pair(c1, c2)
    if (a < 0.0).any() or (b < 0.0).any():
        raise DistanceError("Jensen-Shannon requires non-negative vectors")
    sum_a = float(np.sum(a))
    sum_b = float(np.sum(b))
    if sum_a <= 0.0 or sum_b <= 0.0:
        raise DistanceError("Jensen-Shannon undefined for a zero-sum vector")
    return _jsd_core(a / sum_a, b / sum_b)


KERNELS = {
    Measure.COSINE: cosine_distance,
    Measure.EUCLIDEAN: euclidean_distance,
    Measure.MANHATTAN: manhattan_distance,
    Measure.JACCARD: jaccard_distance,
    Measure.JENSEN_SHANNON: jensen_shannon_distance,
}


def condensed_index(n: int, i: int, j: int) -> int:
    """Index of pair (i, j), i < j, in the strict upper-triangle layout."""
    if not 0 <= i < j < n:
        raise ValueError(f"need 0 <= i < j < n, got i={i} j={j} n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


@dataclass(frozen=True)
class DistanceMatrix:
    """Condensed pairwise distances over a fixed game order."""

    measure: Measure
    game_ids: tuple[int, ...]
    game_names: tuple[str, ...]
    data: np.ndarray  # length n(n-1)/2, upper triangle row-major

    def __post_init__(self):
        n = len(self.game_ids)
        if len(self.game_names) != n:
            raise ValueError("game_ids and game_names lengths differ")
        if self.data.shape != (n * (n - 1) // 2,):
            raise ValueError(
                f"condensed data length {self.data.shape} does not match n={n}"
            )

    @property
    def n(self) -> int:
        return len(self.game_ids)

    def _positions(self) -> dict[int, int]:
        return {gid: pos for pos, gid in enumerate(self.game_ids)}


@dataclass(frozen=True)
class NeighborList:
    query_id: int
    entries: tuple[tuple[int, float], ...]  # (game_id, distance), ascending


def pairwise_matrix(m: ConceptMatrix, measure: Measure, threads: int = 1) -> DistanceMatrix:
    """Compute all unique pair distances of a normalized (or weighted) matrix.

    Under cosine and Jensen-Shannon an all-zero game row is an error naming
    the game rather than a silently imputed value. Output is independent of
    ``threads``: pairs are computed one kernel call at a time into disjoint
    slots of the condensed array.
    """
    if m.stage not in (Stage.NORMALIZED, Stage.WEIGHTED):
        raise ValueError(f"pairwise_matrix requires stage >= Normalized, got {m.stage.value}")
    n = m.num_games
    if n < 2:
        raise ValueError("need at least two games")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    values = np.ascontiguousarray(m.values, dtype=np.float64)
    rows = [values[i] for i in range(n)]

    if measure is Measure.COSINE:
        norms = [float(np.sqrt(np.dot(r, r))) for r in rows]
        for i, nrm in enumerate(norms):
            if nrm == 0.0:
                raise DistanceError(
                    f"cosine distance undefined: game {m.games[i].name!r} has a zero vector"
                )

        def compute(i: int, j: int) -> float:
            return _cosine_core(rows[i], rows[j], norms[i], norms[j])

    elif measure is Measure.EUCLIDEAN:
        sqrt_n = math.sqrt(m.num_concepts)

        def compute(i: int, j: int) -> float:
            return _euclidean_core(rows[i], rows[j], sqrt_n)

    elif measure is Measure.MANHATTAN:
        num_concepts = m.num_concepts

        def compute(i: int, j: int) -> float:
            return _manhattan_core(rows[i], rows[j], num_concepts)

    elif measure is Measure.JACCARD:

        def compute(i: int, j: int) -> float:
            return _jaccard_core(rows[i], rows[j])

    else:
        sums = [float(np.sum(r)) for r in rows]
        for i, s in enumerate(sums):
            if s <= 0.0:
                raise DistanceError(
                    f"Jensen-Shannon undefined: game {m.games[i].name!r} has a zero-sum vector"
                )
        probs = [rows[i] / sums[i] for i in range(n)]

        def compute(i: int, j: int) -> float:
            return _jsd_core(probs[i], probs[j])

    out = np.empty(n * (n - 1) // 2)

    def fill_rows(row_indices):
        for i in row_indices:
            base = i * n - i * (i + 1) // 2 - (i + 1)
            for j in range(i + 1, n):
                out[base + j] = compute(i, j)

    if threads == 1:
        fill_rows(range(n - 1))
    else:
        chunks = [range(t, n - 1, threads) for t in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for future in [pool.submit(fill_rows, c) for c in chunks]:
                future.result()

    out.flags.writeable = False
    return DistanceMatrix(
        measure=measure,
        game_ids=tuple(g.game_id for g in m.games),
        game_names=tuple(g.name for g in m.games),
        data=out,
    )


def pair_lookup(dm: DistanceMatrix, a: int, b: int) -> float:
    """Distance between games ``a`` and ``b`` by id; 0 for a == b."""
    positions = dm._positions()
    for gid in (a, b):
        if gid not in positions:
            raise KeyError(f"unknown game id: {gid}")
    if a == b:
        return 0.0
    i, j = sorted((positions[a], positions[b]))
    return float(dm.data[condensed_index(dm.n, i, j)])


def knn(dm: DistanceMatrix, query: int, k: int) -> NeighborList:
    """The k games nearest to ``query``, ascending, ties broken by name."""
    positions = dm._positions()
    if query not in positions:
        raise KeyError(f"unknown game id: {query}")
    if not 0 <= k <= dm.n - 1:
        raise ValueError(f"k must be in [0, {dm.n - 1}], got {k}")
    qpos = positions[query]
    candidates = []
    for pos, gid in enumerate(dm.game_ids):
        if pos == qpos:
            continue
        i, j = (pos, qpos) if pos < qpos else (qpos, pos)
        d = float(dm.data[condensed_index(dm.n, i, j)])
        candidates.append((d, dm.game_names[pos], gid))
    candidates.sort()
    return NeighborList(query, tuple((gid, d) for d, _, gid in candidates[:k]))


def write_distance_matrix(dm: DistanceMatrix, path) -> None:
    """Write the little-endian binary condensed-matrix format."""
    for gid in dm.game_ids:
        if not 0 <= gid < 2**32:
            raise ValueError(f"game id {gid} does not fit in u32")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", dm.n))
        fh.write(struct.pack("<B", dm.measure.value))
        fh.write(np.asarray(dm.game_ids, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(dm.data, dtype="<f8").tobytes())


def read_distance_matrix(path, names: Mapping[int, str] | None = None) -> DistanceMatrix:
    """Read the binary format back.

    The file stores game ids only; pass ``names`` (id -> name) to re-attach
    game names, otherwise ids rendered as text stand in for them.
    """
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise DistanceError(f"{path}: not a distance matrix file")
    if len(blob) < 9:
        raise DistanceError(f"{path}: truncated header")
    n = struct.unpack_from("<I", blob, 4)[0]
    tag = blob[8]
    try:
        measure = Measure(tag)
    except ValueError:
        raise DistanceError(f"{path}: unknown measure tag {tag}") from None
    ids_end = 9 + 4 * n
    expected = ids_end + 8 * (n * (n - 1) // 2)
    if len(blob) != expected:
        raise DistanceError(f"{path}: expected {expected} bytes, found {len(blob)}")
    game_ids = tuple(int(x) for x in np.frombuffer(blob, dtype="<u4", count=n, offset=9))
    data = np.frombuffer(blob, dtype="<f8", offset=ids_end).copy()
    data.flags.writeable = False
    if names is None:
        game_names = tuple(str(gid) for gid in game_ids)
    else:
        game_names = tuple(names[gid] for gid in game_ids)
    return DistanceMatrix(measure=measure, game_ids=game_ids, game_names=game_names, data=data)


def _quote(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def export_distances_csv(dm: DistanceMatrix, path) -> None:
    """Write `game_a,game_b,distance` rows, names quoted, 6-decimal distances."""
    n = dm.n
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("game_a,game_b,distance\n")
        idx = 0
        for i in range(n - 1):
            for j in range(i + 1, n):
                fh.write(
                    f"{_quote(dm.game_names[i])},{_quote(dm.game_names[j])},"
                    f"{dm.data[idx]:.6f}\n"
                )
                idx += 1
