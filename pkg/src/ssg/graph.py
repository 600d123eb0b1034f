"""Fixed-width padded adjacency storage shared by the KNN, SSG and NSSG graphs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .kernels import reach_mark

PAD = -1


@dataclass
class AdjacencyGraph:
    """``n x cap`` table of out-neighbor ids padded with -1, plus per-row degrees.

    ``dists`` optionally holds the squared edge lengths slot for slot. Builders
    keep rows sorted by (length, id).
    """

    ids: np.ndarray
    degree: np.ndarray
    dists: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    @property
    def cap(self) -> int:
        return self.ids.shape[1]

    @classmethod
    def empty(cls, n: int, cap: int, with_dists: bool = True) -> "AdjacencyGraph":
        dists = np.full((n, cap), np.inf) if with_dists else None
        return cls(np.full((n, cap), PAD, dtype=np.int32), np.zeros(n, dtype=np.int32), dists)

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[Sequence[int]],
        dists: Sequence[Sequence[float]] | None = None,
        cap: int | None = None,
    ) -> "AdjacencyGraph":
        n = len(rows)
        widest = max((len(r) for r in rows), default=0)
        cap = widest if cap is None else cap
        if widest > cap:
            raise ValidationError(f"row of degree {widest} exceeds cap {cap}")
        g = cls.empty(n, cap, with_dists=dists is not None)
        for i, row in enumerate(rows):
            g.ids[i, : len(row)] = row
            g.degree[i] = len(row)
            if dists is not None:
                g.dists[i, : len(row)] = dists[i]
        return g

    def neighbors(self, i: int) -> np.ndarray:
        return self.ids[i, : self.degree[i]]

    def rows(self) -> list[np.ndarray]:
        return [self.neighbors(i).copy() for i in range(self.n)]

    def copy(self) -> "AdjacencyGraph":
        return AdjacencyGraph(
            self.ids.copy(), self.degree.copy(), None if self.dists is None else self.dists.copy()
        )

    @property
    def num_edges(self) -> int:
        return int(self.degree.sum())

    @property
    def mean_degree(self) -> float:
        return float(self.degree.mean())

    @property
    def max_degree(self) -> int:
        return int(self.degree.max()) if self.n else 0

    def edge_keys(self) -> np.ndarray:
        """Sorted directed edges encoded as ``src * n + dst``."""
        mask = np.arange(self.cap)[None, :] < self.degree[:, None]
        src = np.broadcast_to(np.arange(self.n, dtype=np.int64)[:, None], self.ids.shape)[mask]
        return np.sort(src * self.n + self.ids[mask].astype(np.int64))

    def reachable(self, root: int) -> np.ndarray:
        reached = np.zeros(self.n, dtype=np.bool_)
        reach_mark(self.ids, self.degree, root, reached)
        return reached

    def same_structure(self, other: "AdjacencyGraph") -> bool:
        if self.n != other.n:
            return False
        return all(np.array_equal(self.neighbors(i), other.neighbors(i)) for i in range(self.n))

    def validate(self) -> None:
        """Raise ValidationError on out-of-range ids, self-loops or duplicate ids."""
        if (self.degree < 0).any() or (self.degree > self.cap).any():
            raise ValidationError("row degree outside [0, cap]")
        for i in range(self.n):
            row = self.neighbors(i)
            if row.size == 0:
                continue
            if row.min() < 0 or row.max() >= self.n:
                raise ValidationError(f"row {i} holds an id outside [0, {self.n})")
            if (row == i).any():
                raise ValidationError(f"row {i} has a self-loop")
            if np.unique(row).size != row.size:
                raise ValidationError(f"row {i} has duplicate ids")


def complete_graph(n: int) -> AdjacencyGraph:
    return AdjacencyGraph.from_rows([[j for j in range(n) if j != i] for i in range(n)])
