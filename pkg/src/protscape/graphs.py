"""k-NN graphs over residue centers and one-hot residue signals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory_io import AMINO_ACIDS

N_CHANNELS = len(AMINO_ACIDS)
_CHANNEL_INDEX = {a: i for i, a in enumerate(AMINO_ACIDS)}


def one_hot(sequence: str) -> np.ndarray:
    """(n, 20) one-hot encoding over the fixed amino-acid alphabet."""
    X = np.zeros((len(sequence), N_CHANNELS), dtype=np.float64)
    for i, a in enumerate(sequence):
        try:
            X[i, _CHANNEL_INDEX[a]] = 1.0
        except KeyError:
            raise ValueError(
                f"unknown residue letter {a!r} at position {i}; "
                f"alphabet is {AMINO_ACIDS}"
            ) from None
    return X


def knn_edges(points: np.ndarray, k: int) -> np.ndarray:
    """Symmetrized k-nearest-neighbour adjacency for points in any dimension.

    Each point is linked to its k nearest others (Euclidean distance, ties
    broken toward the lower index) and the directed edge set is symmetrized
    by union. Returns a dense 0/1 (n, n) array with zero diagonal.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of points n={n}")
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    A = np.zeros((n, n), dtype=np.float64)
    idx = np.arange(n)
    for i in range(n):
        # lexsort: primary key distance, secondary key vertex index
        order = np.lexsort((idx, d2[i]))
        A[i, order[:k]] = 1.0
    A = np.maximum(A, A.T)
    return A


def _is_connected(A: np.ndarray) -> bool:
    n = A.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for u in np.nonzero(A[v])[0]:
            if not seen[u]:
                seen[u] = True
                stack.append(int(u))
    return bool(seen.all())


@dataclass
class ProteinGraph:
    """Undirected residue graph with per-node one-hot signals.

    adjacency: (n, n) symmetric 0/1, zero diagonal
    signals:   (n, 20) one-hot rows in fixed channel order
    sequence:  the residue letters, len n
    """

    adjacency: np.ndarray
    signals: np.ndarray
    sequence: str

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=np.float64)
        X = np.asarray(self.signals, dtype=np.float64)
        n = len(self.sequence)
        if A.shape != (n, n):
            raise ValueError(f"adjacency shape {A.shape} does not match n={n}")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0.0):
            raise ValueError("adjacency must have a zero diagonal")
        if not np.all((A == 0.0) | (A == 1.0)):
            raise ValueError("adjacency entries must be 0 or 1")
        if X.shape != (n, N_CHANNELS):
            raise ValueError(f"signals shape {X.shape}, expected ({n}, {N_CHANNELS})")
        if np.any(A.sum(axis=1) == 0.0):
            raise ValueError("graph has an isolated vertex")
        self.adjacency = A
        self.signals = X

    @property
    def n(self) -> int:
        return len(self.sequence)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


def build_knn_graph(coords: np.ndarray, sequence: str, k: int = 5) -> ProteinGraph:
    """Build the residue graph of one conformation.

    Raises if the symmetrized k-NN graph is disconnected; diffusion on a
    disconnected graph has no single stationary component, so the caller
    should raise k instead.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape != (len(sequence), 3):
        raise ValueError(
            f"coords shape {coords.shape} does not match sequence length {len(sequence)}"
        )
    A = knn_edges(coords, k)
    if not _is_connected(A):
        raise ValueError(
            f"k-NN graph with k={k} is disconnected; raise k to connect all residues"
        )
    return ProteinGraph(adjacency=A, signals=one_hot(sequence), sequence=sequence)
