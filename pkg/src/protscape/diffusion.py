"""Diffusion operators on a connected graph and the weighted geometry they live in.

For adjacency A with degree matrix D:

    P = (I + A D^-1) / 2          lazy random walk, column-stochastic
    T = (I + D^-1/2 A D^-1/2) / 2 symmetric conjugate, T = D^-1/2 P D^1/2

T is symmetric positive semidefinite with eigenvalues in [0, 1]; on a
connected graph the top eigenvalue 1 is simple with eigenvector parallel
to D^1/2 1. P is self-adjoint on the weighted inner product
<x, y>_w = x^T D^-1 y, whose norm ||x||_w = ||D^-1/2 x||_2 is the natural
space for all stability statements here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _degrees(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got {A.shape}")
    if not np.allclose(A, A.T):
        raise ValueError("adjacency must be symmetric")
    d = A.sum(axis=1)
    if np.any(d <= 0.0):
        raise ValueError("every vertex needs positive degree")
    return d


def lazy_walk(A: np.ndarray) -> np.ndarray:
    """Lazy random walk P = (I + A D^-1) / 2. Columns sum to 1."""
    d = _degrees(A)
    n = A.shape[0]
    return 0.5 * (np.eye(n) + np.asarray(A, dtype=np.float64) / d[None, :])


def symmetric_diffusion(A: np.ndarray) -> np.ndarray:
    """Symmetric diffusion T = (I + D^-1/2 A D^-1/2) / 2."""
    d = _degrees(A)
    n = A.shape[0]
    s = 1.0 / np.sqrt(d)
    return 0.5 * (np.eye(n) + s[:, None] * np.asarray(A, dtype=np.float64) * s[None, :])


def weighted_norm(x: np.ndarray, degrees: np.ndarray) -> float:
    """||x||_w = ||D^-1/2 x||_2 for a vector or the Frobenius analogue for a matrix."""
    x = np.asarray(x, dtype=np.float64)
    s = 1.0 / np.sqrt(np.asarray(degrees, dtype=np.float64))
    if x.ndim == 1:
        return float(np.linalg.norm(s * x))
    return float(np.linalg.norm(s[:, None] * x))


def weighted_opnorm(M: np.ndarray, degrees: np.ndarray) -> float:
    """Operator norm of M as a map of the weighted space: sigma_max(D^-1/2 M D^1/2)."""
    s = np.sqrt(np.asarray(degrees, dtype=np.float64))
    conj = (1.0 / s)[:, None] * np.asarray(M, dtype=np.float64) * s[None, :]
    return float(np.linalg.norm(conj, ord=2))


def matrix_powers(P: np.ndarray, t_max: int) -> np.ndarray:
    """Stack [P^0, P^1, ..., P^t_max] with shape (t_max + 1, n, n)."""
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    out = np.empty((t_max + 1, n, n), dtype=np.float64)
    out[0] = np.eye(n)
    for t in range(1, t_max + 1):
        out[t] = out[t - 1] @ P
    return out


def _sign_fix(v: np.ndarray) -> np.ndarray:
    for vi in v:
        if abs(vi) > 1e-12:
            return v if vi > 0 else -v
    return v


@dataclass
class DiffusionOperators:
    """P, T and the spectral data of T for one connected graph.

    eigenvalues are sorted descending; lead_eigvec is the unit eigenvector
    of the top eigenvalue with its first non-zero entry made positive.
    """

    P: np.ndarray
    T: np.ndarray
    degrees: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    lead_eigvec: np.ndarray = field(repr=False)

    @classmethod
    def from_adjacency(cls, A: np.ndarray) -> "DiffusionOperators":
        d = _degrees(A)
        P = lazy_walk(A)
        T = symmetric_diffusion(A)
        w, V = np.linalg.eigh(T)
        order = np.argsort(w)[::-1]
        w = w[order]
        V = V[:, order]
        return cls(
            P=P,
            T=T,
            degrees=d,
            eigenvalues=w,
            lead_eigvec=_sign_fix(V[:, 0].copy()),
        )

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def lambda2(self) -> float:
        """Second eigenvalue of T; equals ||T - v v^T||_2."""
        return float(self.eigenvalues[1]) if self.n > 1 else 0.0

    @property
    def spectral_gap(self) -> float:
        return 1.0 - self.lambda2

    def deflated(self) -> np.ndarray:
        """T with its stationary rank-one part removed: T - v v^T."""
        v = self.lead_eigvec
        return self.T - np.outer(v, v)
