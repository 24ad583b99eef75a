"""Graph Laplacians of relay networks and their generalized inverse."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Eigenvalues below this fraction of the largest one are treated as the
# null mode of the Laplacian and excluded from the inverse.
NULL_EIGENVALUE_RTOL = 1e-9

TOPOLOGIES = ("path", "complete", "custom")


@dataclass(frozen=True)
class LaplacianPair:
    """Laplacian of a connected undirected graph together with its
    generalized inverse.

    The inverse is symmetric positive semidefinite of rank n-1: it
    annihilates the all-ones vector and satisfies
    L @ Ldag == I - (1/n) 11^T up to floating-point noise.
    """

    n: int
    L: np.ndarray
    Ldag: np.ndarray


def path_edges(n: int) -> list[tuple[int, int]]:
    """Chain topology: node i coupled to i-1 and i+1."""
    return [(i, i + 1) for i in range(n - 1)]


def complete_edges(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def load_edge_list(path: str | Path) -> list[tuple[int, int]]:
    """Read a plain-text edge list, one 0-indexed "i j" pair per line.

    Blank lines and lines starting with '#' are skipped.
    """
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return edges


def _adjacency(n: int, edges: list[tuple[int, int]]) -> np.ndarray:
    A = np.zeros((n, n))
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise ValueError(f"self-loop ({i}, {i}) not allowed")
        A[i, j] = 1.0
        A[j, i] = 1.0
    return A


def _is_connected(A: np.ndarray) -> bool:
    n = A.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(A[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def build_laplacian(topology: str, n: int,
                    edges: list[tuple[int, int]] | None = None) -> LaplacianPair:
    """Build the Laplacian of the requested topology and its generalized
    inverse via a full symmetric eigendecomposition with the zero mode
    excluded.

    Raises ValueError for n < 2, unknown topologies, or a custom edge
    list whose graph is not connected.
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got n={n}")
    if topology == "path":
        edges = path_edges(n)
    elif topology == "complete":
        edges = complete_edges(n)
    elif topology == "custom":
        if edges is None:
            raise ValueError("custom topology requires an edge list")
    else:
        raise ValueError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")

    A = _adjacency(n, edges)
    if not _is_connected(A):
        raise ValueError("graph not connected")

    L = np.diag(A.sum(axis=1)) - A
    lam, V = np.linalg.eigh(L)
    nonzero = np.abs(lam) >= NULL_EIGENVALUE_RTOL * np.abs(lam).max()
    if np.count_nonzero(nonzero) != n - 1:
        raise ValueError("graph not connected")
    # deflate the residual all-ones component of the kept eigenvectors so
    # the inverse annihilates 1 to machine precision even when 1/lam_min
    # is large
    W = V[:, nonzero] - V[:, nonzero].mean(axis=0)
    Ldag = (W / lam[nonzero]) @ W.T
    Ldag = 0.5 * (Ldag + Ldag.T)

    pair = LaplacianPair(n=n, L=L, Ldag=Ldag)
    null_res, proj_res = identity_residuals(pair)
    if null_res > 1e-10 or proj_res > 1e-8:
        raise ArithmeticError(
            f"generalized inverse failed identity checks: "
            f"|Ldag 1|={null_res:.2e}, |L Ldag - proj|={proj_res:.2e}")
    return pair


def identity_residuals(pair: LaplacianPair) -> tuple[float, float]:
    """Residuals of the defining identities: |Ldag @ 1| and
    |L @ Ldag - (I - 11^T/n)| in Frobenius norm."""
    n = pair.n
    ones = np.ones(n)
    null_res = float(np.linalg.norm(pair.Ldag @ ones))
    proj = np.eye(n) - np.ones((n, n)) / n
    proj_res = float(np.linalg.norm(pair.L @ pair.Ldag - proj))
    return null_res, proj_res
