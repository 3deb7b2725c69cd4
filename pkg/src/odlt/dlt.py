"""Linear (DLT) engine: constraint assembly and null-space extraction.

Each correspondence (p, u) contributes the collinearity constraint
[ubar x] P pbar = 0. With the column-major vec convention this reads
(pbar^T kron [ubar x]) vec(P) = 0; only the first two rows are kept since
the cross-product matrix has rank 2. Stacking n such 2x12 blocks gives the
homogeneous system A vec(P) = 0 whose null direction is the projection
matrix estimate.

vec(P) is column-major: entries 0-8 hold the left 3x3 block of P column by
column, entries 9-11 hold the fourth column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient, TooFewPoints
from .geometry import Correspondence, correspondence_arrays

MIN_POINTS = 6

# Direct SVD of the stacked matrix up to this many rows; above it, the
# null space is taken from an eigendecomposition of the 12x12 Gram matrix,
# which keeps the working set O(1) for any n.
GRAM_ROW_THRESHOLD = 4096

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class DltSolution:
    """Null-space solve output.

    Attributes:
        P: 3x4 projection estimate (unit Frobenius norm, cheirality-fixed
            when points were supplied).
        singular_values: all 12 singular values, descending.
        V: 12x12 matrix of right singular vectors (columns, same order).
        mixed_depths: True when fewer than 90% of the supplied points share
            the majority depth sign under P.
    """

    P: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray
    mixed_depths: bool = False


def _reduced_rows(us: np.ndarray) -> np.ndarray:
    """First two rows of [ubar x] for each pixel: ((0,-1,v), (1,0,-u))."""
    n = us.shape[0]
    su = np.zeros((n, 2, 3))
    su[:, 0, 1] = -1.0
    su[:, 0, 2] = us[:, 1]
    su[:, 1, 0] = 1.0
    su[:, 1, 2] = -us[:, 0]
    return su


def _assemble_arrays(ps: np.ndarray, us: np.ndarray, weights=None) -> np.ndarray:
    n = ps.shape[0]
    if n < MIN_POINTS:
        raise TooFewPoints(n, MIN_POINTS)
    pbar = np.empty((n, 4))
    pbar[:, :3] = ps
    pbar[:, 3] = 1.0
    su = _reduced_rows(us)
    # blocks[m, r, 3j+i] = pbar[m, j] * su[m, r, i]
    blocks = pbar[:, None, :, None] * su[:, :, None, :]
    if weights is not None:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != n:
            raise ValueError(f"expected {n} weights, got {w.shape[0]}")
        blocks *= w[:, None, None, None]
    return blocks.reshape(2 * n, 12)


def constraint_block(c: Correspondence) -> np.ndarray:
    """Row-reduced 2x12 constraint block for a single correspondence."""
    pbar = np.append(c.p, 1.0)
    su = _reduced_rows(c.u[None, :])[0]
    return (pbar[None, :, None] * su[:, None, :]).reshape(2, 12)


def assemble(cs, weights=None) -> np.ndarray:
    """Stack the 2x12 blocks of all correspondences into a 2n x 12 matrix.

    Args:
        cs: sequence of Correspondence, or a pair of arrays (points (n,3),
            pixels (n,2)).
        weights: optional per-point scalars multiplying each 2-row block.

    Raises:
        TooFewPoints: if n < 6.
    """
    ps, us = correspondence_arrays(cs)
    return _assemble_arrays(ps, us, weights)


def solve_nullspace(A: np.ndarray, points=None) -> DltSolution:
    """Extract the null direction of the stacked constraint matrix.

    The smallest right singular vector of A is reshaped (column-major) into
    the 3x4 estimate. When world points are supplied, the global sign is
    fixed so their mean depth under P is positive (cheirality), and the
    mixed_depths flag reports whether fewer than 90% of depths share the
    majority sign.

    Args:
        A: 2n x 12 stacked constraint matrix.
        points: optional (n,3) array of the world points behind A's rows.

    Raises:
        RankDeficient: if the 11th singular value is below 1e-10 of the
            largest, i.e. the null space is (at least) two-dimensional.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != 12:
        raise ValueError(f"expected (m, 12) matrix, got {A.shape}")
    if A.shape[0] <= GRAM_ROW_THRESHOLD:
        _, s, Vt = np.linalg.svd(A, full_matrices=False)
        if s.shape[0] < 12:
            raise RankDeficient(f"only {s.shape[0]} rows; null space is not unique")
        V = Vt.T
    else:
        G = A.T @ A
        evals, evecs = np.linalg.eigh(G)
        s = np.sqrt(np.clip(evals[::-1], 0.0, None))
        V = evecs[:, ::-1]
    if s[0] <= 0.0 or s[10] / s[0] < _RANK_TOL:
        raise RankDeficient(
            f"two-dimensional null space: sigma_11/sigma_1 = {s[10] / max(s[0], 1e-300):.3e}"
        )
    x = V[:, 11]
    P = x.reshape(4, 3).T
    mixed = False
    if points is not None:
        ps = np.asarray(points, dtype=float).reshape(-1, 3)
        depths = ps @ P[2, :3] + P[2, 3]
        if depths.mean() < 0:
            P = -P
            V = V.copy()
            V[:, 11] = -V[:, 11]
        npos = int((depths > 0).sum())
        mixed = max(npos, depths.shape[0] - npos) < 0.9 * depths.shape[0]
    return DltSolution(P=P, singular_values=s, V=V, mixed_depths=mixed)


def information_matrix(sol: DltSolution) -> np.ndarray:
    """Information (inverse covariance) of vec(P): V diag(s^2) V^T."""
    V = sol.V
    s2 = sol.singular_values**2
    return (V * s2) @ V.T
