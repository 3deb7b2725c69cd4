"""Optimal row weighting for the linear system.

Under pixel noise of standard deviation sigma_u, the algebraic residual of
the constraint block for point i has covariance

    Sigma_eps_i = -[ubar_i x] (k^T P pbar_i)^2 sigma_u^2 S^T S [ubar_i x],

which is rank 2 with null direction ubar_i. Whitening the row-reduced block
by (a factor of) the pseudo-inverse square root collapses, after exact
cancellation, to a single scalar per point:

    q_i = 1 / (sigma_u * k^T P pbar_i),

i.e. rows are divided by the (noise-scaled) depth of the point under a
preliminary estimate P0. The constant 1/sigma_u is kept for completeness;
the null direction of the weighted stack is invariant to it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dlt import MIN_POINTS, _assemble_arrays, solve_nullspace
from .errors import NegativeDepth, RankDeficient
from .geometry import Correspondence, correspondence_arrays, cross_matrix
from .normalization import fit_pixel_normalization, fit_point_normalization

# Dropping points that fall behind the preliminary camera is tolerated up to
# this fraction; beyond it the preliminary estimate cannot be trusted.
NEGATIVE_DEPTH_LIMIT = 0.10


@dataclass(frozen=True)
class WeightContext:
    """Preliminary projection estimate and the pixel noise level."""

    P0: np.ndarray
    sigma_u: float = 1.0

    def __post_init__(self):
        P0 = np.asarray(self.P0, dtype=float).reshape(3, 4)
        object.__setattr__(self, "P0", P0)
        if not self.sigma_u > 0:
            raise ValueError(f"sigma_u must be positive, got {self.sigma_u}")


def _depth(P0: np.ndarray, p: np.ndarray) -> float:
    return float(P0[2, :3] @ p + P0[2, 3])


def depths_under(P0: np.ndarray, ps: np.ndarray) -> np.ndarray:
    """Projective depths k^T P0 pbar for an (n,3) array of points."""
    ps = np.asarray(ps, dtype=float).reshape(-1, 3)
    return ps @ P0[2, :3] + P0[2, 3]


def residual_covariance(ctx: WeightContext, c: Correspondence) -> np.ndarray:
    """Covariance of the algebraic residual [ubar x] P0 pbar under pixel noise.

    Returns the 3x3 matrix
    -[ubar x] (k^T P0 pbar)^2 sigma_u^2 S^T S [ubar x],
    positive semidefinite of rank <= 2 with Sigma @ ubar == 0.
    """
    ubar = np.array([c.u[0], c.u[1], 1.0])
    Ux = cross_matrix(ubar)
    M = Ux.copy()
    M[2, :] = 0.0  # S^T S [ubar x]
    d = _depth(ctx.P0, c.p)
    return -(d * d * ctx.sigma_u * ctx.sigma_u) * (Ux @ M)


def weight_factor(ctx: WeightContext, c: Correspondence) -> float:
    """Scalar row weight q = 1 / (sigma_u * depth) for one correspondence.

    Raises:
        NegativeDepth: if the point's depth under P0 is not positive.
    """
    d = _depth(ctx.P0, c.p)
    if d <= 0:
        raise NegativeDepth(f"depth {d!r} under preliminary estimate is not positive")
    return 1.0 / (ctx.sigma_u * d)


def weight_factors(P0: np.ndarray, ps: np.ndarray, sigma_u: float) -> np.ndarray:
    """Vectorized weights for points with positive depth (caller filters)."""
    return 1.0 / (sigma_u * depths_under(P0, ps))


def _preliminary_normalized(
    psn: np.ndarray, usn: np.ndarray, subset_size: int, seed: int
) -> tuple[np.ndarray, bool]:
    """Unweighted solve on a seeded subset of pre-normalized data.

    Returns (P0, used_full_set). Falls back to the full point set when the
    subset system is rank deficient.
    """
    n = psn.shape[0]
    if subset_size < MIN_POINTS:
        raise ValueError(f"subset_size must be >= {MIN_POINTS}, got {subset_size}")
    if n > subset_size:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=subset_size, replace=False))
    else:
        idx = np.arange(n)
    try:
        sol = solve_nullspace(_assemble_arrays(psn[idx], usn[idx]), points=psn[idx])
        return sol.P, False
    except RankDeficient:
        sol = solve_nullspace(_assemble_arrays(psn, usn), points=psn)
        return sol.P, True


def preliminary_estimate(cs, subset_size: int = 12, seed: int = 0) -> np.ndarray:
    """Preliminary projection from an unweighted normalized solve on a subset.

    The normalization is fitted on the full correspondence set; a
    deterministic pseudo-random subset of min(n, subset_size) points is used
    only for the solve, so the returned 3x4 matrix lives in the normalized
    coordinates of the full set. A rank-deficient subset triggers one retry
    with all points.
    """
    ps, us = correspondence_arrays(cs)
    pix = fit_pixel_normalization(us)
    pt = fit_point_normalization(ps)
    P0, _ = _preliminary_normalized(pt.apply(ps), pix.apply(us), subset_size, seed)
    return P0
