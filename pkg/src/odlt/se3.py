"""Recovery of a metric SE(3) pose from the linear solution.

The null-space estimate lives in normalized projective coordinates. Removing
the calibration and the normalizations ("de-clamping") maps vec(P_norm)
through the 12x12 matrix M = T_p^T kron (K^-1 T_u^-1) onto vec(R'[I | -r']),
where R' is only approximately a scaled rotation. The information matrix of
the solution transports through the same map, and its nine leading diagonal
entries (column-major, i.e. the R' block) form the 3x3 weight matrix W used
to project R' onto SO(3) by a weighted Procrustes step. Translation can
either be read off r' or re-triangulated from the sliced linear system with
the rotation fixed (LOST), which is O(n) and reuses the optimal weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dlt import DltSolution, _reduced_rows
from .errors import (
    DegenerateInput,
    RankDeficient,
    ReflectionDetected,
    SingularCalibration,
)
from .geometry import (
    Pose,
    correspondence_arrays,
    cross_matrix,
    intrinsic_matrix,
    nearest_rotation,
)
from .normalization import PixelNormalization, PointNormalization

_WEIGHT_COND_LIMIT = 1e10
_LOST_COND_LIMIT = 1e12


@dataclass(frozen=True)
class DenormalizedPose:
    """De-clamped linear solution: R_acute [I | -r_acute], plus the weight
    matrix W holding the marginal information of the R_acute entries."""

    R_acute: np.ndarray
    r_acute: np.ndarray
    W: np.ndarray


def intrinsic_inverse(K) -> np.ndarray:
    """Closed-form inverse of an upper-triangular intrinsic matrix.

    Keeps the third row exactly (0, 0, 1), which matters when calibrated
    homogeneous coordinates are expected to have unit third component.

    Raises:
        SingularCalibration: if a focal length is (numerically) zero.
    """
    Km = intrinsic_matrix(K)
    fx, skew, cx = Km[0]
    fy, cy = Km[1, 1], Km[1, 2]
    if abs(fx) < 1e-12 or abs(fy) < 1e-12:
        raise SingularCalibration(f"focal lengths too small to invert: fx={fx}, fy={fy}")
    return np.array(
        [
            [1.0 / fx, -skew / (fx * fy), (skew * cy - cx * fy) / (fx * fy)],
            [0.0, 1.0 / fy, -cy / fy],
            [0.0, 0.0, 1.0],
        ]
    )


def declamp_denormalize(
    sol: DltSolution,
    K,
    pixel_norm: PixelNormalization,
    point_norm: PointNormalization,
) -> DenormalizedPose:
    """Map the normalized linear solution back to calibrated world coordinates.

    Computes G = K^-1 T_u^-1 P_norm T_p as M vec(P_norm) with
    M = T_p^T kron (K^-1 T_u^-1), reads off R_acute = G[:, :3] and
    r_acute = -R_acute^-1 G[:, 3], and transports the information matrix of
    vec(P_norm) through M^-1 to fill W from the nine leading diagonal
    entries (column-major).

    Raises:
        SingularCalibration: if K cannot be inverted reliably.
    """
    Km = intrinsic_matrix(K)
    B = intrinsic_inverse(Km) @ pixel_norm.T_inv
    M = np.kron(point_norm.T.T, B)
    vec_p = sol.P.T.reshape(12)
    G = (M @ vec_p).reshape(4, 3).T
    # Information transport: Sigma'^-1 = M^-T (V D^2 V^T) M^-1. Only the
    # diagonal is needed, so accumulate N = M^-T V once.
    M_inv = np.kron(point_norm.T_inv.T, pixel_norm.T @ Km)
    N = M_inv.T @ sol.V
    diag = (N * N) @ (sol.singular_values**2)
    W = diag[:9].reshape(3, 3, order="F")
    R_acute = G[:, :3]
    r_acute = -np.linalg.solve(R_acute, G[:, 3])
    return DenormalizedPose(R_acute=R_acute, r_acute=r_acute, W=W)


def procrustes_cost(R: np.ndarray, target: np.ndarray, W: np.ndarray) -> float:
    """Squared weighted Frobenius distance ||(R - target) * W||_F^2."""
    d = (R - target) * W
    return float(np.sum(d * d))


def weighted_procrustes(
    R_acute: np.ndarray,
    W: np.ndarray,
    max_iters: int = 1,
    tol: float = 1e-12,
) -> tuple[np.ndarray, bool]:
    """Project the de-clamped linear rotation block onto SO(3), weighted by W.

    Minimizes ||(R - R_s) * W||_F over rotations, where R_s is R_acute
    rescaled by s = det(R_acute)^(-1/3). Starting from the unweighted
    projection R0 = nearest_rotation(R_s), the rotation is updated through
    the small-angle model R ~ (I - [dphi x]) R0, solving 3x3 normal
    equations per iteration and re-projecting with nearest_rotation. One
    iteration is the default; up to five are allowed, stopping early when
    |dphi| < tol.

    Returns:
        (R, fallback_used): fallback_used is True when the normal matrix
        had condition number > 1e10 and the unweighted projection R0 was
        returned instead.
    """
    R_acute = np.asarray(R_acute, dtype=float).reshape(3, 3)
    W = np.asarray(W, dtype=float).reshape(3, 3)
    if not 1 <= max_iters <= 5:
        raise ValueError(f"max_iters must be in 1..5, got {max_iters}")
    det = np.linalg.det(R_acute)
    if det == 0:
        raise DegenerateInput("de-clamped rotation block is singular")
    s = 1.0 / np.cbrt(det)
    Rs = s * R_acute
    R = nearest_rotation(Rs)
    R0 = R
    for _ in range(max_iters):
        # Residual entries e_ij = W_ij (R - Rs)_ij shrink along
        # -W_ij ([dphi x] R)_ij = W_ij ([R_col_j x] dphi)_i.
        D = np.stack([W[:, j, None] * cross_matrix(R[:, j]) for j in range(3)], axis=0)
        D = D.transpose(1, 0, 2).reshape(9, 3)  # rows ordered (i, j), j minor
        y = -((R - Rs) * W).reshape(9)
        Nmat = D.T @ D
        if np.linalg.cond(Nmat) > _WEIGHT_COND_LIMIT:
            return R0, True
        dphi = np.linalg.solve(Nmat, D.T @ y)
        candidate = nearest_rotation((np.eye(3) - cross_matrix(dphi)) @ R)
        if procrustes_cost(candidate, Rs, W) > procrustes_cost(R, Rs, W):
            break
        R = candidate
        if np.linalg.norm(dphi) < tol:
            break
    return R, False


def recover_scale_and_position(
    R_acute: np.ndarray,
    r_acute: np.ndarray,
    R_final: np.ndarray,
) -> tuple[Pose, float]:
    """Assemble the metric pose and report the recovered projective scale.

    The center of projection is invariant to the global scale of the linear
    solution, so the pose simply pairs the Procrustes rotation with r_acute;
    the scale s = det(R_acute)^(-1/3) that makes the linear block
    unimodular is returned alongside.

    Raises:
        ReflectionDetected: if det(R_acute) < 0 (after the depth sign fix,
            this indicates a mirrored solution, not a camera pose).
    """
    det = float(np.linalg.det(np.asarray(R_acute, dtype=float)))
    if det < 0:
        raise ReflectionDetected(f"linear rotation block has determinant {det!r}")
    if det == 0:
        raise DegenerateInput("linear rotation block is singular")
    s = det ** (-1.0 / 3.0)
    return Pose(R=R_final, r=np.asarray(r_acute, dtype=float)), s


def lost_translation(cs, K, R: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Re-triangulate the translation with the rotation held fixed.

    Splitting the constraint matrix columns into the rotation block B and
    translation block C, the system C t = -B vec(R) is solved in calibrated,
    de-normalized coordinates: each point contributes the two reduced rows of
    q_i [xbar_i x] for C and q_i [xbar_i x] R p_i for the right-hand side,
    where xbar = K^-1 ubar. The 3x3 normal equations make this O(n).

    Args:
        cs: correspondences (sequence of Correspondence or array pair).
        K: camera intrinsics.
        R: fixed 3x3 rotation.
        weights: positive per-point scalars q_i (from the final estimate).

    Returns:
        Translation t (world origin in camera coordinates); the camera
        center is r = -R^T t.

    Raises:
        RankDeficient: if the normal matrix has condition number > 1e12.
    """
    ps, us = correspondence_arrays(cs)
    q = np.asarray(weights, dtype=float).reshape(-1)
    if q.shape[0] != ps.shape[0]:
        raise ValueError(f"expected {ps.shape[0]} weights, got {q.shape[0]}")
    Kinv = intrinsic_inverse(K)
    # Calibrated pixels keep unit third component, so the reduced rows of
    # [xbar x] have the same layout as the pixel-space constraint rows.
    xb = us @ Kinv[:2, :2].T + Kinv[:2, 2]
    L = q[:, None, None] * _reduced_rows(xb)
    xb3 = np.concatenate([xb, np.ones((xb.shape[0], 1))], axis=1)
    rhs = -(q[:, None] * np.cross(xb3, ps @ np.asarray(R, dtype=float).T)[:, :2])
    Nmat = np.einsum("nri,nrj->ij", L, L)
    if np.linalg.cond(Nmat) > _LOST_COND_LIMIT:
        raise RankDeficient("translation normal matrix is ill conditioned")
    g = np.einsum("nri,nr->i", L, rhs)
    return np.linalg.solve(Nmat, g)
