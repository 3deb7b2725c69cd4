"""Similarity normalization of pixels and world points.

Normalizing both sides of the correspondence data before solving the linear
system dramatically improves its conditioning: pixels are translated to zero
centroid and scaled to mean radius sqrt(2), world points to zero centroid and
mean radius sqrt(3). A solution obtained in normalized coordinates is mapped
back with denormalize_projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoints

_COLLAPSE_EPS = 1e-12


@dataclass(frozen=True)
class PixelNormalization:
    """Similarity u' = s (u - c) as a homogeneous 3x3 transform."""

    T: np.ndarray
    T_inv: np.ndarray
    scale: float
    centroid: np.ndarray

    @classmethod
    def identity(cls) -> "PixelNormalization":
        return cls(T=np.eye(3), T_inv=np.eye(3), scale=1.0, centroid=np.zeros(2))

    def apply(self, us: np.ndarray) -> np.ndarray:
        us = np.asarray(us, dtype=float).reshape(-1, 2)
        return (us - self.centroid) * self.scale


@dataclass(frozen=True)
class PointNormalization:
    """Similarity p' = s (p - c) as a homogeneous 4x4 transform."""

    T: np.ndarray
    T_inv: np.ndarray
    scale: float
    centroid: np.ndarray

    @classmethod
    def identity(cls) -> "PointNormalization":
        return cls(T=np.eye(4), T_inv=np.eye(4), scale=1.0, centroid=np.zeros(3))

    def apply(self, ps: np.ndarray) -> np.ndarray:
        ps = np.asarray(ps, dtype=float).reshape(-1, 3)
        return (ps - self.centroid) * self.scale


def _similarity(dim: int, scale: float, centroid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    T = np.eye(dim + 1)
    T[:dim, :dim] *= scale
    T[:dim, dim] = -scale * centroid
    T_inv = np.eye(dim + 1)
    T_inv[:dim, :dim] /= scale
    T_inv[:dim, dim] = centroid
    return T, T_inv


def fit_pixel_normalization(us: np.ndarray) -> PixelNormalization:
    """Fit the pixel similarity: zero centroid, mean radius sqrt(2).

    Raises:
        DegeneratePoints: if the mean distance to the centroid is < 1e-12.
    """
    us = np.asarray(us, dtype=float).reshape(-1, 2)
    centroid = us.mean(axis=0)
    mean_radius = np.linalg.norm(us - centroid, axis=1).mean()
    if mean_radius < _COLLAPSE_EPS:
        raise DegeneratePoints("pixel set collapses to a single location")
    scale = np.sqrt(2.0) / mean_radius
    T, T_inv = _similarity(2, scale, centroid)
    return PixelNormalization(T=T, T_inv=T_inv, scale=scale, centroid=centroid)


def fit_point_normalization(ps: np.ndarray) -> PointNormalization:
    """Fit the world-point similarity: zero centroid, mean radius sqrt(3).

    Raises:
        DegeneratePoints: if the mean distance to the centroid is < 1e-12.
    """
    ps = np.asarray(ps, dtype=float).reshape(-1, 3)
    centroid = ps.mean(axis=0)
    mean_radius = np.linalg.norm(ps - centroid, axis=1).mean()
    if mean_radius < _COLLAPSE_EPS:
        raise DegeneratePoints("point set collapses to a single location")
    scale = np.sqrt(3.0) / mean_radius
    T, T_inv = _similarity(3, scale, centroid)
    return PointNormalization(T=T, T_inv=T_inv, scale=scale, centroid=centroid)


def denormalize_projection(
    P_norm: np.ndarray,
    pixel_norm: PixelNormalization,
    point_norm: PointNormalization,
) -> np.ndarray:
    """Map a projection estimated in normalized coordinates back: T_u^-1 P T_p."""
    P_norm = np.asarray(P_norm, dtype=float).reshape(3, 4)
    return pixel_norm.T_inv @ P_norm @ point_norm.T
