"""Shared test helpers.

The oracle functions here are written straight from the defining formulas,
on purpose not calling into the package, so that agreement between the two
is evidence rather than tautology.
"""

import numpy as np
import pytest


def oracle_rotation_from_quat(q):
    """Rotation matrix from a unit quaternion (w, x, y, z), textbook formula."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_rotation(rng):
    return oracle_rotation_from_quat(rng.standard_normal(4))


def oracle_project(Km, R, r, ps):
    """Pixels of world points under u ~ K R (p - r), computed longhand."""
    ps = np.atleast_2d(ps)
    cam = (ps - r) @ R.T
    hom = cam @ np.asarray(Km, dtype=float).T
    return hom[:, :2] / hom[:, 2:3]


def random_intrinsics_matrix(rng, skew=False):
    fx = rng.uniform(300.0, 1500.0)
    fy = rng.uniform(300.0, 1500.0)
    cx = rng.uniform(100.0, 900.0)
    cy = rng.uniform(100.0, 700.0)
    s = rng.uniform(-5.0, 5.0) if skew else 0.0
    return np.array([[fx, s, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])


def make_exact_scene(rng, n=30, Km=None, R=None, r=None, spread=2.0, depth=(4.0, 8.0)):
    """Random world points in front of a camera plus their exact pixels.

    Points are drawn in the camera frame inside a frustum-ish box, then
    mapped to the world frame, so every depth is positive by construction.
    """
    if Km is None:
        Km = random_intrinsics_matrix(rng)
    if R is None:
        R = random_rotation(rng)
    if r is None:
        r = rng.uniform(-3.0, 3.0, 3)
    z = rng.uniform(depth[0], depth[1], n)
    x = rng.uniform(-spread, spread, n) * z / depth[1]
    y = rng.uniform(-spread, spread, n) * z / depth[1]
    cam = np.column_stack([x, y, z])
    ps = cam @ R + r  # R^T cam + r, world coordinates
    us = oracle_project(Km, R, r, ps)
    return Km, R, r, ps, us


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
