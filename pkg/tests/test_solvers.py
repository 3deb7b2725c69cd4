import numpy as np
import pytest

import odlt.solvers as solvers_module
from odlt.errors import NegativeDepth, TooFewPoints
from odlt.geometry import (
    CameraIntrinsics,
    Correspondence,
    Pose,
    compose_projection,
    rotation_angle_deg,
)
from odlt.normalization import fit_pixel_normalization, fit_point_normalization
from odlt.solvers import (
    FLAG_FALLBACK_USED,
    FLAG_MIXED_DEPTHS,
    METHODS,
    SolverConfig,
    estimate_projection,
    refine_gauss_newton,
    solve,
    solve_ndlt,
    solve_odlt,
    solve_odlt_lost,
)
from odlt.weighting import depths_under, preliminary_estimate
from conftest import (
    make_exact_scene,
    oracle_project,
    random_intrinsics_matrix,
    random_rotation,
)


def as_cs(ps, us):
    return [Correspondence(p=p, u=u) for p, u in zip(ps, us)]


def pose_errors(result, R, r):
    return (
        rotation_angle_deg(result.pose.R, R),
        float(np.linalg.norm(result.pose.r - r)),
    )


class TestExactness:
    @pytest.mark.parametrize("method", METHODS)
    def test_zero_noise_recovery(self, method, rng):
        for _ in range(8):
            Km, R, r, ps, us = make_exact_scene(rng, n=20)
            result = solve((ps, us), Km, SolverConfig(method=method))
            rot, pos = pose_errors(result, R, r)
            assert rot < 1e-6, f"{method}: rotation error {rot}"
            assert pos < 1e-8, f"{method}: position error {pos}"
            assert result.reprojection_rms < 1e-6

    def test_accepts_correspondence_sequences(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=10)
        a = solve(as_cs(ps, us), Km, SolverConfig(method="ndlt"))
        b = solve((ps, us), Km, SolverConfig(method="ndlt"))
        np.testing.assert_array_equal(a.pose.R, b.pose.R)
        np.testing.assert_array_equal(a.pose.r, b.pose.r)


class TestInvariances:
    @pytest.mark.parametrize("method", ["ndlt", "odlt"])
    def test_pixel_and_principal_point_shift(self, method, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=25)
        us = us + rng.standard_normal(us.shape)
        shift = np.array([137.5, -42.0])
        K2 = Km.copy()
        K2[0, 2] += shift[0]
        K2[1, 2] += shift[1]
        cfg = SolverConfig(method=method)
        a = solve((ps, us), Km, cfg)
        b = solve((ps, us + shift), K2, cfg)
        assert rotation_angle_deg(a.pose.R, b.pose.R) < 1e-9
        np.testing.assert_allclose(b.pose.r, a.pose.r, atol=1e-9)

    def test_sigma_scale_invariance(self, rng):
        # Scaling sigma_u rescales all rows together; the null direction,
        # the Procrustes weights' relative pattern, so the pose, must stay.
        Km, R, r, ps, us = make_exact_scene(rng, n=25)
        us = us + rng.standard_normal(us.shape)
        for method in METHODS:
            a = solve((ps, us), Km, SolverConfig(method=method, sigma_u=1.0))
            b = solve((ps, us), Km, SolverConfig(method=method, sigma_u=10.0))
            assert rotation_angle_deg(a.pose.R, b.pose.R) < 1e-8
            np.testing.assert_allclose(b.pose.r, a.pose.r, atol=1e-8)

    def test_odlt_lost_shares_rotation(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=25)
        us = us + rng.standard_normal(us.shape)
        cfg_a = SolverConfig(method="odlt", seed=3)
        cfg_b = SolverConfig(method="odlt_lost", seed=3)
        a = solve((ps, us), Km, cfg_a)
        b = solve((ps, us), Km, cfg_b)
        np.testing.assert_array_equal(a.pose.R, b.pose.R)
        assert np.linalg.norm(a.pose.r - b.pose.r) > 0  # translation did move

    def test_unit_weights_reduce_to_ndlt(self, rng):
        for _ in range(10):
            Km, R, r, ps, us = make_exact_scene(rng, n=18)
            us = us + rng.standard_normal(us.shape)
            forced = solve_odlt((ps, us), Km, SolverConfig(method="odlt", force_unit_weights=True))
            plain = solve_ndlt((ps, us), Km, SolverConfig(method="ndlt"))
            np.testing.assert_allclose(forced.pose.R, plain.pose.R, atol=1e-12)
            np.testing.assert_allclose(forced.pose.r, plain.pose.r, atol=1e-12)

    def test_determinism(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=30)
        us = us + rng.standard_normal(us.shape)
        for method in METHODS:
            cfg = SolverConfig(method=method)
            a = solve((ps, us), Km, cfg)
            b = solve((ps, us), Km, cfg)
            np.testing.assert_array_equal(a.pose.R, b.pose.R)
            np.testing.assert_array_equal(a.pose.r, b.pose.r)
            assert a.reprojection_rms == b.reprojection_rms
            assert a.flags == b.flags


class TestGaussNewton:
    def test_jacobian_matches_central_differences(self, rng):
        Km = random_intrinsics_matrix(rng)
        R = random_rotation(rng)
        r = rng.uniform(-2, 2, 3)
        _, _, _, ps, us = make_exact_scene(rng, n=12, Km=Km, R=R, r=r)
        us = us + rng.standard_normal(us.shape)

        def residuals(dphi, dr):
            # Left-composed rotation increment, same parameterization the
            # solver documents.
            c = np.linalg.norm(dphi)
            if c < 1e-12:
                Rp = R
            else:
                axis = dphi / c
                Kx = np.array(
                    [
                        [0.0, -axis[2], axis[1]],
                        [axis[2], 0.0, -axis[0]],
                        [-axis[1], axis[0], 0.0],
                    ]
                )
                Rp = np.eye(3) + np.sin(c) * Kx + (1 - np.cos(c)) * (Kx @ Kx)
                Rp = Rp @ R
            pred = oracle_project(Km, Rp, r + dr, ps)
            return (us - pred).reshape(-1)

        e_impl, J_impl = solvers_module._gn_residuals_jacobian(ps, us, Km, R, r)
        np.testing.assert_allclose(e_impl, residuals(np.zeros(3), np.zeros(3)), atol=1e-9)
        h = 1e-6
        J_fd = np.empty_like(J_impl)
        for k in range(6):
            step = np.zeros(6)
            step[k] = h
            plus = residuals(step[:3], step[3:])
            minus = residuals(-step[:3], -step[3:])
            J_fd[:, k] = (plus - minus) / (2 * h)
        scale = np.abs(J_fd).max()
        np.testing.assert_allclose(J_impl, J_fd, atol=1e-5 * scale)

    def test_converged_step_is_tiny(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=30)
        us = us + rng.standard_normal(us.shape)
        result = solve((ps, us), Km, SolverConfig(method="ndlt_gn"))
        e, J = solvers_module._gn_residuals_jacobian(
            ps, us, Km, result.pose.R, result.pose.r
        )
        step = np.linalg.solve(J.T @ J, J.T @ e)
        assert np.linalg.norm(step) < 1e-6

    def test_improves_perturbed_initialization(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=30)
        us = us + rng.standard_normal(us.shape)
        wobble = solvers_module.rodrigues(np.array([0.02, -0.015, 0.01]))
        init = Pose(R=wobble @ R, r=r + np.array([0.05, -0.04, 0.08]))
        refined = refine_gauss_newton((ps, us), Km, init)
        init_rms = solvers_module._reprojection_rms(ps, us, Km, init)
        assert refined.reprojection_rms < init_rms
        assert rotation_angle_deg(refined.pose.R, R) < 0.2

    def test_fallback_flag_when_no_step_improves(self, rng, monkeypatch):
        Km, R, r, ps, us = make_exact_scene(rng, n=12)
        us = us + rng.standard_normal(us.shape)
        calls = {"n": 0}

        def stuck_cost(*args):
            calls["n"] += 1
            return 1.0 if calls["n"] == 1 else 2.0

        monkeypatch.setattr(solvers_module, "_gn_cost", stuck_cost)
        init = Pose(R=R, r=r)
        result = refine_gauss_newton((ps, us), Km, init)
        assert FLAG_FALLBACK_USED in result.flags
        np.testing.assert_allclose(result.pose.R, R, atol=1e-12)
        np.testing.assert_array_equal(result.pose.r, r)


class TestWeightEdgeCases:
    def test_small_negative_depth_fraction_is_dropped(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=20)
        P0 = preliminary_estimate(as_cs(ps, us), subset_size=12, seed=0)
        pt = fit_point_normalization(ps)
        depths = np.sort(depths_under(P0, pt.apply(ps)))
        P0_shift = P0.copy()
        P0_shift[2, 3] -= (depths[0] + depths[1]) / 2.0  # exactly one behind
        result = solve_odlt((ps, us), Km, SolverConfig(method="odlt"), preliminary=P0_shift)
        rot, pos = pose_errors(result, R, r)
        assert rot < 1e-6 and pos < 1e-7

    def test_large_negative_depth_fraction_raises(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=20)
        P0 = preliminary_estimate(as_cs(ps, us), subset_size=12, seed=0)
        pt = fit_point_normalization(ps)
        depths = np.sort(depths_under(P0, pt.apply(ps)))
        P0_shift = P0.copy()
        P0_shift[2, 3] -= (depths[2] + depths[3]) / 2.0  # three behind: 15%
        with pytest.raises(NegativeDepth):
            solve_odlt((ps, us), Km, SolverConfig(method="odlt"), preliminary=P0_shift)

    def test_mixed_depths_flag_surfaces(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=20)
        cam = (ps - r) @ R.T
        cam[:8] *= -1.0
        mixed_ps = cam @ R + r
        mixed_us = oracle_project(Km, R, r, mixed_ps)
        result = solve((mixed_ps, mixed_us), Km, SolverConfig(method="dlt"))
        assert FLAG_MIXED_DEPTHS in result.flags

    def test_reweighting_is_stable(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=40)
        us = us + rng.standard_normal(us.shape)
        one = solve_odlt((ps, us), Km, SolverConfig(method="odlt", reweight_iters=1))
        two = solve_odlt((ps, us), Km, SolverConfig(method="odlt", reweight_iters=2))
        assert rotation_angle_deg(one.pose.R, two.pose.R) < 0.1
        assert np.linalg.norm(one.pose.r - two.pose.r) < 0.05


class TestApiSurface:
    def test_too_few_points(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=5)
        with pytest.raises(TooFewPoints):
            solve((ps, us), Km, SolverConfig(method="ndlt"))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(method="epnp")
        with pytest.raises(ValueError):
            SolverConfig(sigma_u=0.0)
        with pytest.raises(ValueError):
            SolverConfig(subset_size=4)
        with pytest.raises(ValueError):
            SolverConfig(procrustes_iters=0)
        with pytest.raises(ValueError):
            SolverConfig(procrustes_iters=6)
        with pytest.raises(ValueError):
            SolverConfig(reweight_iters=0)
        with pytest.raises(ValueError):
            SolverConfig(gn_max_iters=0)

    def test_estimate_projection_properties(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=20)
        P_true = compose_projection(Km, Pose(R=R, r=r))
        for method in ("dlt", "ndlt", "odlt"):
            P = estimate_projection((ps, us), method=method)
            assert abs(np.linalg.norm(P) - 1.0) < 1e-12
            assert depths_under(P, ps).mean() > 0
            ref = P_true / np.linalg.norm(P_true)
            np.testing.assert_allclose(P, ref, atol=1e-7)
        with pytest.raises(ValueError):
            estimate_projection((ps, us), method="ndlt_gn")

    def test_timing_keys(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=15)
        checks = {
            "dlt": {"normalize", "solve", "recover", "reprojection", "total"},
            "odlt": {"normalize", "weights", "solve", "recover", "reprojection", "total"},
            "odlt_lost": {"normalize", "weights", "solve", "recover", "lost", "reprojection", "total"},
            "ndlt_gn": {"normalize", "solve", "recover", "reprojection", "refine", "total"},
        }
        for method, expected in checks.items():
            result = solve((ps, us), Km, SolverConfig(method=method))
            assert expected <= set(result.timings), method
            assert all(v >= 0.0 for v in result.timings.values())

    def test_intrinsics_object_and_matrix_agree(self, rng):
        Km, R, r, ps, us = make_exact_scene(rng, n=12)
        intr = CameraIntrinsics(fx=Km[0, 0], fy=Km[1, 1], cx=Km[0, 2], cy=Km[1, 2])
        a = solve((ps, us), Km, SolverConfig(method="odlt"))
        b = solve((ps, us), intr, SolverConfig(method="odlt"))
        np.testing.assert_array_equal(a.pose.R, b.pose.R)
        np.testing.assert_array_equal(a.pose.r, b.pose.r)
