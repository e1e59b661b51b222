"""Tests for viscosity patches, collar tangent fields and interface curves."""

import math

import numpy as np
import pytest

import oracles
from vns.geometry import (
    InterfaceCurve,
    LayerSpec,
    PatchSpec,
    SelfIntersectionError,
    boundary_regularity,
    check_simple,
    checkerboard_corners,
    circle_curve,
    disc_tau_gradient,
    interface_points,
    layer_tau_gradient,
    layers_profile,
    make_checkerboard_mu,
    make_disc_tau,
    make_layer_tau,
    make_layers_mu,
    make_patch_mu,
    patch_profile,
    polar,
    radial_dtau_mu,
    resample_closed,
    tangent_gradient,
)
from vns.spectral_core import Grid, lp_norm, ScalarField
from vns.transport import FlowMap

CENTRE = (math.pi, math.pi)


@pytest.fixture
def grid():
    return Grid(64)


@pytest.fixture
def patch():
    return PatchSpec(CENTRE, 1.0, 2.0, 0.5)


class TestPatchSpec:
    def test_fit_violation(self, grid):
        with pytest.raises(ValueError, match="half period"):
            PatchSpec(CENTRE, 1.1).validate(grid)

    def test_width_bounds(self, grid):
        with pytest.raises(ValueError, match="two grid cells"):
            PatchSpec(CENTRE, 1.0, mollify_width=grid.h).validate(grid)
        with pytest.raises(ValueError, match="radius/4"):
            PatchSpec(CENTRE, 0.5, mollify_width=0.2).validate(grid)

    def test_non_positive_radius(self, grid):
        with pytest.raises(ValueError):
            PatchSpec(CENTRE, 0.0).validate(grid)


class TestLayerSpec:
    @pytest.mark.parametrize("radii,values", [((1.0, 0.5), (1, 2, 3)), ((0.5, 1.0), (1, 2)),
                                              ((0.5, 1.0), (1, -2, 3))])
    def test_invalid(self, radii, values):
        with pytest.raises(ValueError):
            LayerSpec(radii, values).validate(Grid(128))

    def test_spacing_needs_fine_grid(self):
        spec = LayerSpec((0.5, 1.0), (2.0, 1.0, 0.5))
        with pytest.raises(ValueError, match="too large"):
            spec.validate(Grid(64))
        spec.validate(Grid(128))


class TestViscosity:
    def test_patch_values_and_bounds(self, grid, patch):
        mu = make_patch_mu(grid, patch)
        _, _, r, _ = polar(grid, CENTRE)
        assert mu.values.min() >= 0.5 and mu.values.max() <= 2.0
        np.testing.assert_allclose(mu.values[r < 1.0 - 2 * patch.width(grid)], 2.0)
        np.testing.assert_allclose(mu.values[r > 1.0 + 2 * patch.width(grid)], 0.5)

    def test_unit_far_field_in_l2(self, grid):
        mu = make_patch_mu(grid, PatchSpec(CENTRE, 1.0, 2.0, 1.0))
        dev = ScalarField(grid, mu.values - 1.0)
        # roughly (mu_in - 1) sqrt(pi R^2)
        assert lp_norm(dev, 2) == pytest.approx(math.sqrt(math.pi), rel=0.05)

    def test_radial_profile_callables(self, grid):
        spec = PatchSpec(CENTRE, 1.0, lambda r: 1.0 + 0.1 * r, 0.5)
        prof = patch_profile(spec, grid)
        assert prof(np.array(0.5)) == pytest.approx(1.05)
        assert prof(np.array(2.0)) == pytest.approx(0.5)

    def test_layers(self):
        grid = Grid(128)
        spec = LayerSpec((0.5, 1.0), (2.0, 1.0, 0.5))
        mu = make_layers_mu(grid, spec)
        prof = layers_profile(spec, grid)
        assert prof(np.array(0.0)) == pytest.approx(2.0)
        assert prof(np.array(0.75)) == pytest.approx(1.0)
        assert prof(np.array(2.0)) == pytest.approx(0.5)
        assert mu.values.min() >= 0.5 and mu.values.max() <= 2.0

    def test_checkerboard(self, grid):
        mu = make_checkerboard_mu(grid, 0.5, 2.0)
        i = grid.n // 4
        assert mu.values[i, i] == pytest.approx(2.0)
        assert mu.values[i, 3 * i] == pytest.approx(0.5)
        assert len(checkerboard_corners(grid)) == 4


class TestDiscTau:
    def test_unit(self, grid, patch):
        tau = make_disc_tau(grid, patch)
        np.testing.assert_allclose(tau.magnitude(), 1.0, atol=1e-14)

    def test_e_theta_on_circle(self, grid, patch):
        tau = make_disc_tau(grid, patch)
        d1, d2, r, _ = polar(grid, CENTRE)
        ring = np.abs(r - 1.0) <= 0.25
        np.testing.assert_allclose(tau.x.values[ring], -d2[ring] / r[ring], atol=1e-14)
        np.testing.assert_allclose(tau.y.values[ring], d1[ring] / r[ring], atol=1e-14)

    def test_e1_at_centre_and_far_field(self, grid, patch):
        tau = make_disc_tau(grid, patch)
        _, _, r, _ = polar(grid, CENTRE)
        away = (r < 0.25) | (r > 1.75)
        np.testing.assert_array_equal(tau.x.values[away], 1.0)
        np.testing.assert_array_equal(tau.y.values[away], 0.0)

    def test_tangent_to_level_sets(self, grid, patch):
        tau = make_disc_tau(grid, patch)
        g = radial_dtau_mu(grid, CENTRE, patch_profile(patch, grid), tau)
        assert np.max(np.abs(g.values)) <= 1e-12

    def test_unnormalized_magnitude(self, grid, patch):
        m = make_disc_tau(grid, patch, unit=False).magnitude()
        assert m.min() >= 0.5 - 1e-12 and m.max() <= 1.0 + 1e-12

    def test_exact_gradient_matches_differences(self):
        grid = Grid(256)
        spec = PatchSpec(CENTRE, 1.0)
        exact = disc_tau_gradient(grid, spec)
        fd = tangent_gradient(make_disc_tau(grid, spec))
        _, _, r, theta = polar(grid, CENTRE)
        # away from the collar boundaries and the phase-jump ray
        kink = np.zeros_like(r, bool)
        for edge in (0.25, 0.75, 1.25, 1.75):
            kink |= np.abs(r - edge) < 3 * grid.h
        away = ~kink & (np.abs(np.abs(theta) - math.pi) * r > 3 * grid.h)
        err = np.max(np.abs(exact - fd)[:, :, away])
        assert err <= 0.05 * np.max(np.abs(exact))


class TestLayerTau:
    def test_single_layer_matches_disc(self):
        grid = Grid(128)
        layer = make_layer_tau(grid, LayerSpec((1.0,), (2.0, 0.5)))
        disc = make_disc_tau(grid, PatchSpec(CENTRE, 1.0))
        np.testing.assert_array_equal(layer.x.values, disc.x.values)
        np.testing.assert_array_equal(layer.y.values, disc.y.values)

    def test_tangent_to_layers(self):
        grid = Grid(128)
        spec = LayerSpec((0.5, 1.0), (2.0, 1.0, 0.5))
        tau = make_layer_tau(grid, spec)
        g = radial_dtau_mu(grid, spec.centre(grid), layers_profile(spec, grid), tau)
        assert np.max(np.abs(g.values)) <= 1e-12

    def test_inner_collar_norm_scaling(self):
        grid = Grid(512)
        eps = 0.5
        p = 2.0 + eps
        scaled, totals = [], []
        for r1 in (0.5, 0.25, 0.125):
            spec = LayerSpec((r1, 1.0), (2.0, 1.0, 0.5))
            m = np.sqrt(np.sum(layer_tau_gradient(grid, spec) ** 2, axis=(0, 1)))
            _, _, r, _ = polar(grid, spec.centre(grid))
            inner = lp_norm(np.where(r < r1, m, 0.0), p, grid)
            scaled.append(inner * r1 ** (eps / p))
            totals.append(lp_norm(m, p, grid))
        assert totals[0] < totals[1] < totals[2]
        assert max(scaled) / min(scaled) <= 1.02


class TestCurves:
    def test_rejects_bad_points(self):
        with pytest.raises(ValueError):
            InterfaceCurve(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            InterfaceCurve(np.full((4, 2), np.nan))

    def test_circle_length_and_area(self):
        c = circle_curve(CENTRE, 0.8, 512)
        assert c.arclength() == pytest.approx(2 * math.pi * 0.8, rel=1e-4)
        assert c.area() == pytest.approx(math.pi * 0.64, rel=1e-4)

    def test_circle_curvature(self):
        c = circle_curve(CENTRE, 0.5, 256)
        length, norm, kmax = boundary_regularity(c, 0.5)
        assert length == pytest.approx(math.pi, rel=0.01)
        assert norm == pytest.approx(oracles.circle_curvature_norm(0.5, 0.5), rel=0.01)
        assert kmax == pytest.approx(2.0, rel=0.01)

    def test_ellipse_max_curvature(self):
        a, b = 1.0, 0.5
        s = 2 * math.pi * np.arange(512) / 512
        c = InterfaceCurve(np.column_stack([a * np.cos(s), b * np.sin(s)]))
        _, _, kmax = boundary_regularity(c, 0.5)
        assert kmax == pytest.approx(oracles.ellipse_max_curvature(a, b), rel=0.02)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="16"):
            boundary_regularity(circle_curve(CENTRE, 1.0, 8), 0.5)

    def test_collinear_rejected(self):
        x = np.linspace(0, 1, 16)
        pts = np.column_stack([np.concatenate([x, x[::-1]]), np.zeros(32)])
        with pytest.raises(ValueError, match="collinear"):
            boundary_regularity(InterfaceCurve(pts), 0.5, resample=False)

    def test_figure_eight_rejected(self):
        s = 2 * math.pi * np.arange(200) / 200
        pts = np.column_stack([np.sin(s), np.sin(s) * np.cos(s)])
        with pytest.raises(SelfIntersectionError):
            check_simple(pts, 0.01)

    def test_resample_preserves_circle(self):
        s = 2 * math.pi * np.sort(np.random.default_rng(0).uniform(0, 1, 128))
        pts = np.column_stack([np.cos(s), np.sin(s)])
        out = resample_closed(pts, 128)
        np.testing.assert_allclose(np.hypot(*out.T), 1.0, atol=1e-3)
        seg = np.hypot(*(np.roll(out, -1, axis=0) - out).T)
        assert seg.max() / seg.min() < 1.01

    def test_identity_flow(self, grid):
        c = circle_curve(CENTRE, 1.0, 128)
        out = interface_points(FlowMap.identity(grid), c, grid)
        assert out.area() == pytest.approx(c.area(), rel=1e-10)
        np.testing.assert_allclose(np.hypot(out.points[:, 0] - math.pi, out.points[:, 1] - math.pi),
                                   1.0, atol=1e-10)
