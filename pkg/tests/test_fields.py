"""Coefficient fields and normalized reflection directions."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reflectsim.errors import InvalidReflectionError, OutsideValidityError
from reflectsim.fields import (AffineCoefficients, ConstantCoefficients,
                               TabulatedCoefficients, coefficients_from_config,
                               constant_reflection, normal_reflection,
                               normalize_reflection, reflection_from_config,
                               tangential_reflection)
from reflectsim.geometry import Ball, HalfSpace

HALF = HalfSpace(axis=1, offset=0.0, dimension=2)
BALL = Ball(center=(0.0, 0.0), radius=1.0)


class TestNormalizeReflection:
    def test_halfspace_constant(self):
        r = constant_reflection(HALF, (1.0, 2.0))
        np.testing.assert_allclose(r.at_boundary(np.array([3.0, 0.0])),
                                   [0.5, 1.0], atol=1e-14)

    def test_ball_inward_radial_already_normalized(self):
        r = normalize_reflection(lambda p: -np.asarray(p), BALL)
        p = BALL.sample_boundary(100, seed=1)
        np.testing.assert_allclose(r.at_boundary(p), -p, atol=1e-12)

    def test_tangential_raw_rejected(self):
        r = constant_reflection(HALF, (1.0, 0.0))
        with pytest.raises(InvalidReflectionError):
            r.at_boundary(np.array([0.0, 0.0]))

    def test_outward_raw_rejected(self):
        r = constant_reflection(HALF, (0.0, -1.0))
        with pytest.raises(InvalidReflectionError):
            r.at_boundary(np.array([0.0, 0.0]))

    def test_idempotent(self):
        r = constant_reflection(HALF, (1.0, 2.0))
        p = np.array([0.0, 0.0])
        again = normalize_reflection(lambda q: r.at_boundary(q), HALF)
        np.testing.assert_array_equal(again.at_boundary(p), r.at_boundary(p))

    def test_unit_inner_product_with_normal(self):
        for dom, r in [(HALF, constant_reflection(HALF, (0.7, 1.3))),
                       (BALL, normal_reflection(BALL)),
                       (BALL, tangential_reflection(BALL, 0.5))]:
            p = dom.sample_boundary(500, seed=2)
            vals = r.at_boundary(p)
            rn = np.sum(vals * np.stack([dom.inward_normal(q) for q in p]),
                        axis=-1)
            np.testing.assert_allclose(rn, 1.0, atol=1e-10)

    def test_norm_at_least_one(self):
        for dom, r in [(HALF, constant_reflection(HALF, (2.0, 0.5))),
                       (BALL, tangential_reflection(BALL, -1.7)),
                       (BALL, normal_reflection(BALL))]:
            p = dom.sample_boundary(500, seed=4)
            assert np.all(np.linalg.norm(r.at_boundary(p), axis=-1) >= 1.0 - 1e-12)


class TestUnitDirection:
    def test_halfspace_constant(self):
        r = constant_reflection(HALF, (1.0, 1.0))
        for x in ([0.0, 0.5], [-2.0, -0.01], [7.0, 0.0001]):
            np.testing.assert_allclose(r.unit_direction(np.array(x)),
                                       np.array([1.0, 1.0]) / np.sqrt(2.0),
                                       atol=1e-12)

    def test_ball_normal_reflection(self):
        r = normal_reflection(BALL)
        np.testing.assert_allclose(r.unit_direction(np.array([0.5, 0.0])),
                                   [-1.0, 0.0], atol=1e-12)

    def test_ball_oblique_with_tangent_cross_check(self):
        # r(p) = -p + 0.5 t(p) with t the CCW rotation of the inward normal;
        # at y((0, 0.9)) = (0, 1) this gives (0, -1) + 0.5 (1, 0), so the
        # unit direction is (0.5, -1)/sqrt(1.25).
        def raw(p):
            p = np.asarray(p, dtype=np.float64)
            n = -p
            tang = np.stack([-n[..., 1], n[..., 0]], axis=-1)
            return n + 0.5 * tang

        r = normalize_reflection(raw, BALL)
        u = r.unit_direction(np.array([0.0, 0.9]))
        expect = np.array([0.5, -1.0]) / np.linalg.norm([0.5, -1.0])
        np.testing.assert_allclose(u, expect, atol=1e-10)

        # The library's tangential builder follows the same convention.
        np.testing.assert_allclose(
            tangential_reflection(BALL, 0.5).unit_direction(np.array([0.0, 0.9])),
            expect, atol=1e-10)

        # Finite-sample cross-check that the tangent really is the unit
        # boundary direction at (0, 1), up to orientation: difference of two
        # nearby boundary points, orthogonal to the normal.
        h = 1e-6
        p1 = np.array([np.sin(h), np.cos(h)])
        p0 = np.array([-np.sin(h), np.cos(h)])
        tangent = (p1 - p0) / np.linalg.norm(p1 - p0)
        assert abs(abs(tangent @ np.array([1.0, 0.0])) - 1.0) < 1e-6
        assert abs(tangent @ BALL.inward_normal(np.array([0.0, 1.0]))) < 1e-6

    def test_unit_norm(self):
        r = tangential_reflection(BALL, 0.8)
        rs = np.random.default_rng(0)
        pts = rs.normal(0.0, 1.0, size=(300, 2))
        pts = pts[np.abs(BALL.signed_distance(pts)) < 0.5]
        u = np.stack([r.unit_direction(x) for x in pts])
        np.testing.assert_allclose(np.linalg.norm(u, axis=-1), 1.0, atol=1e-12)

    def test_constant_along_normal_segments(self):
        r = tangential_reflection(BALL, 0.5)
        for seed in range(20):
            p = BALL.sample_boundary(1, seed=seed)[0]
            n = BALL.inward_normal(p)
            vals = [r.unit_direction(p + s * n) for s in (0.05, 0.2, 0.45, -0.05)]
            for v in vals[1:]:
                np.testing.assert_allclose(v, vals[0], atol=1e-10)

    def test_constant_value_fast_path_matches(self):
        r = constant_reflection(HALF, (0.3, 1.5))
        assert r.constant_over_boundary
        np.testing.assert_array_equal(r.constant_value(),
                                      r.at_boundary(np.array([9.0, 0.0])))
        assert not normal_reflection(BALL).constant_over_boundary


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(0.01, 5))
def test_normalization_property_halfspace(a, b):
    r = constant_reflection(HALF, (a, b))
    val = r.at_boundary(np.array([0.0, 0.0]))
    assert val[1] == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(val) >= 1.0 - 1e-12


class TestCoefficientFields:
    def test_constant_evaluation(self):
        c = ConstantCoefficients([1.0, -2.0], [[2.0, 0.0], [0.0, 0.5]])
        x = np.zeros((7, 2))
        np.testing.assert_array_equal(c.drift(x), np.tile([1.0, -2.0], (7, 1)))
        assert c.diffusion(x).shape == (7, 2, 2)
        assert c.constant_drift and c.constant_diffusion

    def test_scalar_diffusion_means_multiple_of_identity(self):
        c = ConstantCoefficients([0.0, 0.0], 3.0)
        np.testing.assert_array_equal(c.diffusion_matrix, 3.0 * np.eye(2))

    def test_singular_diffusion_rejected(self):
        with pytest.raises(ValueError):
            ConstantCoefficients([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])

    def test_zero_diffusion_admitted_as_degenerate_case(self):
        c = ConstantCoefficients([1.0, 0.0], 0.0)
        np.testing.assert_array_equal(c.diffusion_matrix, np.zeros((2, 2)))

    def test_affine_drift(self):
        c = AffineCoefficients([1.0, 0.0], [[0.0, 1.0], [-1.0, 0.0]], 1.0)
        np.testing.assert_allclose(c.drift(np.array([2.0, 3.0])), [4.0, -2.0])
        x = np.array([[2.0, 3.0], [0.0, 0.0]])
        np.testing.assert_allclose(c.drift(x), [[4.0, -2.0], [1.0, 0.0]])

    def test_sigma_perturbation_family(self):
        c = ConstantCoefficients([0.0, 0.0], 1.0, sigma_perturbation_scale=0.5)
        x = np.zeros(2)
        np.testing.assert_allclose(c.diffusion_at_index(x, 4),
                                   (1.0 + 0.125) * np.eye(2))
        base = ConstantCoefficients([0.0, 0.0], 1.0)
        np.testing.assert_array_equal(base.diffusion_at_index(x, 4),
                                      base.diffusion(x))

    def test_tabulated_validity_box(self):
        ax = [np.linspace(-1, 1, 5), np.linspace(-1, 1, 5)]
        bv = np.zeros((5, 5, 2))
        sv = np.broadcast_to(np.eye(2), (5, 5, 2, 2)).copy()
        c = TabulatedCoefficients(ax, bv, sv)
        np.testing.assert_allclose(c.drift(np.array([0.3, -0.2])), [0.0, 0.0])
        with pytest.raises(OutsideValidityError):
            c.drift(np.array([1.5, 0.0]))

    def test_config_round_trip(self):
        for c in [ConstantCoefficients([1.0, 2.0], [[1.0, 0.2], [0.0, 1.0]]),
                  AffineCoefficients([0.0, 1.0], [[1.0, 0.0], [0.0, 1.0]], 2.0)]:
            clone = coefficients_from_config(c.to_config(), c.dimension)
            x = np.array([0.4, -0.7])
            np.testing.assert_array_equal(clone.drift(x), c.drift(x))
            np.testing.assert_array_equal(clone.diffusion(x), c.diffusion(x))


class TestReflectionConfig:
    def test_round_trip(self):
        for r in [constant_reflection(HALF, (1.0, 1.0)),
                  normal_reflection(BALL),
                  tangential_reflection(BALL, 0.25)]:
            clone = reflection_from_config(r.to_config(), r.domain)
            p = r.domain.sample_boundary(10, seed=7)
            np.testing.assert_allclose(clone.at_boundary(p), r.at_boundary(p),
                                       atol=1e-14)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            reflection_from_config({"kind": "mystery"}, HALF)
