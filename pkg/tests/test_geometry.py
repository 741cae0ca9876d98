from __future__ import annotations

import json
import math

import numpy as np
import pytest
from conftest import random_shell
from hypothesis import given
from hypothesis import strategies as st

import oracles
from illumwave.errors import DomainError
from illumwave.geometry import (
    IlluminatingBody,
    IlluminatingCoords,
    decompose_gradient,
    from_illuminating_coords,
    invert,
    jacobian_metric,
    region_predicates,
    surface_frame,
    to_illuminating_coords,
)
from illumwave.geometry.bodies import frame_at, sum_radius

SPHERE = IlluminatingBody.sphere(1.0)
PROLATE = IlluminatingBody.spheroid([1.0, 1.0, 2.0])
OBLATE = IlluminatingBody.spheroid([2.0, 2.0, 1.0])
OFFSET = IlluminatingBody.spheroid([1.0, 1.0, 1.3], center=[0.4, -0.2, 0.7])
BODIES = {"sphere": SPHERE, "prolate": PROLATE, "oblate": OBLATE, "offset": OFFSET}


def coords(body, s, th, ph):
    s1, s2 = body.sigma(np.asarray(th, float), np.asarray(ph, float))
    s = np.asarray(s, float)
    return IlluminatingCoords(np.zeros(s.shape, np.int64), s, np.asarray(s1, float), np.asarray(s2, float))


# -------------------------------------------------------------- frames


def test_unit_sphere_equator_frame():
    f = surface_frame(SPHERE, 0, np.array([math.pi / 2, 0.0]))
    assert f.kappa1 == pytest.approx(1.0) and f.kappa2 == pytest.approx(1.0)
    np.testing.assert_allclose(f.nu, [1, 0, 0], atol=1e-15)
    assert f.Lambda == pytest.approx(np.linalg.norm(f.X_s1) * np.linalg.norm(f.X_s2))
    assert SPHERE.rho2M == 1.0


@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 4, 1.2, math.pi / 2])
def test_prolate_curvatures_match_revolution_oracle(theta, frozen):
    f = surface_frame(PROLATE, 0, np.array([0.7, theta]))  # prolate: sigma = (phi, theta)
    k_mer, k_par = frozen["curvatures_prolate_1_1_2"][f"{theta:.6f}"]
    # prolate ordering puts the parallel curvature first
    assert f.kappa1 == pytest.approx(k_par, abs=1e-8)
    assert f.kappa2 == pytest.approx(k_mer, abs=1e-8)
    assert (k_mer, k_par) == pytest.approx(oracles.revolution_curvatures(1.0, 2.0, theta), abs=1e-12)


def test_patch_bounds_enforced():
    with pytest.raises(DomainError, match="outside patch"):
        surface_frame(SPHERE, 0, np.array([4.0, 0.0]))
    with pytest.raises(DomainError):
        surface_frame(SPHERE, 3, np.array([1.0, 0.0]))


@pytest.mark.parametrize("name", ["prolate", "oblate", "offset"])
def test_rho2M_is_max_principal_radius(name):
    body = BODIES[name]
    th = np.linspace(1e-3, math.pi - 1e-3, 2001)
    f = surface_frame(body, 0, np.stack(body.sigma(th, 0.3 * np.ones_like(th)), axis=-1))
    assert np.max(np.maximum(f.rho1, f.rho2)) == pytest.approx(body.rho2M, rel=1e-6)
    assert np.all(f.rho1 <= body.rho2M + 1e-12) and np.all(f.rho2 <= body.rho2M + 1e-12)


# -------------------------------------------------------- coordinate map


def test_forward_map_radial_examples():
    c = coords(SPHERE, [1.0, 0.0, -0.5], [math.pi / 2] * 3, [0.0] * 3)
    np.testing.assert_allclose(from_illuminating_coords(SPHERE, c), [[2, 0, 0], [1, 0, 0], [0.5, 0, 0]], atol=1e-15)


def test_inverse_examples():
    c = to_illuminating_coords(SPHERE, np.array([2.0, 0.0, 0.0]))
    th, ph = SPHERE.theta_phi(c.sigma1, c.sigma2)
    assert c.s == pytest.approx(1.0) and th == pytest.approx(math.pi / 2) and ph == pytest.approx(0.0)


@pytest.mark.parametrize("body", [PROLATE, OBLATE])
@pytest.mark.parametrize("zsign", [1.0, -1.0])
def test_axis_point_maps_to_pole(body, zsign):
    x = np.array([0.0, 0.0, zsign * 3.5])
    c = to_illuminating_coords(body, x)
    th, _ = body.theta_phi(c.sigma1, c.sigma2)
    assert th == pytest.approx(0.0 if zsign > 0 else math.pi, abs=1e-12)
    assert c.s == pytest.approx(3.5 - body.c, abs=1e-12)


@pytest.mark.parametrize("name", list(BODIES))
def test_round_trip_1e4_points(name, rng):
    body = BODIES[name]
    x = body.center + random_shell(rng, 10_000, 1.05 * max(body.a, body.c), 10.0)
    c = to_illuminating_coords(body, x)
    err = np.linalg.norm(from_illuminating_coords(body, c) - x, axis=1)
    assert err.max() <= 1e-10 * (1 + np.linalg.norm(x, axis=1)).min()


@pytest.mark.parametrize("key,a,c", [("feet_prolate_1_1_2", 1.0, 2.0), ("feet_oblate_2_2_1", 2.0, 1.0)])
def test_inversion_matches_nearest_point_oracle(frozen, key, a, c):
    body = IlluminatingBody.spheroid([a, a, c])
    for p, (th, ph, s) in frozen[key].items():
        x = np.array(json.loads(p))
        got = to_illuminating_coords(body, x)
        gth, gph = body.theta_phi(got.sigma1, got.sigma2)
        assert got.s == pytest.approx(s, abs=1e-8)
        np.testing.assert_allclose(oracles.spheroid_point(a, c, float(gth), float(gph)), oracles.spheroid_point(a, c, th, ph), atol=1e-7)


@given(
    st.floats(0.05, 8.0),
    st.floats(0.0, math.pi),
    st.floats(-math.pi, math.pi),
    st.sampled_from(["sphere", "prolate", "oblate", "offset"]),
)
def test_round_trip_property(s, th, ph, name):
    body = BODIES[name]
    c = coords(body, s, th, ph)
    x = from_illuminating_coords(body, c)
    back = to_illuminating_coords(body, x)
    assert back.s == pytest.approx(s, abs=1e-9)
    np.testing.assert_allclose(from_illuminating_coords(body, back), x, atol=1e-10 * (1 + np.linalg.norm(x)))


def test_degenerate_ray_rejected():
    # prolate pole: kappa = c/a² = 2, so s = -0.6 gives kappa*s + 1 < 0
    c = coords(PROLATE, -0.6, 0.0, 0.0)
    with pytest.raises(DomainError, match="degenerate"):
        from_illuminating_coords(PROLATE, c)
    with pytest.raises(DomainError):
        jacobian_metric(PROLATE, c)


def test_invert_reports_status_for_center():
    _, status = invert(SPHERE, np.zeros((1, 3)))
    assert status[0] == 0
    with pytest.raises(DomainError):
        to_illuminating_coords(SPHERE, np.zeros(3))


# ----------------------------------------------------- Rodrigues, Jacobian


def _frames_random(body, rng, n):
    th = rng.uniform(0.05, math.pi - 0.05, n)
    ph = rng.uniform(-math.pi + 0.05, math.pi - 0.05, n)
    return th, ph


@pytest.mark.parametrize("name", list(BODIES))
def test_rodrigues(name, rng):
    body = BODIES[name]
    th, ph = _frames_random(body, rng, 1000)
    s1, s2 = body.sigma(th, ph)
    sig = np.stack([s1, s2], axis=-1)
    f = surface_frame(body, 0, sig)
    d = 1e-5
    for i, (X_si, k) in enumerate(((f.X_s1, f.kappa1), (f.X_s2, f.kappa2))):
        step = np.zeros(2)
        step[i] = d
        dnu = (surface_frame(body, 0, sig + step).nu - surface_frame(body, 0, sig - step).nu) / (2 * d)
        assert np.max(np.abs(dnu - k[:, None] * X_si)) <= 1e-6


@pytest.mark.parametrize("name", list(BODIES))
def test_jacobian_matches_numerical_determinant(name, rng):
    body = BODIES[name]
    th, ph = _frames_random(body, rng, 1000)
    s = rng.uniform(-0.3 * min(body.a, body.c) ** 2 / max(body.a, body.c), 5.0, 1000)
    c = coords(body, s, th, ph)
    _, _, J = jacobian_metric(body, c)
    d = 1e-5

    def X(ds=0.0, d1=0.0, d2=0.0):
        return from_illuminating_coords(
            body, IlluminatingCoords(c.patch, c.s + ds, c.sigma1 + d1, c.sigma2 + d2)
        )

    cols = [
        (X(ds=d) - X(ds=-d)) / (2 * d),
        (X(d1=d) - X(d1=-d)) / (2 * d),
        (X(d2=d) - X(d2=-d)) / (2 * d),
    ]
    det = np.abs(np.linalg.det(np.stack(cols, axis=-1)))
    assert np.max(np.abs(J - det) / det) <= 1e-6


def test_jacobian_trivial_cases():
    c = coords(SPHERE, [1.0, 0.0], [1.0, 1.0], [0.2, 0.2])
    n1, n2, J = jacobian_metric(SPHERE, c)
    f = frame_at(SPHERE, c)
    assert J[0] == pytest.approx(4 * f.Lambda[0])
    assert J[1] == pytest.approx(f.Lambda[1])
    assert n1[0] == pytest.approx(2 * np.linalg.norm(f.X_s1[0]))


# -------------------------------------------------------- decomposition


def test_decompose_gradient_trivial():
    c = coords(SPHERE, 0.5, 1.0, 0.3)
    f = frame_at(SPHERE, c)
    ds, d1, d2 = decompose_gradient(f.nu, f, c)
    assert (float(ds), float(d1), float(d2)) == pytest.approx((1.0, 0.0, 0.0), abs=1e-15)
    assert decompose_gradient(np.zeros(3), f, c) == (0.0, 0.0, 0.0)


@given(st.floats(0.05, math.pi - 0.05), st.floats(-3.0, 3.0), st.sampled_from(["prolate", "oblate", "offset"]), st.integers(0, 2**31))
def test_decomposition_is_orthonormal(th, ph, name, seed):
    body = BODIES[name]
    e = np.random.default_rng(seed).standard_normal(3)
    e /= np.linalg.norm(e)
    f = frame_at(body, coords(body, 0.7, th, ph))
    ds, d1, d2 = decompose_gradient(e, f)
    assert ds**2 + d1**2 + d2**2 == pytest.approx(1.0, abs=1e-12)


# ------------------------------------------------------- sphere reduction


def test_sphere_sum_radius_is_r(rng):
    body = IlluminatingBody.sphere(1.7)
    x = random_shell(rng, 10_000, 0.2, 10.0)
    sr, nu, status = sum_radius(body, x)
    assert np.all(status == 1)
    assert np.max(np.abs(sr - np.linalg.norm(x, axis=1))) <= 1e-10


def test_region_predicates():
    c = to_illuminating_coords(SPHERE, np.array([[3.0, 0, 0], [3.01, 0, 0]]))
    inside, mantle = region_predicates(SPHERE, c, 2.0, 1.0, h=0.05)
    assert inside.tolist() == [True, False]
    assert mantle.tolist() == [True, True]


def test_region_predicates_spheroid_agree_with_coordinates(rng):
    x = OFFSET.center + random_shell(rng, 500, 1.5, 6.0)
    c = to_illuminating_coords(OFFSET, x)
    inside, _ = region_predicates(OFFSET, c, 2.0, OFFSET.rho2M)
    sr, _, _ = sum_radius(OFFSET, x)
    assert np.array_equal(inside, sr <= 2.0 + OFFSET.rho2M)
