import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nhgeo.chaplygin import BundleSystem, horizontal_lift, principal_metric
from nhgeo.dynamics import (
    Trajectory,
    integrate_geodesic,
    integrate_mechanical,
    integrate_nonholonomic,
    lda_rhs,
    time_map,
)
from nhgeo.errors import ConstraintViolated, SingularSaddle
from nhgeo.geometry import Distribution, MetricField, kinetic_energy
from nhgeo.kernel import OdeStepper
from nhgeo.systems import SystemDescriptor, build

EUCLID3 = MetricField(lambda q: np.broadcast_to(np.eye(3), q.shape[:-1] + (3, 3)).copy(), 3)


@pytest.fixture(scope="module")
def disk():
    return build(SystemDescriptor("vertical-disk"))


@pytest.fixture(scope="module")
def particle():
    return build(SystemDescriptor("nonholonomic-particle"))


def flat_system(forms):
    k = 3 - np.asarray(forms).shape[0]
    return BundleSystem("flat", 3, k, EUCLID3,
                        Distribution(3, k, forms=lambda q: np.broadcast_to(forms, q.shape[:-1] + forms.shape)),
                        section_fiber=(0.0,) * (3 - k))


# --------------------------------------------------------------------------
# Lagrange-d'Alembert right-hand side
# --------------------------------------------------------------------------

def test_lda_particle(particle):
    res = lda_rhs(particle, np.array([0.0, 1.0, 0.0]), np.ones(3))
    np.testing.assert_allclose(res.acceleration, [-0.5, 0.0, 0.5], atol=1e-10)
    assert res.multipliers.shape == (1,)
    # flat metric: the reaction g(qdd) equals lambda times the row dz - y dx
    np.testing.assert_allclose(res.acceleration, res.multipliers[0] * np.array([-1.0, 0.0, 1.0]), atol=1e-10)


def test_lda_disk(disk):
    # chart (theta, phi, x, y): theta_dot = phi_dot = 1, x_dot = R = 1, y_dot = 0 at phi = 0
    res = lda_rhs(disk, np.zeros(4), np.array([1.0, 1.0, 1.0, 0.0]))
    np.testing.assert_allclose(res.acceleration, [0.0, 0.0, 0.0, 1.0], atol=1e-10)


def test_lda_flat_constraints():
    sys = flat_system(np.array([[0.0, 0.0, 1.0]]))
    res = lda_rhs(sys, np.array([0.3, 0.1, 0.0]), np.array([1.0, -2.0, 0.0]))
    np.testing.assert_allclose(res.acceleration, 0.0, atol=1e-14)


def test_lda_singular_saddle():
    sys = flat_system(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]))
    with pytest.raises(SingularSaddle):
        lda_rhs(sys, np.zeros(3), np.array([1.0, 0.0, 0.0]))


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.0, 2.0), arrays(float, 2, elements=st.floats(-2.0, 2.0)))
def test_lda_particle_closed_form(particle, y, w):
    q = np.array([0.1, y, 0.4])
    v = horizontal_lift(particle, q, w)
    xd, yd = w
    expected = [-y * xd * yd / (1 + y * y), 0.0, xd * yd / (1 + y * y)]
    np.testing.assert_allclose(lda_rhs(particle, q, v).acceleration, expected, atol=1e-9)


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

def test_disk_angles_affine(disk):
    q0 = np.array([0.3, -0.2, 0.0, 0.0])
    v0 = horizontal_lift(disk, q0, np.array([0.7, 1.3]))
    c = integrate_nonholonomic(disk, q0, v0, 2.0, OdeStepper("rk4", 1e-2))
    np.testing.assert_allclose(c.q[:, 0], 0.3 + 0.7 * c.times, atol=1e-12)
    np.testing.assert_allclose(c.q[:, 1], -0.2 + 1.3 * c.times, atol=1e-12)


def test_particle_y_linear(particle):
    c = integrate_nonholonomic(particle, np.zeros(3), np.array([1.0, 1.0, 0.0]), 2.0, OdeStepper("rk4", 1e-2))
    np.testing.assert_allclose(c.q[:, 1], c.times, atol=1e-12)


def test_zero_velocity_constant(particle):
    q0 = np.array([0.5, -0.3, 1.0])
    c = integrate_nonholonomic(particle, q0, np.zeros(3), 1.0, OdeStepper("rk4", 0.1))
    np.testing.assert_array_equal(c.q, np.tile(q0, (len(c), 1)))


def test_initial_violation_rejected(particle):
    with pytest.raises(ConstraintViolated):
        integrate_nonholonomic(particle, np.zeros(3), np.ones(3), 1.0)


def test_small_violation_projected(particle):
    c = integrate_nonholonomic(particle, np.zeros(3), np.array([1.0, 1.0, 1e-7]), 0.01)
    assert particle.constraint_violation(c.q[0], c.v[0]) <= 1e-14


def test_euclidean_geodesic_line():
    g = integrate_geodesic(EUCLID3, np.zeros(3), np.array([1.0, 2.0, -1.0]), 1.0, OdeStepper("rk4", 0.1))
    np.testing.assert_allclose(g.q, np.outer(g.times, [1.0, 2.0, -1.0]), atol=1e-14)


def test_disk_h_geodesic(disk):
    R = disk.params["R"]
    H = principal_metric(disk)
    q0 = np.zeros(4)
    v0 = horizontal_lift(disk, q0, np.array([1.0, 0.8]))
    g = integrate_geodesic(H, q0, v0, 2.0, OdeStepper("rk4", 1e-3))
    np.testing.assert_allclose(g.q[:, 0], g.times, atol=1e-10)
    np.testing.assert_allclose(g.q[:, 1], 0.8 * g.times, atol=1e-10)
    # xdd = -R sin(phi) theta_dot phi_dot along the run
    k = len(g) // 2
    xdd = (g.v[k + 1, 2] - g.v[k - 1, 2]) / (g.times[k + 1] - g.times[k - 1])
    assert xdd == pytest.approx(-R * math.sin(g.q[k, 1]) * 0.8, abs=1e-6)


def test_particle_h_geodesic_initial_acc(particle):
    H = principal_metric(particle)
    g = integrate_geodesic(H, np.zeros(3), np.array([1.0, 1.0, 0.0]), 1e-3, OdeStepper("rk4", 1e-4))
    np.testing.assert_allclose((g.v[1] - g.v[0]) / 1e-4, [0.0, 0.0, 1.0], atol=1e-3)


def test_mechanical_energy(particle):
    H = principal_metric(particle)
    V = build(SystemDescriptor("nonholonomic-particle", potential="half-y-squared")).potential_on_q()
    g = integrate_mechanical(H, V, np.zeros(3), np.array([1.0, 0.5, 0.0]), 3.0, OdeStepper("rk4", 1e-3))
    E = kinetic_energy(H, g.q, g.v) + V(g.q)
    assert np.max(np.abs(E - E[0])) <= 1e-9


# --------------------------------------------------------------------------
# time map and trajectories
# --------------------------------------------------------------------------

def test_time_map_disk_identity(disk):
    c = integrate_nonholonomic(disk, np.zeros(4), horizontal_lift(disk, np.zeros(4), np.ones(2)), 1.0,
                               OdeStepper("rk4", 1e-2))
    tm = time_map(disk, c)
    assert np.max(np.abs(tm.tau - c.times)) <= 1e-12


def test_time_map_particle(particle):
    c = integrate_nonholonomic(particle, np.zeros(3), np.array([0.0, 1.0, 0.0]), 1.0, OdeStepper("rk4", 1e-3))
    tm = time_map(particle, c)
    assert tm.tau[0] == 0.0
    assert tm.strictly_increasing
    assert tm(1.0) == pytest.approx(math.asinh(1.0), abs=1e-10)


def test_time_map_nonuniform_grid(particle):
    c = integrate_nonholonomic(particle, np.zeros(3), np.array([0.0, 1.0, 0.0]), 1.0,
                               OdeStepper("rk4-doubling", 1e-2, 1e-12))
    assert time_map(particle, c)(1.0) == pytest.approx(math.asinh(1.0), abs=1e-8)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0]), np.zeros((2, 1)), np.zeros((3, 1)))


def test_trajectory_until_and_position():
    t = np.linspace(0.0, 1.0, 11)
    tr = Trajectory(t, t[:, None] ** 2, 2 * t[:, None])
    assert tr.until(0.5).T == pytest.approx(0.5)
    assert tr.position(0.25)[0, 0] == pytest.approx(0.0625, abs=1e-15)
