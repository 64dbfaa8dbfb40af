"""
Nonholonomic particle: trajectories are reparametrized geodesics
================================================================

The particle in R^3 with constraint dz = y dx has phi = -1/2 ln(1 + y^2).
Its gyroscopic tensor gives dphi pointwise, phi follows by integration, and
the h-geodesic through the same point with rescaled velocity traces the
same curve on the time scale tau(t) = int exp(phi) dt.
"""

import math

import numpy as np

from nhgeo.chaplygin import gyroscopic_tensor, horizontal_lift, principal_metric, recover_dphi, recover_phi
from nhgeo.dynamics import integrate_geodesic, integrate_nonholonomic, time_map
from nhgeo.kernel import OdeStepper
from nhgeo.systems import build
from nhgeo.verify import check_equivalence

particle = build("nonholonomic-particle")

# phi from the gyroscopic tensor
for qb in ([0.0, 0.0], [0.5, 1.0], [-1.0, 2.0]):
    qb = np.array(qb)
    dphi, res = recover_dphi(gyroscopic_tensor(particle, qb))
    phi = recover_phi(particle, np.zeros(2), qb)
    print(f"qbar={qb}  dphi={dphi}  phi={phi:.10f}  exact={-0.5 * math.log(1 + qb[1] ** 2):.10f}")

# principal metric at y = 1
print("h at (0, 1, 0)\n", principal_metric(particle)(np.array([0.0, 1.0, 0.0])))

# the time map for y(t) = t
c = integrate_nonholonomic(particle, np.zeros(3), np.array([0.0, 1.0, 0.0]), 1.0, OdeStepper("rk4", 1e-3))
print("tau(1) =", time_map(particle, c)(1.0), " asinh(1) =", math.asinh(1.0))

# nonholonomic run against the rescaled h-geodesic
q0 = np.zeros(3)
v0 = horizontal_lift(particle, q0, np.array([1.0, 1.0]))
c = integrate_nonholonomic(particle, q0, v0, 5.0, OdeStepper("rk4", 1e-3))
tm = time_map(particle, c)
g = integrate_geodesic(principal_metric(particle), q0, v0, float(tm.tau[-1]), OdeStepper("rk4", 1e-3))
print("c(5) =", c.q[-1], " gamma(tau(5)) =", g.q[-1])

res = check_equivalence(particle, q0, v0, 5.0, OdeStepper("rk4", 1e-3))
print("equivalence residual over [0, 5]:", res.residual)
