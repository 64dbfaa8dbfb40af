"""
Vertical rolling disk: nonholonomic motion as a geodesic
========================================================

The disk has phi = 0, so the canonical reduced metric is the reduced metric
itself and the time map is the identity.  Its nonholonomic trajectories are
then geodesics of the principal metric h with no reparametrization at all.
"""

import numpy as np

from nhgeo.chaplygin import principal_metric
from nhgeo.dynamics import integrate_geodesic, integrate_nonholonomic, time_map
from nhgeo.kernel import OdeStepper
from nhgeo.systems import build
from nhgeo.verify import benchmark_state

disk = build("vertical-disk")
print(disk.name, "params", disk.params)

# chart (theta, phi, x, y); base coordinates (theta, phi) come first
q0, v0 = benchmark_state(disk)
print("initial state", q0, v0)

# h at a point: blocks of g_can on the base, g on the fibres
H = principal_metric(disk)
print("h at q0\n", np.round(H(q0), 12))

stepper = OdeStepper("rk4", 1e-3)
c = integrate_nonholonomic(disk, q0, v0, 10.0, stepper)
g = integrate_geodesic(H, q0, v0, 10.0, stepper)
print("sup |c - gamma| over [0, 10]:", np.max(np.abs(c.q - g.q)))

tm = time_map(disk, c)
print("max |tau(t) - t|:", np.max(np.abs(tm.tau - c.times)))

# the contact point traces a circle of radius R / phi_dot
print("final contact point", c.q[-1, 2:])
