"""
Veselova system: phi recovered up to a constant
===============================================

The Veselova rigid body uses Euler angles (beta, gamma, alpha) with the
shape (beta, gamma) as base.  Its phi is known in closed form, and the value
recovered by integrating dphi from a basepoint must differ from it by a
single constant.
"""

import numpy as np

from nhgeo.chaplygin import recover_phi
from nhgeo.systems import SystemDescriptor, build
from nhgeo.verify import run_suite

ves = build(SystemDescriptor("veselova", {"I1": 1.0, "I2": 2.0, "I3": 3.0}))
box = ves.sample_box[:2]
base = box.mean(axis=1)

rng = np.random.default_rng(1)
diffs = []
for qb in rng.uniform(box[:, 0], box[:, 1], size=(8, 2)):
    phi = recover_phi(ves, base, qb)
    exact = float(ves.analytic_phi(qb))
    diffs.append(phi - exact)
    print(f"qbar={np.round(qb, 3)}  recovered={phi:+.9f}  closed form={exact:+.9f}  diff={phi - exact:+.9f}")
print("spread of the differences:", max(diffs) - min(diffs))

# the full suite; it takes several seconds
report = run_suite(ves, seed=0)
for check in report.checks:
    print(f"{check.name:28s} {'pass' if check.passed else 'FAIL'}  {check.residual:.2e} / {check.tolerance:.0e}")
