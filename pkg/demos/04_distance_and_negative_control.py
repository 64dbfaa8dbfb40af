"""
Distances and a system that is not phi-simple
=============================================

For short times the h-length of a nonholonomic arc equals the h-distance
between its endpoints, found here by shooting an h-geodesic.  A corrupted particle whose constraint
no longer matches its phi breaks the equivalence, and the suite reports it.
"""

from nhgeo.dynamics import integrate_nonholonomic
from nhgeo.kernel import OdeStepper
from nhgeo.systems import build, build_corrupted_particle
from nhgeo.verify import benchmark_state, check_distance, run_suite

for name in ("vertical-disk", "nonholonomic-particle"):
    sys_ = build(name)
    q0, v0 = benchmark_state(sys_)
    c = integrate_nonholonomic(sys_, q0, v0, 0.3, OdeStepper("rk4", 1e-3))
    r = check_distance(sys_, c, 0.3)
    print(f"{name:24s} L={r.details['length']:.10f}  d={r.details['distance']:.10f}  |L-d|={r.residual:.2e}")

report = run_suite(build_corrupted_particle(), seed=0)
print("corrupted particle passed:", report.passed)
for check in report.checks:
    if not check.passed:
        print(f"  failed {check.name}: {check.residual:.2e} > {check.tolerance:.0e}")
