"""Nonholonomic Chaplygin systems as time-reparametrized Riemannian geodesics.

Submodules: ``kernel`` (differentiation, linear solves, ODE stepping),
``geometry`` (fields, metrics, Christoffel symbols), ``chaplygin`` (bundle
data, gyroscopic tensor, phi, canonical and principal metrics),
``dynamics`` (nonholonomic and mechanical integration, time map),
``verify`` (numerical certificates), ``systems`` (built-in examples) and
``cli``.
"""

from .errors import NhGeoError
from .systems import SystemDescriptor, build

__version__ = "0.1.0"

__all__ = ["NhGeoError", "SystemDescriptor", "build", "__version__"]
