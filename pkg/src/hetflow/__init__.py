"""Numerical laboratory for curve-shortening flow with a bounded periodic forcing.

Modules:

* :mod:`hetflow.forcing` periodic forcing fields, mollification, directional averages
* :mod:`hetflow.curve_flow` parametric flow of closed polygons, blowup analysis
* :mod:`hetflow.graph_flow` graph formulation, weak solutions, comparison
* :mod:`hetflow.diagnostics` monitored functionals, Gaussian densities, residuals
* :mod:`hetflow.homogenization` eps-sweeps, wave speeds, effective speeds
* :mod:`hetflow.cli` command-line front end
"""

__version__ = "0.1.0"
