"""Boundary control of viscous shallow water through its quasi-solutions.

The depth of an irrotational quasi-solution solves a Dirichlet-controlled heat
equation; a backward heat solution with a Dirac-combination final datum then
certifies that certain states cannot be reached with positive controls.
"""

__version__ = "0.1.0"
