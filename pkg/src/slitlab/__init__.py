"""Numerical laboratory for Dirichlet eigenvalues under removal of a small slit.

Pipeline: mesh a planar domain with the slit embedded as graded mesh
edges, assemble P1 stiffness/mass operators, solve the eigenproblems
with and without the slit constraint, compute capacitary potentials,
and compare measured eigenvalue shifts against closed-form predictions.
"""

__version__ = "0.1.0"
