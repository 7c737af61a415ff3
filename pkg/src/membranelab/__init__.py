"""Numerical laboratory for the N-membrane obstacle system.

Solves the constrained variational problem for stacks of elastic membranes
on uniform lattices, evaluates the closed-form homogeneous solutions of the
three-membrane system, extracts and classifies free-boundary intersection
points, and measures the associated energy monotonicity and regularity
phenomena at desk scale.
"""

__version__ = "0.1.0"
