"""Numerics for linear-growth energies on bounded-deformation fields.

Dense symmetric/skew matrix algebra, synthetic BD fields with exact
E-measure decomposition, rigid-motion projection, Dirichlet cell solvers,
relaxed density estimators (bulk / jump / recession / homogenized), blow-up
normalization algebra, and an integral-representation assembler, all in two
space dimensions at desk scale.
"""

__version__ = "0.1.0"
