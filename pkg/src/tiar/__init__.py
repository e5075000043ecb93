"""Tensor infinite Arnoldi solvers for nonlinear eigenvalue problems,
with a specialization to periodic waveguides with DtN boundary conditions."""

from .arnoldi import (
    ArnoldiRun,
    BasisTensor,
    HessenbergState,
    RitzPair,
    RitzReport,
    iar_run,
    ritz_values,
    tiar_run,
)
from .nep import (
    CayleyShift,
    NepProblem,
    PolynomialNep,
    PoleError,
    SingularMatrixError,
    cayley_forward,
    cayley_inverse,
)
from .waveguide import (
    BranchError,
    DiscretizationGrid,
    GeometryError,
    WaveguideGeometry,
    WaveguideNep,
    assemble_fem,
    load_geometry,
    load_preset,
)
from .wtiar import CayleyNEP, alpha_recursion, wtiar_run

__version__ = "0.1.0"

__all__ = [
    "ArnoldiRun", "BasisTensor", "BranchError", "CayleyNEP", "CayleyShift",
    "DiscretizationGrid", "GeometryError", "HessenbergState", "NepProblem",
    "PoleError", "PolynomialNep", "RitzPair", "RitzReport",
    "SingularMatrixError", "WaveguideGeometry", "WaveguideNep",
    "alpha_recursion", "assemble_fem", "cayley_forward", "cayley_inverse",
    "iar_run", "load_geometry", "load_preset", "ritz_values", "tiar_run",
    "wtiar_run",
]
