"""Spectra of 1D Schrodinger operators -mu Psi'' + V Psi = lambda Psi on a
disjoint union of compact intervals, for the self-adjoint realization
selected by a unitary boundary matrix U, with an independent
spectral-determinant cross-check."""

__version__ = "0.1.0"

from .boundary import (
    BoundaryCondition,
    BoundarySystem,
    BoundaryTrace,
    BoundaryValues,
    ConditionFailure,
    ConditionReport,
    assemble_boundary_system,
    condition_report,
    endpoint_to_block_permutation,
    random_unitary,
    retry_mesh_on_bad_conditioning,
    solve_boundary_values,
)
from .eigen import (
    EigenSolution,
    EigenSolveError,
    PositiveDefinitenessError,
    eigenfunction_samples,
    h1_error,
    solve_pencil,
)
from .fem import (
    AssemblyError,
    BasisIndex,
    BasisMap,
    Pencil,
    assemble_pencil,
    eval_boundary,
    eval_bulk,
    structural_sparsity,
)
from .geometry import GeometryError, IntervalSet, Mesh, build_mesh
from .potentials import (
    CallablePotential,
    ConstantPotential,
    Potential,
    PotentialError,
    SampledPotential,
    ZeroPotential,
)
from .spectral import (
    FundamentalTraces,
    SpectralMatrix,
    find_spectrum,
    fundamental_traces,
    hadamard_mat,
    hadamard_vec,
    odot,
    spectral_det,
    spectral_det_closed_1,
    spectral_det_parametrized,
    spectral_matrix,
    unitary_from_su2_phase,
)

__all__ = [
    "__version__",
    "AssemblyError",
    "BasisIndex",
    "BasisMap",
    "BoundaryCondition",
    "BoundarySystem",
    "BoundaryTrace",
    "BoundaryValues",
    "CallablePotential",
    "ConditionFailure",
    "ConditionReport",
    "ConstantPotential",
    "EigenSolution",
    "EigenSolveError",
    "FundamentalTraces",
    "GeometryError",
    "IntervalSet",
    "Mesh",
    "Pencil",
    "Potential",
    "PotentialError",
    "PositiveDefinitenessError",
    "SampledPotential",
    "SpectralMatrix",
    "ZeroPotential",
    "assemble_boundary_system",
    "assemble_pencil",
    "build_mesh",
    "condition_report",
    "eigenfunction_samples",
    "endpoint_to_block_permutation",
    "eval_boundary",
    "eval_bulk",
    "find_spectrum",
    "fundamental_traces",
    "h1_error",
    "hadamard_mat",
    "hadamard_vec",
    "odot",
    "random_unitary",
    "retry_mesh_on_bad_conditioning",
    "solve_boundary_values",
    "solve_pencil",
    "spectral_det",
    "spectral_det_closed_1",
    "spectral_det_parametrized",
    "spectral_matrix",
    "structural_sparsity",
    "unitary_from_su2_phase",
]
