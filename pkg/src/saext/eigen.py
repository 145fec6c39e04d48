"""Deterministic solver for the hermitian pencil A Phi = lambda B Phi.

B is reduced by a Cholesky factorization B = L L^H, the hermitian matrix
L^{-1} A L^{-H} is diagonalized by the dense hermitian eigensolver, and the
eigenvectors are back-transformed.  This exploits hermiticity and positive
definiteness instead of running a general QZ iteration, and it makes the
eigenvectors B-orthonormal by construction.

Eigenvector phases are fixed by making the largest-magnitude coefficient
real and positive, so outputs are reproducible across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .boundary import BoundaryValues
from .fem import BasisMap, Pencil, boundary_node_values
from .geometry import Mesh

RESIDUAL_RTOL = 1e-10
DEGENERACY_RTOL = 1e-9  # eigenvalues this close count as one cluster


class EigenSolveError(RuntimeError):
    """The pencil could not be solved (bad inputs or failed factorization)."""


class PositiveDefinitenessError(EigenSolveError):
    """B is not positive definite.

    Attributes
    ----------
    pivot : int
        1-based index of the first failing Cholesky pivot.
    """

    def __init__(self, pivot: int):
        super().__init__(
            f"mass matrix is not positive definite: Cholesky failed at "
            f"pivot {pivot}"
        )
        self.pivot = pivot


@dataclass(frozen=True)
class EigenSolution:
    """Sorted, B-orthonormal eigenpairs of a hermitian pencil.

    eigenvalues are real ascending; eigenvectors[:, j] holds the basis
    coefficients of pair j; residuals[j] = ||A Phi_j - lambda_j B Phi_j||.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    def degenerate_clusters(self, rtol: float = DEGENERACY_RTOL) -> list[list[int]]:
        """Indices grouped into clusters of eigenvalues within
        rtol * max(1, |lambda|) of each other; B-orthonormality holds
        within clusters because the solve orthonormalizes globally."""
        clusters: list[list[int]] = []
        for j, lam in enumerate(self.eigenvalues):
            if clusters and abs(
                lam - self.eigenvalues[clusters[-1][0]]
            ) <= rtol * max(1.0, abs(lam)):
                clusters[-1].append(j)
            else:
                clusters.append([j])
        return clusters


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        idx = int(np.argmax(np.abs(col)))
        z = col[idx]
        if z != 0:
            col *= np.conj(z) / abs(z)
    return vectors


def solve_pencil(pencil: Pencil, count: int | None = None) -> EigenSolution:
    """Solve A Phi = lambda B Phi for all (or the lowest ``count``) pairs.

    Raises
    ------
    EigenSolveError
        If A or B is not hermitian (exact check; assembled pencils satisfy
        it by construction).
    PositiveDefinitenessError
        If the Cholesky factorization of B fails; carries the pivot index.
    """
    a, b = pencil.a, pencil.b
    if not np.array_equal(a, a.conj().T):
        raise EigenSolveError("A is not hermitian")
    if not np.array_equal(b, b.conj().T):
        raise EigenSolveError("B is not hermitian")
    dim = a.shape[0]
    if count is not None:
        count = int(count)
        if count < 1:
            raise EigenSolveError(f"count must be positive, got {count}")
        count = min(count, dim)

    potrf, = scipy.linalg.get_lapack_funcs(("potrf",), (b,))
    l_factor, info = potrf(b, lower=1, clean=1, overwrite_a=0)
    if info != 0:
        if info > 0:
            raise PositiveDefinitenessError(int(info))
        raise EigenSolveError(f"Cholesky factorization failed (info = {info})")

    x = scipy.linalg.solve_triangular(l_factor, a, lower=True)
    c = scipy.linalg.solve_triangular(l_factor, x.conj().T, lower=True).conj().T

    if count is None:
        w, y = scipy.linalg.eigh(c)
    else:
        w, y = scipy.linalg.eigh(c, subset_by_index=(0, count - 1))

    vectors = scipy.linalg.solve_triangular(l_factor, y, trans="C", lower=True)
    vectors = _fix_phases(vectors)

    av = a @ vectors
    bv = b @ vectors
    residuals = np.linalg.norm(av - bv * w[None, :], axis=0)
    w = np.asarray(w, dtype=float)
    return EigenSolution(eigenvalues=w, eigenvectors=vectors, residuals=residuals)


def residual_tolerances(pencil: Pencil, eigenvalues: np.ndarray) -> np.ndarray:
    """Per-pair residual bound RESIDUAL_RTOL * (||A|| + |lambda| ||B||),
    with the matrix 1-norm."""
    a_norm = float(np.linalg.norm(pencil.a, 1))
    b_norm = float(np.linalg.norm(pencil.b, 1))
    return RESIDUAL_RTOL * (a_norm + np.abs(eigenvalues) * b_norm)


def _node_value_arrays(
    coeffs: np.ndarray, mesh: Mesh, bvals: BoundaryValues, basis: BasisMap
) -> list[np.ndarray]:
    """Per-interval node values of sum_a coeffs[a] f_a, endpoints included."""
    out = []
    for alpha, r_alpha in enumerate(mesh.r):
        vals = np.zeros(r_alpha + 2, dtype=complex)
        for i in range(2 * mesh.n):
            c = coeffs[basis.boundary_index(i)]
            if c != 0:
                vals += c * boundary_node_values(mesh, bvals, i, alpha)
        for k in range(2, r_alpha):
            vals[k] += coeffs[basis.bulk_index(alpha, k)]
        out.append(vals)
    return out


def eigenfunction_samples(
    sol: EigenSolution,
    mesh: Mesh,
    bvals: BoundaryValues,
    which: int,
    include_midpoints: bool = False,
):
    """Sample eigenfunction ``which`` at the mesh nodes.

    Returns (x, values) with both arrays concatenated over the intervals.
    Endpoint samples include the boundary-function contributions.  With
    ``include_midpoints`` the subinterval midpoints are interleaved; the
    reconstruction is piecewise linear, so midpoint values are the averages
    of the adjacent node values.
    """
    if not 0 <= which < sol.count:
        raise IndexError(f"eigenpair index {which} out of range [0, {sol.count})")
    basis = BasisMap(mesh)
    coeffs = sol.eigenvectors[:, which]
    per_interval = _node_value_arrays(coeffs, mesh, bvals, basis)
    xs = []
    vs = []
    for alpha, vals in enumerate(per_interval):
        x = mesh.nodes[alpha]
        if include_midpoints:
            xm = 0.5 * (x[:-1] + x[1:])
            vm = 0.5 * (vals[:-1] + vals[1:])
            x_all = np.empty(x.size + xm.size)
            v_all = np.empty(x.size + xm.size, dtype=complex)
            x_all[0::2] = x
            x_all[1::2] = xm
            v_all[0::2] = vals
            v_all[1::2] = vm
            xs.append(x_all)
            vs.append(v_all)
        else:
            xs.append(np.array(x))
            vs.append(vals)
    return np.concatenate(xs), np.concatenate(vs)


def h1_error(
    sol: EigenSolution,
    which: int,
    mesh: Mesh,
    bvals: BoundaryValues,
    reference,
    quad_order: int = 5,
) -> float:
    """Sobolev-1 distance between eigenfunction ``which`` and a reference.

    ``reference`` is a pair of callables (psi, dpsi) evaluated at global
    coordinates.  The finite element function is linear on every
    subinterval, so the integral is accumulated per subinterval with
    Gauss-Legendre quadrature of the given order.  Before differencing,
    the eigenfunction is multiplied by the unit-modulus phase maximizing
    the real inner product with the reference.
    """
    if quad_order < 4:
        raise ValueError("quad_order must be at least 4")
    psi_ref, dpsi_ref = reference
    basis = BasisMap(mesh)
    coeffs = sol.eigenvectors[:, which]
    per_interval = _node_value_arrays(coeffs, mesh, bvals, basis)

    gauss_x, gauss_w = np.polynomial.legendre.leggauss(int(quad_order))
    t_ref = (gauss_x + 1.0) / 2.0

    # Phase alignment: c = conj(<psi_ref, Phi>) / |<psi_ref, Phi>|.
    inner = 0.0 + 0.0j
    for alpha, vals in enumerate(per_interval):
        h = mesh.h[alpha]
        x0 = mesh.nodes[alpha][:-1]
        xq = x0[:, None] + h * t_ref[None, :]
        fem_q = vals[:-1, None] * (1.0 - t_ref)[None, :] + vals[1:, None] * t_ref[None, :]
        ref_q = np.asarray(psi_ref(xq), dtype=complex)
        inner += (h / 2.0) * np.sum(gauss_w[None, :] * np.conj(ref_q) * fem_q)
    phase = np.conj(inner) / abs(inner) if abs(inner) > 0 else 1.0

    total = 0.0
    for alpha, vals in enumerate(per_interval):
        h = mesh.h[alpha]
        x0 = mesh.nodes[alpha][:-1]
        xq = x0[:, None] + h * t_ref[None, :]
        fem_q = vals[:-1, None] * (1.0 - t_ref)[None, :] + vals[1:, None] * t_ref[None, :]
        slope = (vals[1:] - vals[:-1]) / h
        diff_val = np.asarray(psi_ref(xq), dtype=complex) - phase * fem_q
        diff_slope = np.asarray(dpsi_ref(xq), dtype=complex) - phase * slope[:, None]
        total += (h / 2.0) * np.sum(
            gauss_w[None, :] * (np.abs(diff_val) ** 2 + np.abs(diff_slope) ** 2)
        )
    return float(np.sqrt(total))
