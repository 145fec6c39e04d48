"""Piecewise-linear basis adapted to the boundary condition, and assembly
of the hermitian matrix pencil (A, B).

Two families of basis functions span the approximation space.  Bulk
functions are the usual interior hat functions, indexed by their peak node
k = 2 .. r_alpha - 1; they vanish at and next to every endpoint, so they
satisfy any boundary condition trivially.  Boundary functions are
delocalized: function i peaks (value 1) at the node adjacent to endpoint i
and takes endpoint values from column i of the solved boundary-value
matrix, so the span satisfies the boundary condition non-trivially.

Global ordering per interval: left boundary function, bulk functions in
node order, right boundary function; intervals concatenated.  With this
ordering A and B are tridiagonal except for the rows and columns of the
2n boundary functions.

The quadratic form behind A is
    Q(f, g) = mu * (<f', g'> - [conj(f) g']_boundary) + <f, V g>,
where the boundary bracket sums conj(f) g' over right endpoints minus left
endpoints with one-sided slopes.  B is the exact mass matrix.  Given the
weighted-hermiticity constraint on the boundary values, Q is hermitian;
assembly mirrors the upper triangle so A = A^H holds exactly, and aborts
if the raw (un-mirrored) assembly deviates beyond roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import BoundaryCondition, BoundaryValues
from .geometry import Mesh
from .potentials import Potential, ZeroPotential

DEFAULT_QUADRATURE_ORDER = 3

# Raw assembly asymmetry beyond this (relative to the largest entry) means
# the inputs were inconsistent, not mere roundoff.
_CONSISTENCY_TOL = 1e-12


class AssemblyError(RuntimeError):
    """Inconsistent inputs detected while building the pencil."""


@dataclass(frozen=True)
class BasisIndex:
    """Tag of one global basis index: kind is 'bulk' or 'boundary'.

    For bulk: alpha is the interval, k the peak node (2 <= k <= r-1).
    For boundary: i in 0..2n-1, i = 2 alpha for the left end of interval
    alpha, i = 2 alpha + 1 for its right end (k is unused, set to -1).
    """

    kind: str
    alpha: int
    k: int = -1
    i: int = -1


class BasisMap:
    """Bijection between global indices 0..|r|-1 and basis tags."""

    def __init__(self, mesh: Mesh) -> None:
        self.mesh = mesh
        tags: list[BasisIndex] = []
        starts = []
        for alpha, r_alpha in enumerate(mesh.r):
            starts.append(len(tags))
            tags.append(BasisIndex("boundary", alpha, i=2 * alpha))
            for k in range(2, r_alpha):
                tags.append(BasisIndex("bulk", alpha, k=k))
            tags.append(BasisIndex("boundary", alpha, i=2 * alpha + 1))
        self.tags = tuple(tags)
        self._starts = tuple(starts)
        if len(tags) != mesh.dim:
            raise AssemblyError("basis enumeration does not match mesh dimension")

    @property
    def size(self) -> int:
        return len(self.tags)

    def tag(self, a: int) -> BasisIndex:
        return self.tags[a]

    def bulk_index(self, alpha: int, k: int) -> int:
        r_alpha = self.mesh.r[alpha]
        if not 2 <= k <= r_alpha - 1:
            raise IndexError(
                f"bulk node k = {k} out of range [2, {r_alpha - 1}] on interval {alpha}"
            )
        return self._starts[alpha] + (k - 1)

    def boundary_index(self, i: int) -> int:
        n = self.mesh.n
        if not 0 <= i < 2 * n:
            raise IndexError(f"boundary function index {i} out of range [0, {2 * n})")
        alpha, side = divmod(i, 2)
        if side == 0:
            return self._starts[alpha]
        return self._starts[alpha] + self.mesh.r[alpha] - 1

    def boundary_indices(self) -> np.ndarray:
        return np.array([self.boundary_index(i) for i in range(2 * self.mesh.n)])


@dataclass(frozen=True)
class Pencil:
    """Hermitian generalized eigenvalue problem A Phi = lambda B Phi.

    ``basis`` is None for hand-built pencils that do not come from an
    assembly (the eigensolver does not need it).
    """

    a: np.ndarray
    b: np.ndarray
    mesh: Mesh
    basis: BasisMap | None
    mu: float

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def sparsity_pattern(self) -> np.ndarray:
        """Boolean matrix of structurally admissible nonzeros (shared-support
        pairs); entries outside it are exactly zero in both A and B."""
        return structural_sparsity(self.mesh, self.basis)


def eval_bulk(mesh: Mesh, alpha: int, k: int, x):
    """Value of the bulk hat function peaking at node k of interval alpha."""
    r_alpha = mesh.r[alpha]
    if not 2 <= k <= r_alpha - 1:
        raise IndexError(
            f"bulk node k = {k} out of range [2, {r_alpha - 1}] on interval {alpha}"
        )
    a, b = mesh.parent.intervals[alpha]
    x = np.asarray(x, dtype=float)
    if np.any(x < a) or np.any(x > b):
        raise ValueError(f"coordinate outside interval {alpha} = [{a}, {b}]")
    h = mesh.h[alpha]
    xk = mesh.nodes[alpha][k]
    return np.maximum(0.0, 1.0 - np.abs(x - xk) / h)


def boundary_node_values(mesh: Mesh, bvals: BoundaryValues, i: int,
                         alpha: int) -> np.ndarray:
    """Node values of boundary function i restricted to interval alpha."""
    r_alpha = mesh.r[alpha]
    vals = np.zeros(r_alpha + 2, dtype=complex)
    vals[0] = bvals.v[2 * alpha, i]
    vals[r_alpha + 1] = bvals.v[2 * alpha + 1, i]
    if i == 2 * alpha:
        vals[1] = 1.0
    if i == 2 * alpha + 1:
        vals[r_alpha] = 1.0
    return vals


def eval_boundary(mesh: Mesh, bvals: BoundaryValues, i: int, alpha: int, x):
    """Value of boundary function i at coordinates x inside interval alpha."""
    n = mesh.n
    if not 0 <= i < 2 * n:
        raise IndexError(f"boundary function index {i} out of range [0, {2 * n})")
    a, b = mesh.parent.intervals[alpha]
    x = np.asarray(x, dtype=float)
    if np.any(x < a) or np.any(x > b):
        raise ValueError(f"coordinate outside interval {alpha} = [{a}, {b}]")
    vals = boundary_node_values(mesh, bvals, i, alpha)
    h = mesh.h[alpha]
    s = (x - a) / h
    j = np.clip(np.floor(s).astype(int), 0, mesh.r[alpha])
    t = s - j
    return vals[j] * (1.0 - t) + vals[j + 1] * t


def _element_tables(mesh: Mesh, basis: BasisMap, bvals: BoundaryValues | None):
    """Yield (alpha, element, indices, left values, right values).

    Structure is independent of the boundary values: on the two extreme
    elements of each interval every boundary function is active (their
    endpoint values live there), elsewhere at most two functions overlap.
    When ``bvals`` is None, endpoint values are reported as ones, which is
    enough to derive the sparsity pattern.
    """
    n = mesh.n
    bidx = basis.boundary_indices()
    two_n = 2 * n
    for alpha, r_alpha in enumerate(mesh.r):
        def node_owner(k):
            if k == 1:
                return basis.boundary_index(2 * alpha)
            if k == r_alpha:
                return basis.boundary_index(2 * alpha + 1)
            return basis.bulk_index(alpha, k)

        for e in range(r_alpha + 1):
            if e == 0:
                idx = bidx
                left = (bvals.v[2 * alpha, :].copy() if bvals is not None
                        else np.ones(two_n, dtype=complex))
                right = np.zeros(two_n, dtype=complex)
                right[2 * alpha] = 1.0
            elif e == r_alpha:
                idx = bidx
                left = np.zeros(two_n, dtype=complex)
                left[2 * alpha + 1] = 1.0
                right = (bvals.v[2 * alpha + 1, :].copy() if bvals is not None
                         else np.ones(two_n, dtype=complex))
            else:
                idx = np.array([node_owner(e), node_owner(e + 1)])
                left = np.array([1.0, 0.0], dtype=complex)
                right = np.array([0.0, 1.0], dtype=complex)
            yield alpha, e, idx, left, right


def structural_sparsity(mesh: Mesh, basis: BasisMap | None = None) -> np.ndarray:
    if basis is None:
        basis = BasisMap(mesh)
    pattern = np.zeros((basis.size, basis.size), dtype=bool)
    for _, _, idx, _, _ in _element_tables(mesh, basis, None):
        pattern[np.ix_(idx, idx)] = True
    return pattern


def _hermitian_mirror(raw: np.ndarray) -> np.ndarray:
    upper = np.triu(raw, k=1)
    return upper + upper.conj().T + np.diag(raw.diagonal().real)


def assemble_pencil(
    mesh: Mesh,
    bc: BoundaryCondition,
    bvals: BoundaryValues,
    potential: Potential | None = None,
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER,
    mu: float = 1.0,
) -> Pencil:
    """Assemble the hermitian pencil (A, B) for -mu d^2/dx^2 + V.

    The potential term uses Gauss-Legendre quadrature of the given order on
    every subinterval; stiffness and mass use the exact closed forms for
    piecewise-linear elements.

    Raises
    ------
    AssemblyError
        On mismatched inputs, a violated weighted-hermiticity constraint,
        or a raw assembly that is not hermitian to roundoff.
    """
    if potential is None:
        potential = ZeroPotential()
    if bc.n != mesh.n:
        raise AssemblyError(f"boundary condition n = {bc.n}, mesh n = {mesh.n}")
    if bvals.v.shape != (2 * mesh.n, 2 * mesh.n):
        raise AssemblyError(
            f"boundary values have shape {bvals.v.shape}, expected "
            f"{(2 * mesh.n, 2 * mesh.n)}"
        )
    if not np.array_equal(bvals.h, mesh.h_endpoint):
        raise AssemblyError("boundary values were solved on a different mesh")
    if not np.array_equal(bvals.g, bvals.g.conj().T):
        raise AssemblyError(
            "boundary values violate the weighted hermiticity constraint; "
            "solve them through solve_boundary_values"
        )

    basis = BasisMap(mesh)
    dim = basis.size
    a_raw = np.zeros((dim, dim), dtype=complex)
    b_raw = np.zeros((dim, dim), dtype=complex)

    skip_potential = isinstance(potential, ZeroPotential)
    if not skip_potential:
        gauss_x, gauss_w = np.polynomial.legendre.leggauss(int(quadrature_order))
        t_ref = (gauss_x + 1.0) / 2.0  # quadrature abscissae on [0, 1]

    for alpha, e, idx, left, right in _element_tables(mesh, basis, bvals):
        h = mesh.h[alpha]
        lc = left.conj()
        rc = right.conj()
        mass = (h / 6.0) * (
            2.0 * np.outer(lc, left)
            + np.outer(lc, right)
            + np.outer(rc, left)
            + 2.0 * np.outer(rc, right)
        )
        diff = right - left
        stiff = np.outer(diff.conj(), diff) / h
        b_raw[np.ix_(idx, idx)] += mass
        a_raw[np.ix_(idx, idx)] += mu * stiff

        if not skip_potential:
            x0 = mesh.nodes[alpha][e]
            xq = x0 + h * t_ref
            vq = potential.value(alpha, xq)
            # basis values at the quadrature points: shape (active, points)
            pg = np.outer(left, 1.0 - t_ref) + np.outer(right, t_ref)
            weights = (h / 2.0) * gauss_w * vq
            a_raw[np.ix_(idx, idx)] += (pg.conj() * weights[None, :]) @ pg.T

    # Lagrange boundary bracket, nonzero only on the boundary block:
    # [conj(beta_l) beta_m']_boundary = (G^H V - G^H)[l, m] = (G V - G)[l, m]
    # since G is exactly hermitian.
    bidx = basis.boundary_indices()
    bracket = bvals.g @ bvals.v - bvals.g
    a_raw[np.ix_(bidx, bidx)] -= mu * bracket

    for name, raw in (("A", a_raw), ("B", b_raw)):
        scale = max(1.0, float(np.max(np.abs(raw))))
        defect = float(np.max(np.abs(raw - raw.conj().T)))
        if defect > _CONSISTENCY_TOL * scale:
            raise AssemblyError(
                f"raw {name} assembly is non-hermitian beyond roundoff "
                f"(defect {defect:.3e}, scale {scale:.3e})"
            )

    a = _hermitian_mirror(a_raw)
    b = _hermitian_mirror(b_raw)
    a.flags.writeable = False
    b.flags.writeable = False
    return Pencil(a=a, b=b, mesh=mesh, basis=basis, mu=float(mu))
