"""Self-adjoint boundary conditions encoded by a unitary matrix.

A self-adjoint realization of -mu d^2/dx^2 + V on n intervals is fixed by a
unitary 2n x 2n matrix U acting on boundary data: a function belongs to the
domain iff its endpoint values psi and outward normal derivatives psid
satisfy  psi - i psid = U (psi + i psid).

Two orderings of the 2n boundary slots are used.  Endpoint order interleaves
the intervals, (a_1, b_1, a_2, b_2, ...); block order stacks all left ends
before all right ends, (a_1..a_n, b_1..b_n).  The permutation relating them
is stored explicitly as an index array, never recomputed inline.

This module also builds and solves the linear system F V = C whose solution
column i holds the endpoint values of the i-th boundary basis function, and
monitors the conditioning of F.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import Mesh

UNITARITY_TOL = 1e-12
DEFAULT_KAPPA_MAX = 1e8
DEFAULT_MAX_RETRIES = 8

# Residual gates for the boundary-value solve.
_SOLVE_RTOL = 1e-10
_ZERO_RHS_TOL = 1e-12
_TRACE_TOL = 1e-8


class BoundaryError(ValueError):
    """Invalid boundary-condition data (non-unitary matrix, bad shapes)."""


class BoundarySolveError(RuntimeError):
    """The boundary-value system was solved but failed its residual gates."""


class ConditionFailure(RuntimeError):
    """Boundary matrix too ill-conditioned to trust the solve.

    Attributes
    ----------
    kappa_estimate : float
        Condition number estimate that triggered the failure.
    spectrum_gap : float
        Distance from 1 to the spectrum of U0 = U D conj(D)^-1.
    history : list of (int, float)
        (resolution, kappa) pairs tried, when raised by the retry loop.
    """

    def __init__(self, message, kappa_estimate=None, spectrum_gap=None, history=None):
        super().__init__(message)
        self.kappa_estimate = kappa_estimate
        self.spectrum_gap = spectrum_gap
        self.history = history


def endpoint_to_block_permutation(n: int) -> np.ndarray:
    """Index array sigma with sigma[e] = block slot of endpoint slot e.

    Left ends (even endpoint slots) map to 0..n-1, right ends (odd slots)
    to n..2n-1.
    """
    sigma = np.empty(2 * n, dtype=np.intp)
    sigma[0::2] = np.arange(n)
    sigma[1::2] = n + np.arange(n)
    return sigma


def _vector_endpoint_to_block(x: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    out[sigma] = x
    return out


def _vector_block_to_endpoint(x: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return x[sigma]


def _matrix_endpoint_to_block(m: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    out[np.ix_(sigma, sigma)] = m
    return out


def _matrix_block_to_endpoint(m: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return m[np.ix_(sigma, sigma)]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BoundaryCondition:
    """A unitary boundary condition in both slot orderings.

    Attributes
    ----------
    n : int
        Number of intervals; the matrices are 2n x 2n.
    u_endpoint : ndarray
        U in endpoint ordering (a_1, b_1, a_2, b_2, ...).
    u_block : ndarray
        The same operator in block ordering (left ends first).
    unitarity_defect : float
        Frobenius norm of U^H U - I at construction time.
    """

    n: int
    u_endpoint: np.ndarray
    u_block: np.ndarray
    unitarity_defect: float

    @classmethod
    def from_matrix(cls, entries, ordering: str = "endpoint") -> "BoundaryCondition":
        """Build from an explicit 2n x 2n unitary matrix.

        ``ordering`` says how the rows/columns of ``entries`` are indexed;
        the other ordering is derived through the slot permutation.
        """
        u = np.asarray(entries, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise BoundaryError(f"boundary matrix must be square, got shape {u.shape}")
        dim = u.shape[0]
        if dim % 2 != 0 or dim == 0:
            raise BoundaryError(f"boundary matrix must have even dimension, got {dim}")
        n = dim // 2
        defect = float(np.linalg.norm(u.conj().T @ u - np.eye(dim)))
        if defect > UNITARITY_TOL:
            raise BoundaryError(
                f"matrix is not unitary: ||U^H U - I|| = {defect:.3e} "
                f"exceeds {UNITARITY_TOL:.1e}"
            )
        sigma = endpoint_to_block_permutation(n)
        if ordering == "endpoint":
            u_e = u
            u_b = _matrix_endpoint_to_block(u, sigma)
        elif ordering == "block":
            u_b = u
            u_e = _matrix_block_to_endpoint(u, sigma)
        else:
            raise BoundaryError(f"unknown ordering {ordering!r}")
        return cls(
            n=n,
            u_endpoint=_frozen(u_e),
            u_block=_frozen(u_b),
            unitarity_defect=defect,
        )

    @classmethod
    def dirichlet(cls, n: int) -> "BoundaryCondition":
        """U = -I: functions vanish at every endpoint."""
        return cls.from_matrix(-np.eye(2 * n, dtype=complex))

    @classmethod
    def neumann(cls, n: int) -> "BoundaryCondition":
        """U = +I: normal derivatives vanish at every endpoint."""
        return cls.from_matrix(np.eye(2 * n, dtype=complex))

    @classmethod
    def quasi_periodic(cls, theta: float) -> "BoundaryCondition":
        """Single interval with u(a) = e^{i theta} u(b), u'(a) = e^{i theta} u'(b).

        theta = 0 gives periodic, theta = pi antiperiodic boundary conditions.
        """
        theta = float(theta)
        u = np.array(
            [[0.0, cmath.exp(1j * theta)], [cmath.exp(-1j * theta), 0.0]],
            dtype=complex,
        )
        return cls.from_matrix(u)

    @property
    def sigma(self) -> np.ndarray:
        return endpoint_to_block_permutation(self.n)

    def admissibility_defect(self, values, normal_derivatives,
                             ordering: str = "endpoint") -> float:
        """Norm of (psi - i psid) - U (psi + i psid) for one boundary trace."""
        psi = np.asarray(values, dtype=complex)
        psid = np.asarray(normal_derivatives, dtype=complex)
        if psi.shape != (2 * self.n,) or psid.shape != (2 * self.n,):
            raise BoundaryError("trace vectors must have length 2n")
        u = self.u_endpoint if ordering == "endpoint" else self.u_block
        return float(np.linalg.norm((psi - 1j * psid) - u @ (psi + 1j * psid)))


@dataclass(frozen=True)
class BoundaryTrace:
    """Boundary data (values, outward normal derivatives) in block order."""

    values: np.ndarray
    normal_derivatives: np.ndarray

    def is_admissible(self, bc: BoundaryCondition, tol: float = _TRACE_TOL) -> bool:
        defect = bc.admissibility_defect(
            self.values, self.normal_derivatives, ordering="block"
        )
        return defect <= tol


@dataclass(frozen=True)
class BoundarySystem:
    """The linear system F V = C fixing the boundary-function endpoint values.

    All matrices and the step vector ``h`` use endpoint ordering, with
    h[2 alpha] = h[2 alpha + 1] = h_alpha.
    """

    f: np.ndarray
    c: np.ndarray
    h: np.ndarray
    u: np.ndarray  # boundary unitary, endpoint ordering


@dataclass(frozen=True)
class BoundaryValues:
    """Endpoint values of the boundary basis functions.

    Column i of ``v`` holds the 2n endpoint values of the i-th boundary
    function.  ``g`` is the weighted matrix diag(1/h) v, hermitian exactly
    after the projection applied by :func:`solve_boundary_values`; consumers
    that need (1/h_l) V[l, i] read it from ``g`` so the hermiticity carries
    through assembly without re-rounding.
    """

    v: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @property
    def n(self) -> int:
        return self.v.shape[0] // 2

    def normal_derivatives(self) -> np.ndarray:
        """Matrix whose column i holds the outward normal derivatives of
        boundary function i at the 2n endpoints (endpoint ordering)."""
        return self.g - np.diag(1.0 / self.h)


@dataclass(frozen=True)
class ConditionReport:
    """Conditioning diagnostics for a boundary system."""

    kappa_estimate: float
    bound: float
    spectrum_gap: float
    incompatible: bool
    note: str = ""


def assemble_boundary_system(bc: BoundaryCondition, mesh: Mesh) -> BoundarySystem:
    """Form F = diag(1 - i/h) - U diag(1 + i/h) and C = -i (I + U) diag(1/h)."""
    if bc.n != mesh.n:
        raise BoundaryError(
            f"boundary condition has n = {bc.n} but mesh has n = {mesh.n}"
        )
    h = mesh.h_endpoint
    u = bc.u_endpoint
    dim = 2 * mesh.n
    inv_h = 1.0 / h
    f = np.diag(1.0 - 1j * inv_h) - u * (1.0 + 1j * inv_h)[None, :]
    c = -1j * (np.eye(dim) + u) * inv_h[None, :]
    return BoundarySystem(f=_frozen(f), c=_frozen(c), h=_frozen(h), u=bc.u_endpoint)


def condition_report(sys: BoundarySystem) -> ConditionReport:
    """Condition number of F, the closed-form bound, and the spectrum gap.

    The bound is (h_max / h_min) * 2 / min |1 - spec(U0)| with
    U0 = U D conj(D)^{-1}, D = I + i diag(1/h).  A gap below 1e-12 means 1
    is (numerically) in the spectrum of U0 and the system is incompatible
    at this step vector.
    """
    svals = np.linalg.svd(sys.f, compute_uv=False)
    smin = svals[-1]
    kappa = float(svals[0] / smin) if smin > 0 else float("inf")

    d = 1.0 + 1j / sys.h
    u0 = sys.u * (d / np.conj(d))[None, :]
    gap = float(np.min(np.abs(1.0 - np.linalg.eigvals(u0))))
    ratio = float(np.max(sys.h) / np.min(sys.h))
    bound = ratio * 2.0 / gap if gap > 0 else float("inf")
    incompatible = gap < 1e-12
    note = "system incompatible at this h" if incompatible else ""
    return ConditionReport(
        kappa_estimate=kappa,
        bound=bound,
        spectrum_gap=gap,
        incompatible=incompatible,
        note=note,
    )


def solve_boundary_values(
    sys: BoundarySystem, kappa_max: float | None = DEFAULT_KAPPA_MAX
) -> BoundaryValues:
    """Solve F V = C and project V onto the weighted-hermitian constraint.

    The projection replaces G = diag(1/h) V by its hermitian part; this is
    the minimal symmetric correction in the correctly weighted variable and
    is what keeps the assembled pencil hermitian exactly.

    Raises
    ------
    ConditionFailure
        If the condition estimate of F exceeds ``kappa_max``.
    BoundarySolveError
        If the residual or the per-column admissibility gate fails.
    """
    report = condition_report(sys)
    if report.incompatible:
        # With 1 in the spectrum of U0 the matrix F is (numerically) zero,
        # which leaves the condition estimate meaningless: refuse outright.
        raise ConditionFailure(
            f"boundary system incompatible at this step vector "
            f"(spectrum gap {report.spectrum_gap:.3e})",
            kappa_estimate=report.kappa_estimate,
            spectrum_gap=report.spectrum_gap,
        )
    if kappa_max is not None and not report.kappa_estimate <= kappa_max:
        raise ConditionFailure(
            f"boundary matrix condition estimate {report.kappa_estimate:.3e} "
            f"exceeds kappa_max = {kappa_max:.3e} "
            f"(spectrum gap {report.spectrum_gap:.3e})",
            kappa_estimate=report.kappa_estimate,
            spectrum_gap=report.spectrum_gap,
        )

    v_raw = scipy.linalg.solve(sys.f, sys.c)
    inv_h = 1.0 / sys.h
    g = inv_h[:, None] * v_raw
    g = (g + g.conj().T) / 2.0
    v = sys.h[:, None] * g

    c_norm = float(np.linalg.norm(sys.c))
    if c_norm == 0.0:
        if float(np.linalg.norm(v)) > _ZERO_RHS_TOL:
            raise BoundarySolveError(
                "homogeneous boundary system produced a nonzero solution"
            )
    else:
        residual = float(np.linalg.norm(sys.f @ v - sys.c))
        if residual > _SOLVE_RTOL * c_norm:
            raise BoundarySolveError(
                f"boundary solve residual {residual:.3e} exceeds "
                f"{_SOLVE_RTOL:.1e} * ||C|| = {_SOLVE_RTOL * c_norm:.3e}"
            )

    # Per-column admissibility: each boundary function must satisfy the
    # boundary condition within the trace tolerance.
    beta_dot = g - np.diag(inv_h)
    lhs = (v - 1j * beta_dot) - sys.u @ (v + 1j * beta_dot)
    col_defects = np.linalg.norm(lhs, axis=0)
    worst = float(np.max(col_defects))
    if worst > _TRACE_TOL:
        raise BoundarySolveError(
            f"boundary-function trace defect {worst:.3e} exceeds {_TRACE_TOL:.1e}"
        )

    return BoundaryValues(v=_frozen(v), g=_frozen(g), h=sys.h)


def retry_mesh_on_bad_conditioning(
    bc: BoundaryCondition,
    geom,
    resolution: int,
    kappa_max: float = DEFAULT_KAPPA_MAX,
    max_retries: int = DEFAULT_MAX_RETRIES,
):
    """Increase the resolution until the boundary matrix is well conditioned.

    Tries N, N+1, ..., N+max_retries and returns the first triple
    (mesh, system, values) whose condition estimate passes kappa_max.

    Raises
    ------
    ConditionFailure
        After exhausting the retries; carries the full kappa history.
    """
    from .geometry import build_mesh

    history: list[tuple[int, float]] = []
    for n_try in range(int(resolution), int(resolution) + int(max_retries) + 1):
        mesh = build_mesh(geom, n_try)
        sys = assemble_boundary_system(bc, mesh)
        report = condition_report(sys)
        history.append(
            (n_try, float("inf") if report.incompatible else report.kappa_estimate)
        )
        if not report.incompatible and report.kappa_estimate <= kappa_max:
            values = solve_boundary_values(sys, kappa_max=kappa_max)
            return mesh, sys, values
    raise ConditionFailure(
        f"no resolution in [{resolution}, {resolution + max_retries}] met "
        f"kappa_max = {kappa_max:.3e}; history: "
        + ", ".join(f"N={n}: {k:.3e}" for n, k in history),
        history=history,
    )


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-like random unitary: QR of a complex Gaussian matrix with the
    R diagonal phase-fixed.  Deterministic for a seeded generator."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))[None, :]
