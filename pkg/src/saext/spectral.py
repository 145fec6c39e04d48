"""Spectral-determinant method: an eigenvalue solver independent of the
finite element discretization, used to cross-validate it.

For each trial lambda, every interval carries a two-dimensional space of
solutions of -mu Psi'' + V Psi = lambda Psi.  Their boundary traces are
combined with the boundary unitary U into a 2n x 2n matrix M(U, lambda)
through a Hadamard-product block algebra; lambda is an eigenvalue exactly
when det M(U, lambda) = 0.  Zeros are located by scanning |det M| on the
real axis and refining its local minima.

Fundamental-solution bases
--------------------------
``normalized`` (default): the pair with initial data (1, 0) and (0, 1) at
the left endpoint.  For constant potentials these are cos(k x') and
sin(k x')/k in the local coordinate x', entire in lambda, so the
determinant has no spurious zero or branch point anywhere on the real
axis, including at lambda equal to the potential plateau.  The numerical
integrator produces the same basis, which makes the two paths directly
comparable.

``exponential``: exp(+- i k x') for constant potentials.  This is the
basis in which the closed-form single-interval expressions take their
familiar shape; it degenerates as k -> 0, so it is rejected near that
point.  Any nondegenerate basis change only multiplies the determinant by
a nonzero factor and moves no zeros.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .boundary import BoundaryCondition
from .geometry import IntervalSet
from .potentials import Potential

DEFAULT_ODE_STEPS = 2048
_ODE_RTOL = 1e-9
_MAX_ODE_STEPS = 1 << 17
_EXP_DEGENERACY_TOL = 1e-9

DEFAULT_GRID_DENSITY = 2000  # scan points per unit of sign(lam)*sqrt(|lam|)
ACCEPT_RTOL = 1e-6
ACCEPT_ATOL = 1e-12
SV_RTOL = 1e-6
REFINE_WIDTH = 1e-10


class TraceIntegrationError(RuntimeError):
    """The fundamental-solution integrator did not reach its tolerance."""


def hadamard_vec(x, y):
    """Componentwise product of two vectors of equal length."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x * y


def hadamard_mat(t, x):
    """The matrix T . X with (T . X) Y = T (X . Y): column j of T scaled by X_j."""
    t = np.asarray(t)
    x = np.asarray(x)
    if t.ndim != 2 or x.ndim != 1 or t.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: {t.shape} vs {x.shape}")
    return t * x[None, :]


def odot(u, psi):
    """Block extension of the Hadamard product.

    ``u`` is 2n x 2n in block ordering, ``psi`` a 2n x 2 matrix whose
    columns stack (left traces; right traces) for the two fundamental
    solutions.  The result is the 2n x 2n matrix with n x n blocks
    B[Ij] = u^{I1} . psi_l^j + u^{I2} . psi_r^j.
    """
    u = np.asarray(u)
    psi = np.asarray(psi)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] % 2 != 0:
        raise ValueError(f"u must be square of even dimension, got {u.shape}")
    n = u.shape[0] // 2
    if psi.shape != (2 * n, 2):
        raise ValueError(f"psi must have shape {(2 * n, 2)}, got {psi.shape}")
    u11, u12 = u[:n, :n], u[:n, n:]
    u21, u22 = u[n:, :n], u[n:, n:]
    pl, pr = psi[:n, :], psi[n:, :]
    blocks = [[None, None], [None, None]]
    for col in (0, 1):
        blocks[0][col] = hadamard_mat(u11, pl[:, col]) + hadamard_mat(u12, pr[:, col])
        blocks[1][col] = hadamard_mat(u21, pl[:, col]) + hadamard_mat(u22, pr[:, col])
    return np.block(blocks)


@dataclass(frozen=True)
class FundamentalTraces:
    """Boundary traces of the two fundamental solutions per interval.

    Arrays have shape (n, 2), indexed [alpha, sigma].  ``dpsi_l`` and
    ``dpsi_r`` hold outward normal derivatives: -Psi'(a) on the left,
    +Psi'(b) on the right.
    """

    lam: float
    mu: float
    psi_l: np.ndarray
    dpsi_l: np.ndarray
    psi_r: np.ndarray
    dpsi_r: np.ndarray

    @property
    def n(self) -> int:
        return self.psi_l.shape[0]

    def wronskians(self) -> np.ndarray:
        """Wronskian Psi^1 (Psi^2)' - (Psi^1)' Psi^2 at each left endpoint."""
        # Psi'(a) = -dpsi_l.
        return (
            -self.psi_l[:, 0] * self.dpsi_l[:, 1]
            + self.dpsi_l[:, 0] * self.psi_l[:, 1]
        )

    def trace_matrix(self, sign: int) -> np.ndarray:
        """The 2n x 2 matrix stacking psi_{l,sign} over psi_{r,sign}."""
        if sign not in (+1, -1):
            raise ValueError("sign must be +1 or -1")
        top = self.psi_l + 1j * sign * self.dpsi_l
        bottom = self.psi_r + 1j * sign * self.dpsi_r
        return np.vstack([top, bottom])


def _closed_form_traces(geom, lam, mu, constants, basis):
    n = geom.n
    psi_l = np.zeros((n, 2), dtype=complex)
    dpsi_l = np.zeros((n, 2), dtype=complex)
    psi_r = np.zeros((n, 2), dtype=complex)
    dpsi_r = np.zeros((n, 2), dtype=complex)
    for alpha, (a, b) in enumerate(geom.intervals):
        length = b - a
        k = cmath.sqrt(complex(lam - constants[alpha]) / mu)
        if basis == "exponential":
            if abs(k) * length < _EXP_DEGENERACY_TOL:
                raise ValueError(
                    "exponential fundamental basis degenerates as k -> 0; "
                    "use the normalized basis near lambda = V"
                )
            e_plus = cmath.exp(1j * k * length)
            e_minus = cmath.exp(-1j * k * length)
            psi_l[alpha] = (1.0, 1.0)
            dpsi_l[alpha] = (-1j * k, 1j * k)  # -Psi'(a)
            psi_r[alpha] = (e_plus, e_minus)
            dpsi_r[alpha] = (1j * k * e_plus, -1j * k * e_minus)
        else:
            cos_l = cmath.cos(k * length)
            sin_over_k = length if k == 0 else cmath.sin(k * length) / k
            psi_l[alpha] = (1.0, 0.0)
            dpsi_l[alpha] = (0.0, -1.0)
            psi_r[alpha] = (cos_l, sin_over_k)
            dpsi_r[alpha] = (-(k * k) * sin_over_k, cos_l)
    return psi_l, dpsi_l, psi_r, dpsi_r


def _rk4_fundamental(potential, alpha, a, b, lam, mu, steps):
    """Integrate the 2x2 fundamental system from a to b with fixed-step RK4."""
    h = (b - a) / steps
    state = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=complex)  # rows: Psi, Psi'

    def deriv(x, s):
        q = (float(potential.value(alpha, x)) - lam) / mu
        return np.array([s[1], q * s[0]])

    x = a
    for _ in range(steps):
        k1 = deriv(x, state)
        k2 = deriv(x + h / 2, state + (h / 2) * k1)
        k3 = deriv(x + h / 2, state + (h / 2) * k2)
        k4 = deriv(x + h, state + h * k3)
        state = state + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        x += h
    return state


def _integrated_traces(potential, geom, lam, mu, steps):
    n = geom.n
    psi_l = np.zeros((n, 2), dtype=complex)
    dpsi_l = np.zeros((n, 2), dtype=complex)
    psi_r = np.zeros((n, 2), dtype=complex)
    dpsi_r = np.zeros((n, 2), dtype=complex)
    for alpha, (a, b) in enumerate(geom.intervals):
        m = int(steps)
        coarse = _rk4_fundamental(potential, alpha, a, b, lam, mu, m)
        while True:
            fine = _rk4_fundamental(potential, alpha, a, b, lam, mu, 2 * m)
            scale = max(1.0, float(np.max(np.abs(fine))))
            if float(np.max(np.abs(fine - coarse))) <= _ODE_RTOL * scale:
                break
            m *= 2
            if 2 * m > _MAX_ODE_STEPS:
                raise TraceIntegrationError(
                    f"fundamental-solution integration on interval {alpha} "
                    f"did not reach rtol {_ODE_RTOL:.1e} within "
                    f"{_MAX_ODE_STEPS} steps"
                )
            coarse = fine
        psi_l[alpha] = (1.0, 0.0)
        dpsi_l[alpha] = (0.0, -1.0)
        psi_r[alpha] = fine[0]
        dpsi_r[alpha] = fine[1]
    return psi_l, dpsi_l, psi_r, dpsi_r


def fundamental_traces(
    potential: Potential,
    geom: IntervalSet,
    lam: float,
    mu: float = 1.0,
    basis: str = "normalized",
    ode_steps: int = DEFAULT_ODE_STEPS,
) -> FundamentalTraces:
    """Boundary traces of a fundamental system at trial eigenvalue ``lam``.

    Constant (including zero) potentials use closed forms; other potentials
    are integrated from the left endpoint with initial data (1, 0) and
    (0, 1) by fixed-step RK4, accepted only when a step-halving comparison
    agrees to 1e-9.
    """
    if basis not in ("normalized", "exponential"):
        raise ValueError(f"unknown basis {basis!r}")
    lam = float(lam)
    mu = float(mu)
    n = geom.n
    constants = [potential.constant_value(alpha) for alpha in range(n)]
    if all(c is not None for c in constants):
        arrays = _closed_form_traces(geom, lam, mu, constants, basis)
    else:
        if basis == "exponential":
            raise ValueError(
                "the exponential basis is only available for constant potentials"
            )
        arrays = _integrated_traces(potential, geom, lam, mu, ode_steps)
    psi_l, dpsi_l, psi_r, dpsi_r = (np.asarray(a) for a in arrays)
    traces = FundamentalTraces(
        lam=lam, mu=mu, psi_l=psi_l, dpsi_l=dpsi_l, psi_r=psi_r, dpsi_r=dpsi_r
    )
    if np.any(np.abs(traces.wronskians()) == 0):
        raise TraceIntegrationError("fundamental system is degenerate (zero Wronskian)")
    return traces


@dataclass(frozen=True)
class SpectralMatrix:
    """M(U, lambda) together with its determinant."""

    m: np.ndarray
    lam: float
    detval: complex


def spectral_matrix(bc: BoundaryCondition, traces: FundamentalTraces) -> SpectralMatrix:
    """Assemble M(U, lambda) = I . [psi_-] - U . [psi_+] in block ordering."""
    if bc.n != traces.n:
        raise ValueError(f"boundary condition n = {bc.n}, traces n = {traces.n}")
    t_minus = traces.trace_matrix(-1)
    t_plus = traces.trace_matrix(+1)
    eye = np.eye(2 * bc.n, dtype=complex)
    m = odot(eye, t_minus) - odot(bc.u_block, t_plus)
    return SpectralMatrix(m=m, lam=traces.lam, detval=complex(np.linalg.det(m)))


def spectral_det(bc: BoundaryCondition, traces: FundamentalTraces) -> complex:
    """Value of the spectral function: det M(U, lambda)."""
    return spectral_matrix(bc, traces).detval


def _w_combo(traces: FundamentalTraces, side1: str, side2: str,
             sign1: int, sign2: int) -> complex:
    """Single-interval 2x2 determinant of (psi_{side1, sign1}, psi_{side2, sign2})."""
    if traces.n != 1:
        raise ValueError("W combinations are defined for a single interval")

    def vec(side, sign):
        psi = traces.psi_l if side == "l" else traces.psi_r
        dpsi = traces.dpsi_l if side == "l" else traces.dpsi_r
        return (psi + 1j * sign * dpsi)[0]

    u = vec(side1, sign1)
    v = vec(side2, sign2)
    return u[0] * v[1] - u[1] * v[0]


def spectral_det_closed_1(bc: BoundaryCondition, traces: FundamentalTraces) -> complex:
    """Closed-form spectral function for a single interval.

    Expands det M(U, lambda) into the six trace determinants weighted by
    the entries of U; an independent code path from the block assembly.
    """
    if bc.n != 1 or traces.n != 1:
        raise ValueError("closed form requires a single interval")
    u = bc.u_block
    w = lambda s1, s2, g1, g2: _w_combo(traces, s1, s2, g1, g2)
    return (
        w("l", "r", -1, -1)
        + u[0, 0] * w("r", "l", -1, +1)
        + u[1, 1] * w("r", "l", +1, -1)
        + u[0, 1] * w("r", "r", -1, +1)
        + u[1, 0] * w("l", "l", +1, -1)
        + complex(np.linalg.det(u)) * w("l", "r", +1, +1)
    )


def unitary_from_su2_phase(theta: float, alpha: complex, beta: complex) -> np.ndarray:
    """U(2) element e^{i theta/2} [[alpha, beta], [-conj(beta), conj(alpha)]]
    with |alpha|^2 + |beta|^2 = 1."""
    norm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"|alpha|^2 + |beta|^2 = {norm} must be 1")
    phase = cmath.exp(1j * theta / 2.0)
    return phase * np.array(
        [[alpha, beta], [-np.conj(beta), np.conj(alpha)]], dtype=complex
    )


def spectral_det_parametrized(
    theta: float, alpha: complex, beta: complex, traces: FundamentalTraces
) -> complex:
    """Spectral function under the phase/SU(2) parametrization of U(2).

    Every term linear in the entries of U carries the overall phase
    e^{i theta/2}; the determinant term carries e^{i theta}.
    """
    w = lambda s1, s2, g1, g2: _w_combo(traces, s1, s2, g1, g2)
    half = cmath.exp(1j * theta / 2.0)
    return (
        w("l", "r", -1, -1)
        + half
        * (
            alpha * w("r", "l", -1, +1)
            + np.conj(alpha) * w("r", "l", +1, -1)
            + beta * w("r", "r", -1, +1)
            - np.conj(beta) * w("l", "l", +1, -1)
        )
        + cmath.exp(1j * theta) * w("l", "r", +1, +1)
    )


def _column_scales(traces: FundamentalTraces) -> np.ndarray:
    """Magnitude scale of each column of M, taken from the traces alone.

    Column (sigma, alpha) of M is a combination of the four traces of
    solution sigma on interval alpha with unitary (hence bounded) weights,
    so their absolute sum bounds the column.  Scaling by this, rather than
    by the columns of M itself, keeps the gate meaningful both where the
    traces grow exponentially and at multiple eigenvalues, where M can
    collapse entirely.
    """
    n = traces.n
    t_minus = traces.trace_matrix(-1)
    t_plus = traces.trace_matrix(+1)
    scales = np.empty(2 * n)
    for sigma in (0, 1):
        for alpha in range(n):
            scales[sigma * n + alpha] = (
                abs(t_minus[alpha, sigma])
                + abs(t_minus[n + alpha, sigma])
                + abs(t_plus[alpha, sigma])
                + abs(t_plus[n + alpha, sigma])
            )
    return np.maximum(scales, np.finfo(float).tiny)


def _scaled_matrix(sm: SpectralMatrix, scales: np.ndarray) -> np.ndarray:
    return sm.m / scales[None, :]


def _normalized_abs_det(sm: SpectralMatrix, scales: np.ndarray) -> float:
    return float(abs(np.linalg.det(_scaled_matrix(sm, scales))))


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, a: float, b: float, xatol: float, maxiter: int = 300):
    """Golden-section minimization on [a, b], returning the best point seen.

    Near a zero the objective looks like |linear|, whose minimum standard
    quadratic-model minimizers localize only to sqrt(eps); plain golden
    section narrows the bracket to any requested width.
    """
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    best_x, best_f = (x1, f1) if f1 <= f2 else (x2, f2)
    for _ in range(maxiter):
        if (b - a) <= xatol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = f(x2)
        if f1 < best_f:
            best_x, best_f = x1, f1
        if f2 < best_f:
            best_x, best_f = x2, f2
    return best_x, best_f


def find_spectrum(
    bc: BoundaryCondition,
    potential: Potential,
    geom: IntervalSet,
    lambda_range: tuple[float, float],
    grid_points: int | None = None,
    mu: float = 1.0,
    return_scan: bool = False,
    accept_rtol: float = ACCEPT_RTOL,
    accept_atol: float = ACCEPT_ATOL,
    sv_rtol: float = SV_RTOL,
):
    """Eigenvalues in ``lambda_range`` as zeros of the spectral function.

    The spectral function is complex on the real axis, so zeros are found
    as minima of its modulus: a grid scan (uniform in s = sign(lam) *
    sqrt(|lam|), which roughly equalizes the root spacing) followed by
    bounded derivative-free refinement of each local minimum to a window
    of 1e-10 * max(1, |lambda|).  A candidate is accepted when its
    normalized modulus passes the threshold and the smallest singular
    value of M confirms rank deficiency; a second small singular value
    marks a double eigenvalue, reported twice.

    Returns the ascending array of roots; with ``return_scan`` also a
    (lambda, |det|, Re det, Im det) record of the grid scan.
    """
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
        raise ValueError(f"invalid lambda range ({lo}, {hi})")

    def s_of(lam):
        return np.sign(lam) * np.sqrt(np.abs(lam))

    def lam_of(s):
        return np.sign(s) * s * s

    s_lo, s_hi = s_of(lo), s_of(hi)
    if grid_points is None:
        grid_points = max(64, int(np.ceil(DEFAULT_GRID_DENSITY * (s_hi - s_lo))))
    grid_points = max(int(grid_points), 8)

    s_grid = np.linspace(s_lo, s_hi, grid_points)
    lam_grid = lam_of(s_grid)

    def matrix_at(lam):
        traces = fundamental_traces(potential, geom, lam, mu=mu)
        return spectral_matrix(bc, traces), _column_scales(traces)

    norm_abs = np.empty(grid_points)
    raw_det = np.empty(grid_points, dtype=complex)
    for i, lam in enumerate(lam_grid):
        sm, scales = matrix_at(lam)
        norm_abs[i] = _normalized_abs_det(sm, scales)
        raw_det[i] = sm.detval

    med = float(np.median(norm_abs))
    gate = accept_atol + accept_rtol * med

    def objective(s):
        sm, scales = matrix_at(lam_of(s))
        return _normalized_abs_det(sm, scales)

    roots: list[tuple[float, float, int]] = []  # (lam, score, multiplicity)
    interior_min = (norm_abs[1:-1] <= norm_abs[:-2]) & (norm_abs[1:-1] <= norm_abs[2:])
    candidates = list(np.nonzero(interior_min)[0] + 1)
    if norm_abs[0] < norm_abs[1] or norm_abs[-1] < norm_abs[-2]:
        warnings.warn(
            "the modulus of the spectral function decreases toward a range "
            "boundary; roots may lie outside the scanned range",
            stacklevel=2,
        )

    for i in candidates:
        s_a, s_b = s_grid[i - 1], s_grid[i + 1]
        lam_mid = lam_grid[i]
        width = REFINE_WIDTH * max(1.0, abs(lam_mid))
        ds = width / max(2.0 * abs(s_grid[i]), 1e-3)
        s_star, _ = _golden_min(objective, float(s_a), float(s_b), ds)
        lam_star = float(lam_of(s_star))
        sm, scales = matrix_at(lam_star)
        score = _normalized_abs_det(sm, scales)
        if score > gate:
            continue
        svals = np.linalg.svd(_scaled_matrix(sm, scales), compute_uv=False)
        if svals[-1] > sv_rtol:
            continue
        multiplicity = int(np.sum(svals <= sv_rtol))
        roots.append((lam_star, score, max(1, multiplicity)))

    # Deduplicate refinements that converged to the same zero.
    roots.sort(key=lambda t: t[0])
    merged: list[tuple[float, float, int]] = []
    for lam_star, score, mult in roots:
        if merged:
            prev = merged[-1]
            tol = 10.0 * REFINE_WIDTH * max(1.0, abs(lam_star))
            if abs(lam_star - prev[0]) <= max(tol, 1e-14):
                if score < prev[1]:
                    merged[-1] = (lam_star, score, max(mult, prev[2]))
                else:
                    merged[-1] = (prev[0], prev[1], max(mult, prev[2]))
                continue
        merged.append((lam_star, score, mult))

    values = []
    for lam_star, _, mult in merged:
        values.extend([lam_star] * mult)
    result = np.array(sorted(values))
    if return_scan:
        scan = np.rec.fromarrays(
            [lam_grid, np.abs(raw_det), raw_det.real, raw_det.imag],
            names=["lam", "absdet", "redet", "imdet"],
        )
        return result, scan
    return result
