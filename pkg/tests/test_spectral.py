import math

import numpy as np
import pytest

from saext.boundary import BoundaryCondition, random_unitary
from saext.geometry import IntervalSet
from saext.potentials import CallablePotential, ConstantPotential, ZeroPotential
from saext.spectral import (
    TraceIntegrationError,
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

TWO_PI = 2 * math.pi
GEOM = IntervalSet([(0.0, TWO_PI)])
FREE = ZeroPotential()


# ------------------------------------------------------------ hadamard algebra

def test_hadamard_identity_vector():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert np.array_equal(hadamard_vec(x, np.ones(5)), x)


def test_hadamard_matrix_defining_property():
    rng = np.random.default_rng(1)
    t = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    y = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    lhs = hadamard_mat(t, x) @ y
    rhs = t @ hadamard_vec(x, y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-13


def test_hadamard_matrix_componentwise_form():
    rng = np.random.default_rng(2)
    t = rng.standard_normal((3, 3))
    x = rng.standard_normal(3)
    tiled = np.tile(x, (3, 1))
    assert np.array_equal(hadamard_mat(t, x), t * tiled)


def test_hadamard_shape_checks():
    with pytest.raises(ValueError):
        hadamard_vec(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        hadamard_mat(np.ones((3, 3)), np.ones(4))


def test_odot_against_direct_blocks():
    rng = np.random.default_rng(3)
    for n in (1, 3):
        u = random_unitary(2 * n, rng)
        psi = rng.standard_normal((2 * n, 2)) + 1j * rng.standard_normal((2 * n, 2))
        out = odot(u, psi)
        u11, u12 = u[:n, :n], u[:n, n:]
        u21, u22 = u[n:, :n], u[n:, n:]
        pl, pr = psi[:n], psi[n:]
        for col in (0, 1):
            top = u11 * pl[:, col][None, :] + u12 * pr[:, col][None, :]
            bottom = u21 * pl[:, col][None, :] + u22 * pr[:, col][None, :]
            assert np.array_equal(out[:n, col * n:(col + 1) * n], top)
            assert np.array_equal(out[n:, col * n:(col + 1) * n], bottom)


def test_odot_shape_checks():
    with pytest.raises(ValueError):
        odot(np.eye(3), np.ones((3, 2)))
    with pytest.raises(ValueError):
        odot(np.eye(4), np.ones((4, 3)))


# ------------------------------------------------------------------- traces

def _paper_wronskians(lam):
    """Closed-form trace determinants for the free particle on [0, 2pi]
    with mass factor 1/2 in the exponential basis."""
    k = np.sqrt(complex(2 * lam))
    s, c = np.sin(TWO_PI * k), np.cos(TWO_PI * k)
    return {
        ("l", "r", -1, -1): -2j * (1 + 2 * lam) * s - 4 * k * c,
        ("l", "l", +1, -1): 4 * k,
        ("r", "r", -1, +1): 4 * k,
        ("r", "l", -1, +1): 2j * (1 - 2 * lam) * s,
        ("r", "l", +1, -1): 2j * (1 - 2 * lam) * s,
        ("l", "r", +1, +1): -2j * (1 + 2 * lam) * s + 4 * k * c,
    }


def _w(traces, side1, side2, sign1, sign2):
    from saext.spectral import _w_combo

    return _w_combo(traces, side1, side2, sign1, sign2)


@pytest.mark.parametrize("lam", [0.3, 1.7, 4.9, 8.25])
def test_exponential_traces_reproduce_trace_determinants(lam):
    traces = fundamental_traces(FREE, GEOM, lam, mu=0.5, basis="exponential")
    for key, expected in _paper_wronskians(lam).items():
        got = _w(traces, *key)
        assert abs(got - expected) <= 1e-12 * max(1.0, abs(expected))


def test_normalized_traces_at_zero_energy():
    # limit basis {1, x}: finite traces, unit wronskian
    traces = fundamental_traces(FREE, GEOM, 0.0, mu=1.0)
    assert traces.psi_l[0, 0] == 1.0
    assert traces.dpsi_l[0, 0] == 0.0
    assert traces.psi_r[0, 0] == 1.0
    assert traces.dpsi_r[0, 0] == 0.0
    assert traces.psi_l[0, 1] == 0.0
    assert traces.dpsi_l[0, 1] == -1.0
    assert traces.psi_r[0, 1] == pytest.approx(TWO_PI)
    assert traces.dpsi_r[0, 1] == 1.0
    assert traces.wronskians()[0] == pytest.approx(1.0)


def test_exponential_basis_rejected_at_degeneracy():
    with pytest.raises(ValueError, match="degenerates"):
        fundamental_traces(FREE, GEOM, 0.0, mu=1.0, basis="exponential")


def test_below_plateau_traces_are_real_growing():
    # constant V = 5, lam = 1 < 5: hyperbolic solutions, nonzero wronskian
    pot = ConstantPotential([5.0])
    traces = fundamental_traces(pot, GEOM, 1.0, mu=1.0)
    kappa = math.sqrt(4.0)
    length = TWO_PI
    assert traces.psi_r[0, 0] == pytest.approx(math.cosh(kappa * length), rel=1e-12)
    assert traces.psi_r[0, 1] == pytest.approx(
        math.sinh(kappa * length) / kappa, rel=1e-12
    )
    assert abs(traces.wronskians()[0] - 1.0) <= 1e-12
    # oracle: the closed forms satisfy the differential equation; check the
    # second difference of cosh against (V - lam) / mu times the value
    x = 1.3
    dd = (math.cosh(kappa * (x + 1e-4)) - 2 * math.cosh(kappa * x)
          + math.cosh(kappa * (x - 1e-4))) / 1e-8
    assert dd == pytest.approx((5.0 - 1.0) / 1.0 * math.cosh(kappa * x), rel=1e-6)


def test_integrated_traces_match_closed_form():
    # same constant potential via the generic integrator
    closed = fundamental_traces(ConstantPotential([1.5]), GEOM, 3.2, mu=1.0)
    integrated = fundamental_traces(
        CallablePotential(lambda x: np.full_like(x, 1.5)), GEOM, 3.2, mu=1.0
    )
    for attr in ("psi_l", "dpsi_l", "psi_r", "dpsi_r"):
        a = getattr(closed, attr)
        b = getattr(integrated, attr)
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(a)))


def test_integrated_traces_multi_interval_constant_mix():
    geom = IntervalSet([(0.0, 1.0), (0.0, 2.0)])
    closed = fundamental_traces(ConstantPotential([0.0, 2.0]), geom, 1.1, mu=0.5)
    integrated = fundamental_traces(
        CallablePotential(lambda x: np.zeros_like(x)), geom, 1.1, mu=0.5
    )
    # only interval 0 matches (the callable is zero everywhere)
    assert np.max(np.abs(closed.psi_r[0] - integrated.psi_r[0])) <= 1e-9


@pytest.mark.filterwarnings("ignore:overflow encountered")
@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_integration_failure_reported(monkeypatch):
    import saext.spectral as spectral

    # a stiff potential the capped step-halving cannot resolve
    monkeypatch.setattr(spectral, "_MAX_ODE_STEPS", 4096)
    stiff = CallablePotential(lambda x: np.full_like(x, 1e12))
    with pytest.raises(TraceIntegrationError, match="did not reach"):
        fundamental_traces(stiff, IntervalSet([(0.0, 1.0)]), 0.5, mu=1.0,
                           ode_steps=1024)


# ------------------------------------------------------------ determinant paths

@pytest.mark.parametrize("seed", range(10))
def test_block_path_equals_closed_form(seed):
    rng = np.random.default_rng(seed)
    bc = BoundaryCondition.from_matrix(random_unitary(2, rng))
    lam = float(rng.uniform(-2.0, 12.0))
    traces = fundamental_traces(FREE, GEOM, lam, mu=1.0)
    d_block = spectral_det(bc, traces)
    d_closed = spectral_det_closed_1(bc, traces)
    scale = max(1.0, float(np.max(np.abs(traces.psi_r))) ** 2)
    assert abs(d_block - d_closed) <= 1e-12 * scale


@pytest.mark.parametrize("seed", range(10))
def test_parametrized_form_equals_closed_form(seed):
    rng = np.random.default_rng(100 + seed)
    theta = float(rng.uniform(0, 2 * math.pi))
    alpha = rng.standard_normal() + 1j * rng.standard_normal()
    beta = rng.standard_normal() + 1j * rng.standard_normal()
    norm = math.hypot(abs(alpha), abs(beta))
    alpha, beta = alpha / norm, beta / norm
    u = unitary_from_su2_phase(theta, alpha, beta)
    bc = BoundaryCondition.from_matrix(u, ordering="block")
    lam = float(rng.uniform(0.05, 10.0))
    traces = fundamental_traces(FREE, GEOM, lam, mu=0.5, basis="exponential")
    d1 = spectral_det_closed_1(bc, traces)
    d2 = spectral_det_parametrized(theta, alpha, beta, traces)
    assert abs(d1 - d2) <= 1e-12 * max(1.0, abs(d1))


def test_worked_free_particle_formula():
    # mass 1/2 on [0, 2pi], exponential basis: the determinant reduces to
    # a trigonometric expression in sqrt(2 lam).
    rng = np.random.default_rng(5)
    for _ in range(10):
        theta = float(rng.uniform(0, 2 * math.pi))
        alpha = rng.standard_normal() + 1j * rng.standard_normal()
        beta = rng.standard_normal() + 1j * rng.standard_normal()
        norm = math.hypot(abs(alpha), abs(beta))
        alpha, beta = alpha / norm, beta / norm
        lam = float(rng.uniform(0.05, 9.0))
        k = np.sqrt(complex(2 * lam))
        s, c = np.sin(TWO_PI * k), np.cos(TWO_PI * k)
        formula = (
            -2j * (1 + 2 * lam) * s - 4 * k * c
            + np.exp(1j * theta / 2)
            * (4j * alpha.real * (1 - 2 * lam) * s + 8j * beta.imag * k)
            + np.exp(1j * theta) * (-2j * (1 + 2 * lam) * s + 4 * k * c)
        )
        traces = fundamental_traces(FREE, GEOM, lam, mu=0.5, basis="exponential")
        bc = BoundaryCondition.from_matrix(
            unitary_from_su2_phase(theta, alpha, beta), ordering="block"
        )
        value = spectral_det(bc, traces)
        assert abs(value - formula) <= 1e-11 * max(1.0, abs(formula))


def test_spectral_matrix_shape_and_det():
    traces = fundamental_traces(FREE, GEOM, 0.7, mu=1.0)
    bc = BoundaryCondition.dirichlet(1)
    sm = spectral_matrix(bc, traces)
    assert sm.m.shape == (2, 2)
    assert sm.detval == pytest.approx(np.linalg.det(sm.m))


# ----------------------------------------------------------------- root finding

def test_dirichlet_roots_quarter_squares():
    roots = find_spectrum(
        BoundaryCondition.dirichlet(1), FREE, GEOM, (0.1, 5.0), mu=1.0
    )
    assert np.allclose(roots, [0.25, 1.0, 2.25, 4.0], atol=1e-8)


def test_dirichlet_roots_half_mass():
    roots = find_spectrum(
        BoundaryCondition.dirichlet(1), FREE, GEOM, (0.05, 1.3), mu=0.5
    )
    assert np.allclose(roots, [0.125, 0.5, 1.125], atol=1e-8)


@pytest.mark.filterwarnings("ignore:the modulus of the spectral function")
def test_periodic_roots_with_multiplicity():
    roots = find_spectrum(
        BoundaryCondition.quasi_periodic(0.0), FREE, GEOM, (-0.5, 4.5), mu=1.0
    )
    assert roots.size == 5
    assert abs(roots[0]) <= 1e-8
    assert np.allclose(roots[1:], [1.0, 1.0, 4.0, 4.0], atol=1e-8)


@pytest.mark.filterwarnings("ignore:the modulus of the spectral function")
def test_empty_range_is_empty():
    roots = find_spectrum(
        BoundaryCondition.dirichlet(1), FREE, GEOM, (-10.0, -5.0), mu=1.0
    )
    assert roots.size == 0


def test_roots_stable_under_grid_halving():
    bc = BoundaryCondition.dirichlet(1)
    coarse = find_spectrum(bc, FREE, GEOM, (0.1, 5.0), mu=1.0, grid_points=4000)
    fine = find_spectrum(bc, FREE, GEOM, (0.1, 5.0), mu=1.0, grid_points=8000)
    assert coarse.size == fine.size
    assert np.max(np.abs(coarse - fine)) <= 10 * 1e-10 * np.maximum(
        1.0, np.abs(coarse)
    ).max()


def test_boundary_minimum_warns():
    # the next root (6.25) sits just outside the range, so the modulus is
    # still descending at the right edge
    with pytest.warns(UserWarning, match="boundary"):
        find_spectrum(
            BoundaryCondition.dirichlet(1), FREE, GEOM, (0.1, 6.2), mu=1.0
        )


@pytest.mark.filterwarnings("ignore:the modulus of the spectral function")
def test_scan_output_has_raw_determinant():
    roots, scan = find_spectrum(
        BoundaryCondition.dirichlet(1), FREE, GEOM, (0.1, 2.0),
        mu=1.0, grid_points=256, return_scan=True,
    )
    assert scan.lam.size == 256
    assert np.all(scan.absdet >= 0)
    assert np.allclose(np.hypot(scan.redet, scan.imdet), scan.absdet, rtol=1e-12)


def test_constant_potential_shifts_roots():
    # Dirichlet with V = 2: lambda = 2 + k^2/4
    pot = ConstantPotential([2.0])
    roots = find_spectrum(
        BoundaryCondition.dirichlet(1), pot, GEOM, (2.1, 6.1), mu=1.0
    )
    assert np.allclose(roots, [2.25, 3.0, 4.25, 6.0], atol=1e-8)


def test_fem_cross_check_single_random_extension():
    from saext.boundary import assemble_boundary_system, solve_boundary_values
    from saext.eigen import solve_pencil
    from saext.fem import assemble_pencil
    from saext.geometry import build_mesh

    bc = BoundaryCondition.from_matrix(random_unitary(2, np.random.default_rng(3)))
    mesh = build_mesh(GEOM, 800)
    vals = solve_boundary_values(assemble_boundary_system(bc, mesh))
    sol = solve_pencil(assemble_pencil(mesh, bc, vals), count=5)
    fem = sol.eigenvalues
    lo = fem[0] - max(0.1, 0.01 * abs(fem[0]))
    roots = find_spectrum(bc, FREE, GEOM, (lo, fem[-1] + 0.5), mu=1.0)
    assert roots.size >= 5
    rel = np.abs(roots[:5] - fem) / np.maximum(1.0, np.abs(roots[:5]))
    assert np.max(rel) <= 1e-3
