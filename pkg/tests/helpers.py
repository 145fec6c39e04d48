"""Independent oracles and generators shared by the test modules.

These deliberately avoid the library's own code paths wherever they are
used to check one: the characteristic-polynomial eigenvalue solver, the
permutation-matrix ordering oracle and the brute-force quadrature all go
through generic numpy/scipy machinery only.
"""

from __future__ import annotations

import numpy as np
import scipy.integrate


def hermitize(m: np.ndarray) -> np.ndarray:
    """Exactly hermitian part of a matrix (exact in IEEE arithmetic)."""
    return (m + m.conj().T) / 2.0


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return hermitize(z)


def random_spd(dim: int, rng: np.random.Generator, shift: float = 0.5) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return hermitize(z @ z.conj().T) + shift * np.eye(dim)


def charpoly_eigenvalues(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Generalized eigenvalues as roots of det(A - t B).

    det(A - t B) is a polynomial of degree dim in t; it is recovered by
    exact interpolation at Chebyshev points, fed to the companion-matrix
    root finder, and each root is polished by Newton iteration on the
    determinant (Jacobi's formula: d/dt log det(A - tB) = -tr((A-tB)^-1 B)).
    For a hermitian pencil with B positive definite the roots are real.
    """
    dim = a.shape[0]
    bound = float(np.linalg.norm(np.linalg.solve(b, a), 2)) * 1.25 + 1.0
    ts = np.cos(np.pi * (2 * np.arange(dim + 1) + 1) / (2 * (dim + 1))) * bound
    vals = np.array([np.linalg.det(a - t * b) for t in ts])
    assert np.max(np.abs(vals.imag)) <= 1e-8 * np.max(np.abs(vals))
    coeffs = np.polynomial.polynomial.polyfit(ts, vals.real, dim)
    roots = np.polynomial.polynomial.polyroots(coeffs)
    assert np.max(np.abs(roots.imag)) <= 1e-6 * max(1.0, np.max(np.abs(roots)))
    polished = []
    for t in roots.real:
        for _ in range(8):
            m = a - t * b
            f0 = abs(np.linalg.det(m))
            if f0 == 0.0:
                break
            trace = np.trace(np.linalg.solve(m, b)).real
            if trace == 0.0 or not np.isfinite(trace):
                break
            step = 1.0 / trace
            # a start already at a root makes the solve meaningless and can
            # produce a wild step; genuine polish moves are interp-error sized
            if abs(step) > 1e-4 * (1.0 + abs(t)):
                break
            if abs(np.linalg.det(a - (t + step) * b)) >= f0:
                break
            t = t + step
            if abs(step) <= 1e-14 * max(1.0, abs(t)):
                break
        polished.append(t)
    return np.sort(np.asarray(polished))


def permutation_matrix(sigma: np.ndarray) -> np.ndarray:
    """P with P[sigma[e], e] = 1, so P x_endpoint = x_block."""
    dim = sigma.size
    p = np.zeros((dim, dim))
    p[sigma, np.arange(dim)] = 1.0
    return p


def quad_complex(f, a: float, b: float, **kwargs) -> complex:
    """Adaptive quadrature of a complex-valued integrand."""
    re, _ = scipy.integrate.quad(lambda x: f(x).real, a, b, **kwargs)
    im, _ = scipy.integrate.quad(lambda x: f(x).imag, a, b, **kwargs)
    return complex(re, im)


def weighted_hermitian_values(
    n: int, h_endpoint: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Random boundary-value matrix satisfying the weighted symmetry
    (1/h_j) conj(V[j, i]) = (1/h_i) V[i, j] exactly."""
    g = random_hermitian(2 * n, rng)
    return h_endpoint[:, None] * g
