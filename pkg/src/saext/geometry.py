"""Interval-union geometry and its uniform subdivisions.

The spatial domain is a finite disjoint union of compact intervals
[a_alpha, b_alpha].  A single integer resolution N induces one subdivision
of the whole domain: interval alpha is split into r_alpha + 1 equal pieces
of step h_alpha, where r_alpha = floor(L_alpha * N / L) + 1 counts the
interior nodes.  Tying all intervals to one N keeps the steps commensurate,
which the boundary-value solver relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = float(np.finfo(float).eps)


class GeometryError(ValueError):
    """Invalid interval data or an unusable resolution."""


@dataclass(frozen=True)
class IntervalSet:
    """A finite disjoint union of compact real intervals.

    Parameters
    ----------
    intervals : iterable of (float, float)
        Endpoint pairs (a_alpha, b_alpha) with a_alpha < b_alpha.
    """

    intervals: tuple[tuple[float, float], ...]

    def __init__(self, intervals) -> None:
        pairs = tuple((float(a), float(b)) for a, b in intervals)
        if len(pairs) == 0:
            raise GeometryError("need at least one interval")
        for alpha, (a, b) in enumerate(pairs):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise GeometryError(
                    f"interval {alpha} has non-finite endpoints [{a}, {b}]"
                )
            if not a < b:
                raise GeometryError(
                    f"interval {alpha} has nonpositive length: [{a}, {b}]"
                )
        object.__setattr__(self, "intervals", pairs)

    @property
    def n(self) -> int:
        """Number of intervals."""
        return len(self.intervals)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([b - a for (a, b) in self.intervals])

    @property
    def total_length(self) -> float:
        return float(np.sum(self.lengths))


def _interior_count(length: float, total: float, resolution: int) -> int:
    # Exact integer part of L_alpha*N/L.  The quotient is mathematically
    # rational; when the floating-point value sits within 8 ulps of an
    # integer we snap to it so platform rounding cannot flip the floor.
    q = length * resolution / total
    nearest = float(np.rint(q))
    if abs(q - nearest) <= 8.0 * _EPS * max(1.0, abs(q)):
        q = nearest
    return int(np.floor(q)) + 1


@dataclass(frozen=True)
class Mesh:
    """Uniform subdivision of an :class:`IntervalSet` at resolution N.

    Attributes
    ----------
    parent : IntervalSet
    resolution : int
        The global resolution N.
    r : tuple of int
        Interior-node counts r_alpha; interval alpha carries r_alpha + 2
        nodes including its endpoints.
    h : ndarray
        Steps h_alpha = L_alpha / (r_alpha + 1).
    nodes : tuple of ndarray
        Node coordinates per interval, endpoint-exact and strictly
        increasing.
    """

    parent: IntervalSet
    resolution: int
    r: tuple[int, ...]
    h: np.ndarray
    nodes: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.parent.n

    @property
    def dim(self) -> int:
        """Dimension |r| of the associated approximation space."""
        return int(sum(self.r))

    @property
    def h_endpoint(self) -> np.ndarray:
        """Steps in endpoint order: (h_1, h_1, h_2, h_2, ...)."""
        return np.repeat(self.h, 2)


def build_mesh(geom: IntervalSet, resolution: int) -> Mesh:
    """Subdivide ``geom`` at global resolution N.

    Raises
    ------
    GeometryError
        If N < 2n or if some interval would receive fewer than two
        interior nodes; the message names the offending interval.
    """
    resolution = int(resolution)
    n = geom.n
    if resolution < 2 * n:
        raise GeometryError(
            f"resolution {resolution} is below the minimum 2n = {2 * n} "
            f"for {n} interval(s)"
        )
    total = geom.total_length
    counts = []
    for alpha, (a, b) in enumerate(geom.intervals):
        r_alpha = _interior_count(b - a, total, resolution)
        if r_alpha < 2:
            raise GeometryError(
                f"resolution {resolution} leaves interval {alpha} "
                f"([{a}, {b}]) with r = {r_alpha} < 2 interior nodes; "
                "increase the resolution"
            )
        counts.append(r_alpha)

    h = np.array(
        [(b - a) / (r_alpha + 1) for (a, b), r_alpha in zip(geom.intervals, counts)]
    )
    nodes = []
    for (a, b), r_alpha in zip(geom.intervals, counts):
        x = np.linspace(a, b, r_alpha + 2)
        x.flags.writeable = False
        nodes.append(x)
    h.flags.writeable = False
    return Mesh(
        parent=geom,
        resolution=resolution,
        r=tuple(counts),
        h=h,
        nodes=tuple(nodes),
    )
