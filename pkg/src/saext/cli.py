"""Command-line front end.

Subcommands
-----------
solve        eigenvalues (and optional eigenfunction samples) of one problem
oracle       eigenvalues from the spectral-determinant scan
convergence  Sobolev-1 error of the ground state against the resolution
stability    sensitivity of the spectrum to boundary-condition perturbations
condition    conditioning report of the boundary matrix

Outputs are CSV files (RFC-4180 style, header row, 17 significant digits)
plus an echo of the fully resolved configuration.  Exit codes: 0 success,
2 configuration validation, 3 conditioning failure, 4 solver failure,
5 I/O failure.  The environment variable SAEXT_THREADS caps the number of
concurrent work items in the sweep subcommands; sweeps are buffered and
written in canonical order regardless of scheduling.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.optimize

from . import __version__
from .boundary import (
    BoundaryCondition,
    BoundarySolveError,
    ConditionFailure,
    assemble_boundary_system,
    condition_report,
    retry_mesh_on_bad_conditioning,
    solve_boundary_values,
)
from .config import ConfigError, JobConfig, build_problem, parse_config, render_config
from .eigen import EigenSolveError, eigenfunction_samples, h1_error, solve_pencil
from .fem import AssemblyError, assemble_pencil
from .geometry import GeometryError, build_mesh
from .potentials import PotentialError
from .spectral import TraceIntegrationError, find_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONDITIONING = 3
EXIT_SOLVER = 4
EXIT_IO = 5


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _worker_count(n_items: int) -> int:
    raw = os.environ.get("SAEXT_THREADS", "1")
    try:
        cap = max(1, int(raw))
    except ValueError:
        cap = 1
    return max(1, min(cap, n_items))


def _map_over(items, fn):
    """Apply fn to items, optionally in a thread pool; results keep order."""
    workers = _worker_count(len(items))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _echo_config(cfg: JobConfig, out_dir: Path) -> None:
    (out_dir / "resolved_config.txt").write_text(render_config(cfg))


def _solve_problem(cfg: JobConfig, mu: float):
    geom, bc, potential = build_problem(cfg)
    if cfg.resolution < 2 * geom.n:
        raise ConfigError(
            f"resolution = {cfg.resolution} is too small for n = {geom.n}"
        )
    mesh, system, values = retry_mesh_on_bad_conditioning(
        bc, geom, cfg.resolution, kappa_max=cfg.kappa_max,
        max_retries=cfg.kappa_retries,
    )
    pencil = assemble_pencil(mesh, bc, values, potential, mu=mu)
    count = cfg.eigen_count if cfg.eigen_count > 0 else None
    solution = solve_pencil(pencil, count=count)
    return geom, bc, potential, mesh, values, pencil, solution


def _dump_matrix(path: Path, matrix: np.ndarray) -> None:
    rows = [
        [str(i), str(j), _fmt(matrix[i, j].real), _fmt(matrix[i, j].imag)]
        for i in range(matrix.shape[0])
        for j in range(matrix.shape[1])
        if matrix[i, j] != 0
    ]
    _write_csv(path, ["i", "j", "re", "im"], rows)


def cmd_solve(cfg: JobConfig, out_dir: Path, mu: float, levels: int,
              dump_pencil: bool = False) -> int:
    _, _, _, mesh, values, pencil, solution = _solve_problem(cfg, mu)
    rows = [
        [str(k), _fmt(lam), _fmt(res)]
        for k, (lam, res) in enumerate(
            zip(solution.eigenvalues, solution.residuals)
        )
    ]
    _write_csv(out_dir / "spectrum.csv", ["index", "lambda", "residual"], rows)
    for k in range(min(levels, solution.count)):
        x, vals = eigenfunction_samples(solution, mesh, values, k)
        rows = [[_fmt(xi), _fmt(v.real), _fmt(v.imag)] for xi, v in zip(x, vals)]
        _write_csv(out_dir / f"eigenfunction_{k}.csv", ["x", "re", "im"], rows)
    if dump_pencil:
        _dump_matrix(out_dir / "pencil_a.csv", pencil.a)
        _dump_matrix(out_dir / "pencil_b.csv", pencil.b)
    _echo_config(cfg, out_dir)
    return EXIT_OK


def cmd_oracle(cfg: JobConfig, out_dir: Path, mu: float) -> int:
    geom, bc, potential = build_problem(cfg)
    grid = cfg.oracle_grid_points if cfg.oracle_grid_points > 0 else None
    result = find_spectrum(
        bc, potential, geom,
        (cfg.oracle_lambda_min, cfg.oracle_lambda_max),
        grid_points=grid, mu=mu, return_scan=cfg.oracle_scan_output,
    )
    if cfg.oracle_scan_output:
        roots, scan = result
        rows = [
            [_fmt(rec.lam), _fmt(rec.absdet), _fmt(rec.redet), _fmt(rec.imdet)]
            for rec in scan
        ]
        _write_csv(
            out_dir / "scan.csv",
            ["lambda", "abs_Lambda", "re_Lambda", "im_Lambda"],
            rows,
        )
    else:
        roots = result
    rows = [[str(k), _fmt(lam)] for k, lam in enumerate(roots)]
    _write_csv(out_dir / "roots.csv", ["index", "lambda"], rows)
    _echo_config(cfg, out_dir)
    return EXIT_OK


def _ground_state_reference(geom, mu: float):
    """Unit-norm ground state of the Dirichlet problem on a single interval."""
    if geom.n != 1:
        raise ConfigError("the convergence study needs a single interval")
    a, b = geom.intervals[0]
    length = b - a
    amp = math.sqrt(2.0 / length)
    freq = math.pi / length

    def psi(x):
        return amp * np.sin(freq * (np.asarray(x) - a))

    def dpsi(x):
        return amp * freq * np.cos(freq * (np.asarray(x) - a))

    return psi, dpsi


def _fit_loglog(ns, errors):
    """Least-squares slope of log(error) vs log(N) and its standard error."""
    logn = np.log(np.asarray(ns, dtype=float))
    loge = np.log(np.asarray(errors, dtype=float))
    m = logn.size
    design = np.vstack([logn, np.ones(m)]).T
    coeffs, *_ = np.linalg.lstsq(design, loge, rcond=None)
    slope, intercept = coeffs
    fitted = design @ coeffs
    if m > 2:
        resid = loge - fitted
        s2 = float(resid @ resid) / (m - 2)
        denom = float(np.sum((logn - logn.mean()) ** 2))
        stderr = math.sqrt(s2 / denom)
    else:
        stderr = 0.0
    return float(slope), float(stderr)


def cmd_convergence(cfg: JobConfig, out_dir: Path, mu: float) -> int:
    geom, bc, potential = build_problem(cfg)
    if cfg.boundary_kind != "dirichlet":
        raise ConfigError(
            "the convergence study uses the built-in Dirichlet reference; "
            f"boundary.kind is {cfg.boundary_kind!r}"
        )
    reference = _ground_state_reference(geom, mu)
    resolutions = list(cfg.convergence_resolutions)
    if not resolutions:
        raise ConfigError("convergence.resolutions is empty")

    def one(n_res):
        mesh, _, values = retry_mesh_on_bad_conditioning(
            bc, geom, n_res, kappa_max=cfg.kappa_max, max_retries=cfg.kappa_retries
        )
        pencil = assemble_pencil(mesh, bc, values, potential, mu=mu)
        solution = solve_pencil(pencil, count=1)
        return h1_error(solution, 0, mesh, values, reference)

    errors = _map_over(resolutions, one)
    rows = [[str(n), _fmt(e)] for n, e in zip(resolutions, errors)]
    if len(resolutions) >= 2:
        slope, stderr = _fit_loglog(resolutions, errors)
        rows.append(["slope", _fmt(slope)])
        rows.append(["slope_stderr", _fmt(stderr)])
    else:
        rows.append(["fit_status", "insufficient-data"])
    _write_csv(out_dir / "convergence.csv", ["N", "h1_error"], rows)
    _echo_config(cfg, out_dir)
    return EXIT_OK


def nearest_unitary(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Polar factor of a matrix and its distance to the input."""
    u, _ = scipy.linalg.polar(matrix)
    return u, float(np.linalg.norm(matrix - u))


def _power_law_fit(eps: np.ndarray, k_vals: np.ndarray):
    """Fit K(eps) = a * eps**b + c; deterministic multi-start least squares.

    Returns (a, b, c) or None when every start fails.
    """

    def model(x, a, b, c):
        return a * np.power(x, b) + c

    best = None
    best_cost = np.inf
    k0 = float(k_vals[0])
    k1 = float(k_vals[-1])
    e0 = float(eps[0])
    for b0 in (-1.0, -0.5, -0.1, 0.1, 0.5):
        a0 = (k0 - k1) * e0 ** (-b0)
        if not np.isfinite(a0) or a0 == 0.0:
            a0 = 1.0
        for c0 in (k1, 0.0):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", scipy.optimize.OptimizeWarning)
                    params, _ = scipy.optimize.curve_fit(
                        model, eps, k_vals, p0=(a0, b0, c0), maxfev=20000
                    )
            except (RuntimeError, ValueError):
                continue
            resid = model(eps, *params) - k_vals
            cost = float(resid @ resid)
            if cost < best_cost:
                best_cost = cost
                best = tuple(float(p) for p in params)
    return best


def _level_clusters(eigenvalues: np.ndarray, rtol: float = 1e-3) -> list[list[int]]:
    """Group sorted eigenvalues into near-degenerate clusters.

    Distinct energy levels of the unperturbed problem; the periodic free
    particle has a simple ground level followed by exactly double levels,
    split only at discretization-error size.
    """
    clusters: list[list[int]] = [[0]]
    for i in range(1, eigenvalues.size):
        prev = eigenvalues[clusters[-1][0]]
        if abs(eigenvalues[i] - prev) <= rtol * max(1.0, abs(prev)):
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return clusters


def stability_study(
    cfg: JobConfig,
    mu: float,
    levels: int,
):
    """Relative eigenvalue sensitivity under boundary perturbations.

    The base boundary condition must be periodic.  For each epsilon the
    perturbed matrix U + i eps A (A = [[0, 1], [-1, 0]]) is replaced by its
    nearest unitary before solving ('linear' mode), or the exactly unitary
    member u(a) = e^{i eps} u(b) of the same family is used ('geodesic'
    mode).

    Tracked level m is the m-th excited energy level, i.e. the m-th
    near-degenerate cluster above the ground level; in the periodic case
    these are the double levels 1, 4, 9, 16, ...  K averages
    |delta lambda| / (eps |lambda|) over the cluster members, matched to
    the unperturbed members by sorted index (or by nearest value with
    stability.matching = nearest).

    Returns (rows, fits, distances): per-epsilon per-level ratios K,
    per-level power-law fits K = a eps^b + c, and the re-unitarization
    distances.
    """
    geom, bc, potential = build_problem(cfg)
    periodic = BoundaryCondition.quasi_periodic(0.0)
    if geom.n != 1 or np.max(np.abs(bc.u_endpoint - periodic.u_endpoint)) > 1e-12:
        raise ConfigError("the stability study requires the periodic "
                          "boundary condition on a single interval")
    if cfg.stability_mode not in ("linear", "geodesic"):
        raise ConfigError(f"unknown stability.mode {cfg.stability_mode!r}")
    if cfg.stability_matching not in ("index", "nearest"):
        raise ConfigError(f"unknown stability.matching {cfg.stability_matching!r}")

    # worst case all tracked levels are double plus a simple ground level
    count = 2 * levels + 1
    mesh = build_mesh(geom, cfg.resolution)

    def eigenvalues_for(bc_eps: BoundaryCondition) -> np.ndarray:
        system = assemble_boundary_system(bc_eps, mesh)
        values = solve_boundary_values(system, kappa_max=cfg.kappa_max)
        pencil = assemble_pencil(mesh, bc_eps, values, potential, mu=mu)
        return solve_pencil(pencil, count=count).eigenvalues

    base = eigenvalues_for(bc)
    clusters = _level_clusters(base)
    if len(clusters) < levels + 1:
        raise ConfigError(
            f"only {len(clusters)} distinct levels available, "
            f"need {levels + 1} (ground + {levels})"
        )

    n_steps = int(round((cfg.stability_eps_stop - cfg.stability_eps_start)
                        / cfg.stability_eps_step)) + 1
    eps_list = [cfg.stability_eps_start + i * cfg.stability_eps_step
                for i in range(n_steps)]
    eps_list = [e for e in eps_list if e <= cfg.stability_eps_stop * (1 + 1e-12)]

    generator = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def one(eps):
        if eps == 0.0:
            return None, 0.0
        if cfg.stability_mode == "linear":
            perturbed = bc.u_endpoint + 1j * eps * generator
            u_eps, distance = nearest_unitary(perturbed)
            bc_eps = BoundaryCondition.from_matrix(u_eps)
        else:
            bc_eps = BoundaryCondition.quasi_periodic(eps)
            distance = 0.0
        return eigenvalues_for(bc_eps), distance

    results = _map_over(eps_list, one)

    rows = []  # (record, epsilon, level, value)
    distances = []
    per_level: dict[int, list[tuple[float, float]]] = {
        lev: [] for lev in range(1, levels + 1)
    }
    for eps, (lam_eps, distance) in zip(eps_list, results):
        if lam_eps is None:
            rows.append(("skipped_epsilon", eps, "", "K undefined at epsilon = 0"))
            continue
        distances.append((eps, distance))
        for lev in range(1, levels + 1):
            members = clusters[lev]
            if any(abs(base[i]) < 1e-6 for i in members):
                rows.append(("skipped", eps, lev, "ill-conditioned ratio"))
                continue
            ratios = []
            for i in members:
                if cfg.stability_matching == "index":
                    lam_p = lam_eps[i]
                else:
                    lam_p = lam_eps[int(np.argmin(np.abs(lam_eps - base[i])))]
                ratios.append(abs(lam_p - base[i]) / (eps * abs(base[i])))
            ratio = float(np.mean(ratios))
            rows.append(("K", eps, lev, ratio))
            per_level[lev].append((eps, ratio))

    fits = {}
    for lev, pairs in per_level.items():
        if len(pairs) >= 4:
            e_arr = np.array([p[0] for p in pairs])
            k_arr = np.array([p[1] for p in pairs])
            fits[lev] = _power_law_fit(e_arr, k_arr)
        else:
            fits[lev] = None
    return rows, fits, distances


def cmd_stability(cfg: JobConfig, out_dir: Path, mu: float, levels: int) -> int:
    rows, fits, distances = stability_study(cfg, mu, levels)
    csv_rows = []
    for record, eps, lev, value in rows:
        rendered = _fmt(value) if isinstance(value, float) else str(value)
        csv_rows.append([record, _fmt(eps), str(lev), rendered])
    for lev in sorted(fits):
        fit = fits[lev]
        if fit is None:
            csv_rows.append(["fit_status", "", str(lev), "insufficient-data"])
        else:
            a, b, c = fit
            csv_rows.append(["fit_a", "", str(lev), _fmt(a)])
            csv_rows.append(["fit_b", "", str(lev), _fmt(b)])
            csv_rows.append(["fit_c", "", str(lev), _fmt(c)])
    for eps, distance in distances:
        csv_rows.append(["unitarization_distance", _fmt(eps), "", _fmt(distance)])
    _write_csv(
        out_dir / "stability.csv", ["record", "epsilon", "level", "value"], csv_rows
    )
    _echo_config(cfg, out_dir)
    return EXIT_OK


def cmd_condition(cfg: JobConfig, out_dir: Path) -> int:
    geom, bc, _ = build_problem(cfg)
    mesh = build_mesh(geom, cfg.resolution)
    system = assemble_boundary_system(bc, mesh)
    report = condition_report(system)
    print(f"kappa_estimate = {_fmt(report.kappa_estimate)}")
    print(f"bound = {_fmt(report.bound)}")
    print(f"spectrum_gap = {_fmt(report.spectrum_gap)}")
    if report.incompatible:
        print(f"note = {report.note}")
    _write_csv(
        out_dir / "condition.csv",
        ["kappa_estimate", "bound", "spectrum_gap", "incompatible"],
        [[
            _fmt(report.kappa_estimate),
            _fmt(report.bound),
            _fmt(report.spectrum_gap),
            "true" if report.incompatible else "false",
        ]],
    )
    _echo_config(cfg, out_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saext",
        description="Spectra of 1D Schrodinger operators under arbitrary "
        "self-adjoint boundary conditions",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve the eigenvalue problem and write spectrum.csv"),
        ("oracle", "locate eigenvalues with the spectral-determinant scan"),
        ("convergence", "ground-state Sobolev-1 error vs resolution"),
        ("stability", "eigenvalue sensitivity to boundary perturbations"),
        ("condition", "conditioning report for the boundary matrix"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="configuration file")
        cmd.add_argument("--out", default=".", help="output directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the configured RNG seed")
        cmd.add_argument("--mu", type=float, default=None,
                         help="override the configured mass factor")
        cmd.add_argument("--levels", type=int, default=None,
                         help="eigenfunction files (solve) or tracked "
                         "levels (stability)")
        if name == "solve":
            cmd.add_argument("--dump-pencil", action="store_true",
                             help="write the nonzero entries of A and B "
                             "as CSV for debugging")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"saext: cannot read config: {exc}", file=sys.stderr)
            return EXIT_IO
        cfg = parse_config(text)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.mu is not None:
            cfg.mu = args.mu
        mu = cfg.mu
        out_dir = Path(args.out)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            print(f"saext: cannot create output directory: {exc}", file=sys.stderr)
            return EXIT_IO

        if args.command == "solve":
            levels = args.levels if args.levels is not None else 0
            return cmd_solve(cfg, out_dir, mu, levels,
                             dump_pencil=args.dump_pencil)
        if args.command == "oracle":
            return cmd_oracle(cfg, out_dir, mu)
        if args.command == "convergence":
            return cmd_convergence(cfg, out_dir, mu)
        if args.command == "stability":
            levels = args.levels if args.levels is not None else cfg.stability_levels
            return cmd_stability(cfg, out_dir, mu, levels)
        if args.command == "condition":
            return cmd_condition(cfg, out_dir)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, GeometryError, PotentialError) as exc:
        print(f"saext: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConditionFailure as exc:
        print(f"saext: conditioning failure: {exc}", file=sys.stderr)
        return EXIT_CONDITIONING
    except (EigenSolveError, AssemblyError, BoundarySolveError,
            TraceIntegrationError) as exc:
        print(f"saext: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"saext: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


def console_main() -> None:
    sys.exit(main())
