"""Reference experiments: manufactured convergence studies, the bridge
ramp-down run, and Jacobian sparsity/conditioning reports."""

import csv
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .assembly import BRIDGE_MIXED, CLAMPED, DofMap, assemble, interpolate
from .dynamics import (PhysicalParams, TimeState, estimate_jacobian_condition,
                       jacobian_blocks, run_simulation, solve_stationary)
from .mesh import (bridge_tagger, generate_distorted_grid,
                   generate_nonconvex_grid, generate_regular_polygon_grid,
                   generate_square_grid, generate_voronoi)

MESH_FAMILIES = ("square", "distorted", "voronoi", "nonconvex", "hexagon")

#: domain of the bridge experiment: a 150:1 span between hinged short ends
BRIDGE_BOUNDS = (0.0, -math.pi / 150.0, math.pi, math.pi / 150.0)


def _profile(z):
    return (z - z * z) ** 2


def _profile_d1(z):
    return 2.0 * (z - z * z) * (1.0 - 2.0 * z)


def _profile_d2(z):
    return 12.0 * z * z - 12.0 * z + 2.0


class ManufacturedSolution:
    """Closed-form solution of the clamped plate model on the unit square.

    u(x, y, t) = sin(pi t) (x - x^2)^2 (y - y^2)^2 vanishes together with
    its gradient on the boundary, so it satisfies the clamped conditions
    exactly, and every derivative needed for the induced forcing is
    available in closed form.  The nonlocal coefficient is analytic as
    well: int_O (D_x u)^2 = sin^2(pi t) * (2/105) * (1/630).
    """

    # int (D1 profile)^2 * int profile^2 = (2/105)*(1/630)
    AXIAL_CONSTANT = 1.0 / 33075.0

    def value(self, x, y, t):
        return np.sin(np.pi * t) * _profile(x) * _profile(y)

    def velocity(self, x, y, t):
        return np.pi * np.cos(np.pi * t) * _profile(x) * _profile(y)

    def acceleration(self, x, y, t):
        return -np.pi ** 2 * np.sin(np.pi * t) * _profile(x) * _profile(y)

    def gradient(self, x, y, t):
        s = np.sin(np.pi * t)
        return (s * _profile_d1(x) * _profile(y),
                s * _profile(x) * _profile_d1(y))

    def hessian(self, x, y, t):
        s = np.sin(np.pi * t)
        return (s * _profile_d2(x) * _profile(y),
                s * _profile_d1(x) * _profile_d1(y),
                s * _profile(x) * _profile_d2(y))

    def biharmonic(self, x, y, t):
        # profile'''' = 24, so Dxxxx u + 2 Dxxyy u + Dyyyy u collapses
        return np.sin(np.pi * t) * (24.0 * _profile(y)
                                    + 2.0 * _profile_d2(x) * _profile_d2(y)
                                    + 24.0 * _profile(x))

    def axial_integral(self, t):
        """Exact value of int_O (D_x u)^2 at time t."""
        return np.sin(np.pi * t) ** 2 * self.AXIAL_CONSTANT

    def forcing(self, delta=1.0, P=0.0, S=0.0):
        """Load g(x, y, t) that makes u solve the model exactly."""

        def g(x, y, t):
            coeff = P - S * self.axial_integral(t)
            uxx = np.sin(np.pi * t) * _profile_d2(x) * _profile(y)
            return (self.acceleration(x, y, t)
                    + delta * self.velocity(x, y, t)
                    + self.biharmonic(x, y, t) + coeff * uxx)

        return g

    def displacement_at(self, t):
        """(value, gradient) pair of u at fixed time, for interpolation."""
        return (lambda x, y: self.value(x, y, t),
                lambda x, y: self.gradient(x, y, t))

    def velocity_at(self, t):
        """(value, gradient) pair of D_t u at fixed time."""
        s = np.pi * np.cos(np.pi * t)
        return (lambda x, y: s * _profile(x) * _profile(y),
                lambda x, y: (s * _profile_d1(x) * _profile(y),
                              s * _profile(x) * _profile_d1(y)))

    def hessian_at(self, t):
        """Second-derivative triple of u at fixed time."""
        return lambda x, y: self.hessian(x, y, t)


def build_mesh(family, n, bounds=(0.0, 0.0, 1.0, 1.0), tagger=None, seed=0,
               lloyd_iterations=2):
    """Construct one mesh of the named family at refinement index n.

    For the structured families n is the number of subdivisions per axis;
    the Voronoi family uses n**2 Lloyd-smoothed seeds so that the average
    cell size matches the structured families at the same index.
    """
    if family == "square":
        return generate_square_grid(n, bounds, tagger)
    if family == "distorted":
        return generate_distorted_grid(n, bounds, seed=seed, tagger=tagger)
    if family == "voronoi":
        return generate_voronoi(n * n, bounds, lloyd_iterations, seed=seed,
                                tagger=tagger)
    if family == "nonconvex":
        return generate_nonconvex_grid(n, bounds, tagger)
    if family == "hexagon":
        return generate_regular_polygon_grid(n, bounds, tagger)
    raise ValueError(f"unknown mesh family {family!r}; "
                     f"choose one of {MESH_FAMILIES}")


def mean_cell_size(mesh):
    """Square root of the average cell area (1/n on an n-by-n unit grid)."""
    return math.sqrt(mesh.cell_area.sum() / mesh.n_cells)


def space_dominated_dt(cell_size, T):
    """Largest dt <= cell_size**2 that divides T into whole steps."""
    steps = max(2, math.ceil(T / cell_size ** 2 - 1e-9))
    return T / steps


def error_h2(system, eta, hessian):
    """Broken H2-seminorm distance between the energy projection of the
    discrete solution and exact second derivatives.

    Parameters
    ----------
    eta : free-DoF vector
    hessian : callable (x, y) -> (uxx, uxy, uyy), time already fixed.
    """
    full = system.expand(eta)
    mesh, dof_map = system.mesh, system.dof_map
    total = 0.0
    for ci, loc in enumerate(system.locals):
        k = loc.kernel
        coeff = loc.projectors.P_delta @ full[dof_map.cell_slots(mesh, ci)]
        # the projection is a quadratic: its curvatures are constants
        pxx = k.d2xx @ coeff
        pxy = k.d2xy @ coeff
        pyy = k.d2yy @ coeff
        x, y = k.rule.points[:, 0], k.rule.points[:, 1]
        uxx, uxy, uyy = hessian(x, y)
        total += k.rule.weights @ ((uxx - pxx) ** 2
                                   + 2.0 * (uxy - pxy) ** 2
                                   + (uyy - pyy) ** 2)
    return math.sqrt(total)


def error_rel(system, eta, eta_exact):
    """Relative energy error A(e, e)/A(u_I, u_I) of the DoF difference
    e = eta - eta_exact against the interpolated exact solution."""
    den = eta_exact @ (system.A @ eta_exact)
    if den <= 0.0:
        raise ZeroDivisionError("exact interpolant has zero energy")
    d = eta - eta_exact
    return (d @ (system.A @ d)) / den


class ConvergenceRow:
    """One refinement level of a convergence table."""

    def __init__(self, h, ndof, err_h2, err_rel, eoc, newton_max,
                 cond_estimate):
        self.h = h
        self.ndof = ndof
        self.err_h2 = err_h2
        self.err_rel = err_rel
        self.eoc = eoc
        self.newton_max = newton_max
        self.cond_estimate = cond_estimate

    def __repr__(self):
        eoc = "-" if self.eoc is None else f"{self.eoc:.3f}"
        return (f"ConvergenceRow(h={self.h:.4e}, ndof={self.ndof}, "
                f"err_h2={self.err_h2:.4e}, err_rel={self.err_rel:.4e}, "
                f"eoc={eoc}, newton_max={self.newton_max}, "
                f"cond={self.cond_estimate:.3e})")


def _attach_eoc(rows):
    for prev, row in zip(rows, rows[1:]):
        row.eoc = (math.log(prev.err_h2 / row.err_h2)
                   / math.log(prev.h / row.h))
    return rows


def _example1_level(task):
    (family, n, dt_policy, dt, scheme, sigma, delta, P, S, T, seed,
     with_conditioning) = task
    sol = ManufacturedSolution()
    params = PhysicalParams(delta=delta, sigma=sigma, P=P, S=S,
                            g=sol.forcing(delta, P, S))
    mesh = build_mesh(family, n, seed=seed)
    system = assemble(mesh, DofMap(mesh, CLAMPED), sigma, delta)
    if dt_policy == "h2":
        dt_n = space_dominated_dt(mean_cell_size(mesh), T)
    elif dt_policy == "fixed":
        if dt is None:
            raise ValueError("dt_policy 'fixed' needs an explicit dt")
        dt_n = dt
    else:
        raise ValueError(f"unknown dt policy {dt_policy!r}")
    traj = run_simulation(system, params, None, sol.velocity_at(0.0),
                          dt_n, T, scheme)
    eta = traj.final_state.eta_n
    e2 = error_h2(system, eta, sol.hessian_at(T))
    exact = interpolate(system, *sol.displacement_at(T))
    erel = error_rel(system, eta, exact)
    cond = (estimate_jacobian_condition(system, params, traj.final_state,
                                        dt_n)
            if with_conditioning else float("nan"))
    return ConvergenceRow(mesh.h, 3 * mesh.n_vertices, e2, erel, None,
                          max(traj.newton_iters), cond)


def run_example1(mesh_family="square", levels=(4, 8, 16, 32),
                 dt_policy="h2", dt=None, scheme="nonlinear", sigma=0.3,
                 delta=1.0, P=1e-3, S=1e-5, T=0.5, seed=0,
                 with_conditioning=True, workers=1, progress=None):
    """Convergence study for the manufactured clamped-plate solution.

    Each level assembles the chosen mesh family, marches the full scheme
    to T, and records the broken-H2 and relative energy errors plus the
    worst Newton count and a Jacobian condition estimate.  The default
    "h2" policy couples dt to the squared mean cell size so the spatial
    error dominates; "fixed" reuses one dt across all levels.

    Returns a list of ConvergenceRow with experimental orders attached
    from the second row on.  Levels are independent; workers > 1 runs
    them in separate processes.
    """
    if len(levels) < 2:
        raise ValueError("need at least two refinement levels")
    tasks = [(mesh_family, n, dt_policy, dt, scheme, sigma, delta, P, S, T,
              seed, with_conditioning) for n in levels]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_example1_level, tasks))
        if progress is not None:
            for n, row in zip(levels, rows):
                progress(n, row)
    else:
        rows = []
        for n, task in zip(levels, tasks):
            row = _example1_level(task)
            rows.append(row)
            if progress is not None:
                progress(n, row)
    return _attach_eoc(rows)


class TemporalRow:
    """One time-refinement level measured against a reference run."""

    def __init__(self, dt, error, eoc):
        self.dt = dt
        self.error = error
        self.eoc = eoc

    def __repr__(self):
        eoc = "-" if self.eoc is None else f"{self.eoc:.3f}"
        return f"TemporalRow(dt={self.dt:.6g}, error={self.error:.4e}, eoc={eoc})"


def run_temporal_study(n=32, dts=(0.1, 0.05, 0.025, 0.0125),
                       dt_ref=1.0 / 640.0, T=0.5, scheme="nonlinear",
                       sigma=0.3, delta=1.0, P=1e-3, S=1e-5, progress=None):
    """Time refinement on a fixed mesh against a fine-step reference.

    The error is the M-weighted norm of the DoF difference at the final
    time; the mesh (and therefore the spatial error) is shared by all
    runs, so only the time discretization is measured.
    """
    sol = ManufacturedSolution()
    params = PhysicalParams(delta=delta, sigma=sigma, P=P, S=S,
                            g=sol.forcing(delta, P, S))
    mesh = build_mesh("square", n)
    system = assemble(mesh, DofMap(mesh, CLAMPED), sigma, delta)
    omega0 = sol.velocity_at(0.0)

    def final(step):
        traj = run_simulation(system, params, None, omega0, step, T, scheme)
        return traj.final_state.eta_n

    reference = final(dt_ref)
    rows = []
    for dt in dts:
        if dt <= dt_ref:
            raise ValueError("refinement steps must stay above dt_ref")
        d = final(dt) - reference
        rows.append(TemporalRow(dt, math.sqrt(d @ (system.M @ d)), None))
        if progress is not None:
            progress(dt, rows[-1])
    for prev, row in zip(rows, rows[1:]):
        row.eoc = math.log(prev.error / row.error) / math.log(prev.dt / row.dt)
    return rows


def bridge_damping(bounds, h, frame=1.0):
    """Damping field active on the boundary frame of the bridge deck.

    The strip is 10h wide at the hinged ends and 5h wide along the free
    edges, h being the mesh size; outside the frame the damping is zero.
    """
    xmin, ymin, xmax, ymax = bounds

    def delta(x, y):
        near = ((x < xmin + 10.0 * h) | (x > xmax - 10.0 * h)
                | (y < ymin + 5.0 * h) | (y > ymax - 5.0 * h))
        return np.where(near, frame, 0.0)

    return delta


def run_example2(n=16, dt=1e-3, T=5.0, scheme="nonlinear", sigma=0.2,
                 P=1e-3, S=1e-5, load_amplitude=50.0, damping="strip",
                 config=None, observer=None):
    """Bridge ramp-down: release a statically loaded deck and let the
    boundary-frame damping absorb the oscillation.

    The deck starts from the stationary deflection under the axial load
    g0 = load_amplitude*sin(2x) with zero velocity, then evolves with
    g = 0.  `damping` selects the strip field, uniform delta = 1, or no
    damping at all (the control experiment, where the energy oscillates
    instead of decaying).

    Returns (trajectory, system).
    """
    bounds = BRIDGE_BOUNDS
    mesh = generate_square_grid(n, bounds, bridge_tagger(bounds))
    if damping == "strip":
        delta = bridge_damping(bounds, mesh.h)
    elif damping == "uniform":
        delta = 1.0
    elif damping == "none":
        delta = 0.0
    else:
        raise ValueError(f"unknown damping mode {damping!r}")
    system = assemble(mesh, DofMap(mesh, BRIDGE_MIXED), sigma, delta)
    params = PhysicalParams(delta=delta, sigma=sigma, P=P, S=S)
    u0 = solve_stationary(system, lambda x, y: load_amplitude * np.sin(2.0 * x))
    traj = run_simulation(system, params, u0, None, dt, T, scheme,
                          config, observer)
    return traj, system


class JacobianReport:
    """Structural sparsity counts of the augmented Newton matrix.

    nnz_bordered counts the sparse block plus the rank-one border and
    the scalar corner; nnz_full is the pattern size of the eliminated
    system J1 + J2*J3, whose rank-one update couples every DoF reached
    by the axial form.
    """

    def __init__(self, size, nnz_j1, nnz_bordered, nnz_full, cond_estimate):
        self.size = size
        self.nnz_j1 = nnz_j1
        self.nnz_bordered = nnz_bordered
        self.nnz_full = nnz_full
        self.ratio = nnz_bordered / nnz_full
        self.cond_estimate = cond_estimate

    def __repr__(self):
        return (f"JacobianReport(size={self.size}, nnz_j1={self.nnz_j1}, "
                f"nnz_bordered={self.nnz_bordered}, nnz_full={self.nnz_full}, "
                f"ratio={self.ratio:.4f}, cond={self.cond_estimate:.3e})")


def report_jacobian(system, params, state, dt):
    """Sparsity and conditioning record of the Jacobian at one state."""
    J1, J2, J3, _ = jacobian_blocks(system, params, dt, state.eta_n,
                                    state.xi)
    J1 = J1.tocsr()
    J1.eliminate_zeros()
    rows = np.flatnonzero(J2)
    cols = np.flatnonzero(J3)
    nnz_bordered = J1.nnz + rows.size + cols.size + 1
    if rows.size and cols.size:
        overlap = J1[rows][:, cols].nnz
    else:
        overlap = 0
    nnz_full = J1.nnz + rows.size * cols.size - overlap
    cond = estimate_jacobian_condition(system, params, state, dt)
    return JacobianReport(J1.shape[0], J1.nnz, nnz_bordered, nnz_full, cond)


def representative_state(system, time=0.5):
    """Interpolant of the manufactured peak deflection, as a TimeState."""
    sol = ManufacturedSolution()
    eta = interpolate(system, *sol.displacement_at(time))
    return TimeState(eta, eta.copy(), xi=eta @ (system.Ax @ eta))


def jacobian_study(levels=(8, 16, 32, 64), dt=0.1, mesh_family="square",
                   sigma=0.3, delta=1.0, P=1e-3, S=1e-5, seed=0,
                   progress=None):
    """Jacobian reports across mesh refinement at one fixed dt.

    The fixed step isolates the h-dependence of the condition number;
    the state is the interpolated manufactured peak deflection so that
    the nonlocal border is populated.  Returns [(h, ndof, report)].
    """
    params = PhysicalParams(delta=delta, sigma=sigma, P=P, S=S)
    out = []
    for n in levels:
        mesh = build_mesh(mesh_family, n, seed=seed)
        system = assemble(mesh, DofMap(mesh, CLAMPED), sigma, delta)
        report = report_jacobian(system, params,
                                 representative_state(system), dt)
        out.append((mesh.h, 3 * mesh.n_vertices, report))
        if progress is not None:
            progress(n, report)
    return out


def condition_growth_slope(study):
    """Log-log slope of the condition estimate against 1/h."""
    hs = np.array([h for h, _, _ in study])
    conds = np.array([r.cond_estimate for _, _, r in study])
    coeffs = np.polyfit(np.log(1.0 / hs), np.log(conds), 1)
    return coeffs[0]


def write_convergence_csv(rows, path):
    """Serialize ConvergenceRow records with the documented columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("h", "ndof", "err_h2", "err_rel", "eoc", "newton_max",
                    "cond_estimate"))
        for r in rows:
            w.writerow((f"{r.h:.12g}", r.ndof, f"{r.err_h2:.12g}",
                        f"{r.err_rel:.12g}",
                        "" if r.eoc is None else f"{r.eoc:.12g}",
                        r.newton_max, f"{r.cond_estimate:.12g}"))


def write_temporal_csv(rows, path):
    """Serialize TemporalRow records (dt, err_m, eoc)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("dt", "err_m", "eoc"))
        for r in rows:
            w.writerow((f"{r.dt:.12g}", f"{r.error:.12g}",
                        "" if r.eoc is None else f"{r.eoc:.12g}"))


def write_energy_csv(traj, path):
    """Serialize the per-step energy trace of a Trajectory."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("step", "time", "energy", "xi", "newton_iters"))
        for row in zip(traj.step, traj.time, traj.energy, traj.xi,
                       traj.newton_iters):
            w.writerow(row)


def write_jacobian_csv(study, path):
    """Serialize jacobian_study output, one level per row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("h", "ndof", "nnz_bordered", "nnz_full", "ratio",
                    "cond_estimate"))
        for h, ndof, r in study:
            w.writerow((f"{h:.12g}", ndof, r.nnz_bordered, r.nnz_full,
                        f"{r.ratio:.12g}", f"{r.cond_estimate:.12g}"))
