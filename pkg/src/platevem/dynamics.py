"""Implicit time stepping for the damped nonlocal plate system.

The fully implicit recurrence (all stiffness and nonlocal terms at the
new level, centered differences in time) is solved per step by Newton
on the augmented unknown (eta, xi), where the scalar xi tracks the
nonlocal value eta' Ax eta.  Keeping xi as an explicit unknown leaves
the eta-block of the Jacobian sparse; the bordered system is solved by
a scalar Schur complement around one sparse factorization.
"""

import csv
import warnings

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import assemble_load, interpolate


class NewtonConfig:
    """Newton tolerances: stop when ||r|| <= abs_tol + rel_tol*||r0||.

    A step is also accepted when the residual stops improving while the
    update has become negligible (relative size below step_tol); that is
    the roundoff floor of the factorization on ill-conditioned systems,
    where the absolute tolerance may be unreachable.
    """

    def __init__(self, abs_tol=1e-11, rel_tol=1e-10, max_iterations=25,
                 step_tol=1e-8):
        if abs_tol <= 0 or rel_tol <= 0 or max_iterations < 1:
            raise ValueError("tolerances must be positive, max_iterations >= 1")
        if step_tol <= 0:
            raise ValueError("step_tol must be positive")
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.max_iterations = max_iterations
        self.step_tol = step_tol


class PhysicalParams:
    """Damping delta (scalar or delta(x, y)), Poisson ratio sigma,
    pre-stress P, nonlocal stiffness S, and load g(x, y, t)."""

    def __init__(self, delta=1.0, sigma=0.3, P=0.0, S=0.0, g=None):
        if not 0.0 < sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if S < 0.0:
            raise ValueError("S must be nonnegative")
        if P <= 0.0:
            # the well-posedness window for P is (0, c) with an
            # uncomputed constant c; only the lower end is checkable
            warnings.warn("P outside the theoretical well-posedness window",
                          stacklevel=2)
        self.delta = delta
        self.sigma = sigma
        self.P = P
        self.S = S
        self.g = g


class TimeState:
    """Two (three counting the candidate) trailing solution levels."""

    def __init__(self, eta_n, eta_nm1, xi=0.0, n=1):
        self.eta_n = np.asarray(eta_n, dtype=float)
        self.eta_nm1 = np.asarray(eta_nm1, dtype=float)
        self.xi = float(xi)
        self.n = int(n)

    def advanced(self, eta_new, xi_new):
        return TimeState(eta_new, self.eta_n, xi_new, self.n + 1)


class StepFailure(RuntimeError):
    """Newton did not converge within the iteration budget."""

    def __init__(self, step, residual_norm):
        super().__init__(f"step {step}: Newton stalled at residual "
                         f"{residual_norm:.3e}")
        self.step = step
        self.residual_norm = residual_norm


def _damped_mass(system, dt):
    """M + (dt/2) M_delta; the damping weight lives inside M_delta."""
    return system.M + (0.5 * dt) * system.M_delta


def residual(system, params, state, dt, eta, xi, load=None):
    """Residual of the time-step equations, scaled by dt^2.

    Returns (r_eta, r_xi) for the candidate (eta, xi) advancing the
    state to time (state.n + 1) * dt.  `load` may carry the
    pre-assembled load vector at the new time.
    """
    if eta.shape != state.eta_n.shape:
        raise ValueError("candidate has wrong dimension")
    if load is None:
        load = assemble_load(system, params.g, (state.n + 1) * dt)
    Mb = _damped_mass(system, dt)
    dt2 = dt * dt
    r = (Mb @ eta + dt2 * (system.A @ eta)
         + dt2 * (params.S * xi - params.P) * (system.Ax @ eta)
         - dt2 * load
         - 2.0 * (system.M @ state.eta_n)
         + system.M @ state.eta_nm1
         - (0.5 * dt) * (system.M_delta @ state.eta_nm1))
    r_xi = eta @ (system.Ax @ eta) - xi
    return r, r_xi


def jacobian_blocks(system, params, dt, eta, xi):
    """Blocks of the augmented Jacobian at (eta, xi).

    J1 (sparse, n x n), J2 (column), J3 (row), J4 = -1.
    """
    dt2 = dt * dt
    J1 = (_damped_mass(system, dt) + dt2 * system.A
          + dt2 * (params.S * xi - params.P) * system.Ax)
    Axeta = system.Ax @ eta
    J2 = dt2 * params.S * Axeta
    J3 = 2.0 * Axeta
    return J1, J2, J3, -1.0


def bordered_jacobian(system, params, dt, eta, xi):
    """Augmented Jacobian as one sparse matrix (for conditioning)."""
    J1, J2, J3, J4 = jacobian_blocks(system, params, dt, eta, xi)
    return sp.bmat([[J1, J2[:, None]], [J3[None, :], [[J4]]]], format="csc")


def newton_step_bordered(system, params, state, dt, config=None, load=None):
    """One implicit time step via Newton with the scalar Schur complement.

    Returns (eta_new, xi_new, iterations, residual_norm).  Warm starts
    from the previous level; each iteration factors the sparse block
    J1 once and eliminates the xi row/column exactly.
    """
    if config is None:
        config = NewtonConfig()
    if load is None:
        load = assemble_load(system, params.g, (state.n + 1) * dt)
    eta = state.eta_n.copy()
    xi = state.xi
    r_eta, r_xi = residual(system, params, state, dt, eta, xi, load)
    norm0 = np.sqrt(r_eta @ r_eta + r_xi * r_xi)
    tol = config.abs_tol + config.rel_tol * norm0
    norm = norm0
    for it in range(config.max_iterations + 1):
        if norm <= tol:
            return eta, xi, it, norm
        if it == config.max_iterations:
            break
        J1, J2, J3, J4 = jacobian_blocks(system, params, dt, eta, xi)
        try:
            lu = splu(J1.tocsc())
        except RuntimeError as exc:
            raise StepFailure(state.n + 1, norm) from exc
        w1 = lu.solve(-r_eta)
        w2 = lu.solve(J2)
        s = J4 - J3 @ w2
        d_xi = (-r_xi - J3 @ w1) / s
        d_eta = w1 - w2 * d_xi
        eta = eta + d_eta
        xi = xi + d_xi
        prev = norm
        r_eta, r_xi = residual(system, params, state, dt, eta, xi, load)
        norm = np.sqrt(r_eta @ r_eta + r_xi * r_xi)
        if norm > tol and norm >= 0.5 * prev:
            stalled = (np.linalg.norm(d_eta)
                       <= config.step_tol * np.linalg.norm(eta)
                       and abs(d_xi) <= config.step_tol * max(abs(xi), 1.0))
            if stalled:
                return eta, xi, it + 1, norm
    raise StepFailure(state.n + 1, norm)


def step_linearized(system, params, state, dt, load=None):
    """One step of the linearized scheme: the nonlocal factor is frozen
    two levels back, leaving a single sparse solve."""
    if load is None:
        load = assemble_load(system, params.g, (state.n + 1) * dt)
    dt2 = dt * dt
    Mb = _damped_mass(system, dt)
    C = params.S * (state.eta_nm1 @ (system.Ax @ state.eta_nm1)) - params.P
    lhs = Mb + dt2 * system.A + (C * dt2) * system.Ax
    rhs = (dt2 * load + 2.0 * (system.M @ state.eta_n)
           - system.M @ state.eta_nm1
           + (0.5 * dt) * (system.M_delta @ state.eta_nm1))
    return splu(lhs.tocsc()).solve(rhs)


def compute_energy(system, params, eta_n, eta_nm1, dt):
    """Discrete energy: kinetic + plate energy + nonlocal potential."""
    v = (eta_n - eta_nm1) / dt
    xi = eta_n @ (system.Ax @ eta_n)
    return (0.5 * v @ (system.M @ v) + 0.5 * eta_n @ (system.A @ eta_n)
            - 0.5 * params.P * xi + 0.25 * params.S * xi * xi)


class Trajectory:
    """Per-step scalars of one simulation plus the final state."""

    COLUMNS = ("step", "time", "newton_iters", "xi", "energy",
               "residual_norm")

    def __init__(self):
        self.step = []
        self.time = []
        self.newton_iters = []
        self.xi = []
        self.energy = []
        self.residual_norm = []
        self.final_state = None

    def record(self, step, time, iters, xi, energy, res):
        self.step.append(step)
        self.time.append(time)
        self.newton_iters.append(iters)
        self.xi.append(xi)
        self.energy.append(energy)
        self.residual_norm.append(res)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(self.step, self.time, self.newton_iters,
                           self.xi, self.energy, self.residual_norm):
                w.writerow(row)


def _initial_vector(system, data):
    if data is None:
        return np.zeros(system.n_free)
    if isinstance(data, np.ndarray):
        return data.astype(float)
    u, grad_u = data
    return interpolate(system, u, grad_u)


def run_simulation(system, params, u0, omega0, dt, T, scheme="nonlinear",
                   config=None, observer=None):
    """March the plate from rest data to time T.

    Parameters
    ----------
    u0, omega0 : None, array, or (function, gradient) pair
        Initial deflection and velocity; functions are interpolated
        into the DoFs, arrays are taken as free-DoF coefficients.
    scheme : "nonlinear" or "linearized"
    observer : optional callable (step, state) for progress hooks.

    Returns a Trajectory; rows start at step 1 (the first level with a
    defined velocity difference).
    """
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be an integer multiple of dt")
    if n_steps < 2:
        raise ValueError("need at least two time steps")
    if scheme not in ("nonlinear", "linearized"):
        raise ValueError(f"unknown scheme {scheme!r}")

    eta0 = _initial_vector(system, u0)
    w0 = _initial_vector(system, omega0)
    eta1 = eta0 + dt * w0
    xi1 = eta1 @ (system.Ax @ eta1)
    state = TimeState(eta1, eta0, xi1, n=1)

    traj = Trajectory()
    traj.record(1, dt, 0, xi1,
                compute_energy(system, params, eta1, eta0, dt), 0.0)
    for n in range(2, n_steps + 1):
        load = assemble_load(system, params.g, n * dt)
        if scheme == "nonlinear":
            eta, xi, iters, res = newton_step_bordered(
                system, params, state, dt, config, load)
            xi = eta @ (system.Ax @ eta)
        else:
            eta = step_linearized(system, params, state, dt, load)
            xi = eta @ (system.Ax @ eta)
            iters, res = 0, 0.0
        prev = state.eta_n
        state = state.advanced(eta, xi)
        traj.record(n, n * dt, iters, xi,
                    compute_energy(system, params, eta, prev, dt), res)
        if observer is not None:
            observer(n, state)
    traj.final_state = state
    return traj


def solve_stationary(system, g0):
    """Solve the stationary plate problem A eta = F(g0)."""
    F = assemble_load(system, lambda x, y, t: g0(x, y), 0.0)
    A = system.A.tocsc()
    eta = splu(A).solve(F)
    res = np.linalg.norm(A @ eta - F)
    # normwise backward error; a plain residual test over-rejects when
    # A is ill-conditioned (thin cells drive ||A|| up by aspect^2)
    scale = sp.linalg.norm(A, 1) * np.linalg.norm(eta) + np.linalg.norm(F)
    if res > 1e-8 * max(scale, 1e-300):
        raise RuntimeError(f"stationary solve backward error "
                           f"{res / scale:.3e} too large")
    return eta


def estimate_condition(matrix, iterations=100, stagnation=1e-6, seed=0):
    """2-norm condition estimate by forward and inverse power iteration.

    Runs power iteration on A'A for the largest singular value and
    inverse iteration through an LU factorization for the smallest.
    """
    A = sp.csc_matrix(matrix)
    n = A.shape[0]
    rng = np.random.default_rng(seed)

    def largest(op):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iterations):
            w = op(v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            v_new = w / nw
            if abs(nw - lam) <= stagnation * max(nw, 1e-300):
                lam = nw
                break
            lam = nw
            v = v_new
        return lam

    smax2 = largest(lambda v: A.T @ (A @ v))
    lu = splu(A)
    inv2 = largest(lambda v: lu.solve(lu.solve(v, trans="N"), trans="T"))
    if inv2 == 0.0:
        return np.inf
    return np.sqrt(smax2 * inv2)


def estimate_jacobian_condition(system, params, state, dt):
    """Condition estimate of the augmented Jacobian at the given state."""
    J = bordered_jacobian(system, params, dt, state.eta_n, state.xi)
    return estimate_condition(J)
