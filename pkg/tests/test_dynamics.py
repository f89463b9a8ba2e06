"""Implicit time stepping: residuals, Newton, energy, failure modes."""

import numpy as np
import pytest

from platevem.assembly import CLAMPED, DofMap, assemble
from platevem.dynamics import (NewtonConfig, PhysicalParams, StepFailure,
                               TimeState, Trajectory, compute_energy,
                               estimate_condition, jacobian_blocks,
                               newton_step_bordered, residual, run_simulation,
                               solve_stationary, step_linearized)
from platevem.mesh import generate_square_grid

import oracles

PARAMS = dict(delta=1.0, sigma=0.3, P=1e-3, S=1e-5)
LOAD = lambda x, y, t: (1.0 + t) * np.sin(np.pi * x) * np.sin(np.pi * y)
BUMP = (lambda x, y: (x * (1 - x) * y * (1 - y)) ** 2,
        lambda x, y: (2 * x * (1 - x) * (1 - 2 * x) * (y * (1 - y)) ** 2,
                      2 * y * (1 - y) * (1 - 2 * y) * (x * (1 - x)) ** 2))


def _random_state(system, seed=0):
    rng = np.random.default_rng(seed)
    eta_n = rng.standard_normal(system.n_free)
    eta_nm1 = rng.standard_normal(system.n_free)
    return TimeState(eta_n, eta_nm1, eta_n @ (system.Ax @ eta_n), n=1)


def test_residual_matches_dense_formula(clamped_3x3):
    system = clamped_3x3
    params = PhysicalParams(g=LOAD, **PARAMS)
    state = _random_state(system)
    rng = np.random.default_rng(1)
    eta = rng.standard_normal(system.n_free)
    xi = 0.7
    dt = 0.05
    r, r_xi = residual(system, params, state, dt, eta, xi)

    M = system.M.toarray()
    Md = system.M_delta.toarray()
    A = system.A.toarray()
    Ax = system.Ax.toarray()
    F = system.assemble_load(LOAD, 2 * dt)
    expected = ((M + 0.5 * dt * Md) @ eta
                + dt ** 2 * (A @ eta + (params.S * xi - params.P) * (Ax @ eta)
                             - F)
                - M @ (2 * state.eta_n - state.eta_nm1)
                - 0.5 * dt * (Md @ state.eta_nm1))
    assert np.allclose(r, expected, atol=1e-13)
    assert r_xi == pytest.approx(eta @ Ax @ eta - xi, abs=1e-13)


def test_residual_rejects_wrong_dimension(clamped_3x3):
    params = PhysicalParams(**PARAMS)
    state = _random_state(clamped_3x3)
    with pytest.raises(ValueError, match="dimension"):
        residual(clamped_3x3, params, state, 0.1,
                 np.zeros(clamped_3x3.n_free + 1), 0.0)


def test_jacobian_matches_central_differences(clamped_3x3):
    # the step residual is quadratic in (eta, xi), so central
    # differences reproduce the Jacobian to roundoff
    system = clamped_3x3
    params = PhysicalParams(g=LOAD, **PARAMS)
    state = _random_state(system, seed=2)
    rng = np.random.default_rng(3)
    eta = rng.standard_normal(system.n_free)
    xi = -0.4
    dt = 0.05
    load = system.assemble_load(LOAD, 2 * dt)
    J1, J2, J3, J4 = jacobian_blocks(system, params, dt, eta, xi)
    J1 = J1.toarray()

    def full_res(e, x):
        r, rx = residual(system, params, state, dt, e, x, load)
        return np.append(r, rx)

    h = 1e-3
    n = system.n_free
    for k in rng.choice(n, size=5, replace=False):
        dv = np.zeros(n)
        dv[k] = h
        col = (full_res(eta + dv, xi) - full_res(eta - dv, xi)) / (2 * h)
        assert np.allclose(col[:-1], J1[:, k], atol=1e-9)
        assert col[-1] == pytest.approx(J3[k], abs=1e-9)
    col = (full_res(eta, xi + h) - full_res(eta, xi - h)) / (2 * h)
    assert np.allclose(col[:-1], J2, atol=1e-9)
    assert col[-1] == pytest.approx(J4, abs=1e-9)


def test_newton_step_matches_dense_oracle(clamped_3x3):
    system = clamped_3x3
    params = PhysicalParams(g=LOAD, **PARAMS)
    state = _random_state(system, seed=4)
    dt = 0.02
    load = system.assemble_load(LOAD, 2 * dt)
    eta, xi, iters, res = newton_step_bordered(system, params, state, dt,
                                               load=load)
    eta_ref = oracles.dense_step(system, params, state, dt, load)
    assert np.allclose(eta, eta_ref, atol=1e-10)
    assert xi == pytest.approx(eta_ref @ (system.Ax @ eta_ref), abs=1e-10)
    assert iters >= 1
    assert res <= 1e-9


def test_short_run_matches_dense_trajectory(clamped_4x4):
    system = clamped_4x4
    params = PhysicalParams(g=LOAD, **PARAMS)
    dt, n_steps = 0.05, 4
    states = []
    run_simulation(system, params, BUMP, None, dt, n_steps * dt,
                   observer=lambda n, s: states.append(s.eta_n.copy()))
    u0 = system.interpolate(*BUMP)
    ref = oracles.dense_trajectory(system, params, u0, np.zeros_like(u0),
                                   dt, n_steps)
    assert len(states) == n_steps - 1
    assert len(ref) == n_steps
    for got, want in zip(states, ref[1:]):
        assert np.abs(got - want).max() <= 1e-10


def test_zero_data_stays_zero(clamped_3x3):
    params = PhysicalParams(**PARAMS)
    traj = run_simulation(clamped_3x3, params, None, None, 0.1, 1.0)
    assert np.allclose(traj.energy, 0.0)
    assert np.allclose(traj.xi, 0.0)
    assert traj.newton_iters == [0] * 10
    assert np.allclose(traj.final_state.eta_n, 0.0)


def test_xi_is_recomputed_from_the_state(clamped_3x3):
    params = PhysicalParams(g=LOAD, **PARAMS)
    traj = run_simulation(clamped_3x3, params, None, None, 0.1, 0.5)
    eta = traj.final_state.eta_n
    xi = eta @ (clamped_3x3.Ax @ eta)
    assert traj.final_state.xi == pytest.approx(xi, abs=1e-12)
    assert traj.xi[-1] == pytest.approx(xi, abs=1e-12)


def test_linearized_equals_nonlinear_when_s_is_zero(clamped_4x4):
    system = clamped_4x4
    params = PhysicalParams(delta=1.0, sigma=0.3, P=1e-3, S=0.0, g=LOAD)
    a = run_simulation(system, params, BUMP, None, 0.05, 0.5,
                       scheme="nonlinear")
    b = run_simulation(system, params, BUMP, None, 0.05, 0.5,
                       scheme="linearized")
    assert np.abs(a.final_state.eta_n - b.final_state.eta_n).max() <= 1e-12
    assert np.allclose(a.energy, b.energy, atol=1e-12)


def test_linearized_step_freezes_the_nonlocal_factor(clamped_3x3):
    system = clamped_3x3
    params = PhysicalParams(g=LOAD, **PARAMS)
    state = _random_state(system, seed=5)
    dt = 0.05
    load = system.assemble_load(LOAD, 2 * dt)
    eta = step_linearized(system, params, state, dt, load)
    C = params.S * (state.eta_nm1 @ (system.Ax @ state.eta_nm1)) - params.P
    lhs = (system.M + 0.5 * dt * system.M_delta + dt ** 2 * system.A
           + C * dt ** 2 * system.Ax).toarray()
    rhs = (dt ** 2 * load + 2 * system.M @ state.eta_n
           - system.M @ state.eta_nm1
           + 0.5 * dt * system.M_delta @ state.eta_nm1)
    assert np.allclose(np.linalg.solve(lhs, rhs), eta, atol=1e-11)


def test_compute_energy_formula(clamped_3x3):
    system = clamped_3x3
    params = PhysicalParams(**PARAMS)
    rng = np.random.default_rng(6)
    a = rng.standard_normal(system.n_free)
    b = rng.standard_normal(system.n_free)
    dt = 0.1
    v = (a - b) / dt
    xi = a @ system.Ax @ a
    want = (0.5 * v @ system.M @ v + 0.5 * a @ system.A @ a
            - 0.5 * params.P * xi + 0.25 * params.S * xi ** 2)
    assert compute_energy(system, params, a, b, dt) == pytest.approx(want)


def test_newton_budget_exhaustion_raises(clamped_3x3):
    params = PhysicalParams(g=LOAD, **PARAMS)
    state = _random_state(clamped_3x3, seed=7)
    config = NewtonConfig(abs_tol=1e-300, rel_tol=1e-300, max_iterations=1)
    with pytest.raises(StepFailure) as info:
        newton_step_bordered(clamped_3x3, params, state, 0.1, config)
    assert info.value.step == 2
    assert info.value.residual_norm > 0


def test_newton_accepts_stagnation_at_the_roundoff_floor(clamped_3x3):
    # with an unreachable absolute tolerance the iterate still converges;
    # a vanishing update must be accepted instead of raising
    system = clamped_3x3
    params = PhysicalParams(g=LOAD, **PARAMS)
    state = _random_state(system, seed=9)
    config = NewtonConfig(abs_tol=1e-300, rel_tol=1e-300, max_iterations=25)
    eta, xi, iters, res = newton_step_bordered(system, params, state, 0.05,
                                               config)
    assert iters < 25
    assert res <= 1e-9
    load = system.assemble_load(LOAD, 2 * 0.05)
    eta_ref = oracles.dense_step(system, params, state, 0.05, load)
    assert np.allclose(eta, eta_ref, atol=1e-10)


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(max_iterations=0)
    with pytest.raises(ValueError):
        NewtonConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        NewtonConfig(step_tol=0.0)


def test_run_simulation_argument_validation(clamped_3x3):
    params = PhysicalParams(**PARAMS)
    with pytest.raises(ValueError, match="multiple"):
        run_simulation(clamped_3x3, params, None, None, 0.3, 1.0)
    with pytest.raises(ValueError, match="two time steps"):
        run_simulation(clamped_3x3, params, None, None, 1.0, 1.0)
    with pytest.raises(ValueError, match="scheme"):
        run_simulation(clamped_3x3, params, None, None, 0.1, 1.0,
                       scheme="euler")


def test_physical_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(sigma=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(sigma=1.0)
    with pytest.raises(ValueError):
        PhysicalParams(S=-1.0)
    with pytest.warns(UserWarning, match="well-posedness"):
        PhysicalParams(P=0.0)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        PhysicalParams(P=1e-3)


def test_solve_stationary_recovers_polynomial_load(clamped_4x4):
    eta = solve_stationary(clamped_4x4, lambda x, y: 50.0 * np.sin(2 * x))
    A = clamped_4x4.A
    F = clamped_4x4.assemble_load(lambda x, y, t: 50.0 * np.sin(2 * x), 0.0)
    assert np.linalg.norm(A @ eta - F) <= 1e-8 * np.linalg.norm(F) * 1e3


def test_estimate_condition_agrees_with_dense():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((40, 40))
    A = A @ A.T + 40 * np.eye(40)
    got = estimate_condition(A, iterations=500, stagnation=1e-12)
    want = np.linalg.cond(A)
    assert got == pytest.approx(want, rel=0.05)


def test_trajectory_csv_layout(tmp_path):
    traj = Trajectory()
    traj.record(1, 0.1, 0, 0.0, 2.5, 0.0)
    traj.record(2, 0.2, 3, -0.125, 2.25, 1e-12)
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,time,newton_iters,xi,energy,residual_norm"
    assert lines[1] == "1,0.1,0,0.0,2.5,0.0"
    assert lines[2] == "2,0.2,3,-0.125,2.25,1e-12"


def test_observer_sees_every_advanced_step(clamped_3x3):
    params = PhysicalParams(g=LOAD, **PARAMS)
    seen = []
    run_simulation(clamped_3x3, params, None, None, 0.1, 0.5,
                   observer=lambda n, s: seen.append(n))
    assert seen == [2, 3, 4, 5]
