"""Stepper, similarity exponents, and the physical/rescaled change of frame."""

import numpy as np
import pytest

from fracpme.evolution import (
    Exponents,
    NumericalAbort,
    SolverConfig,
    exponents,
    rescale_backward,
    rescale_forward,
    run,
    step_physical,
    step_rescaled,
    velocity_physical,
)
from fracpme.fracops import FREESPACE, PERIODIC, FracParams, make_operator
from fracpme.grid import Field, Grid


def freespace_op(grid, s=0.25):
    return make_operator(grid, FracParams(s=s, dim=grid.dim), FREESPACE)


def box_datum(grid, width=1.0, height=1.0):
    return Field(grid, np.where(np.abs(grid.axis()) < width, height, 0.0), "density")


def gaussian_datum(grid, width=0.8):
    vals = np.exp(-grid.axis() ** 2 / (2 * width**2))
    vals[vals < 1e-14] = 0.0
    return Field(grid, vals, "density")


@pytest.mark.parametrize(
    "n, s, beta, alpha, sigma, a",
    [
        (1, 0.25, 0.4, 0.4, 0.2, 0.2),
        (2, 0.5, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0),
    ],
)
def test_exponent_values(n, s, beta, alpha, sigma, a):
    e = exponents(n, s)
    assert e.beta == pytest.approx(beta, abs=1e-15)
    assert e.alpha == pytest.approx(alpha, abs=1e-15)
    assert e.sigma == pytest.approx(sigma, abs=1e-15)
    assert e.a == pytest.approx(a, abs=1e-15)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("s", [0.1, 0.25, 0.4, 0.49, 0.75])
def test_exponent_identity(n, s):
    e = exponents(n, s)
    assert e.alpha + (2.0 - 2.0 * s) * e.beta == pytest.approx(1.0, abs=1e-14)
    assert e.a == pytest.approx(e.beta / 2.0, abs=1e-16)


@pytest.mark.parametrize("n, s", [(3, 0.25), (0, 0.25), (1, 0.0), (1, 1.0), (1, -0.1)])
def test_exponent_validation(n, s):
    with pytest.raises(ValueError):
        Exponents(n, s)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"cfl_safety": 0.0},
        {"cfl_safety": 1.5},
        {"end_time": -1.0},
        {"snapshot_stride": 0},
        {"dt_max": 0.0},
    ],
)
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_velocity_points_outward():
    grid = Grid(dim=1, half_width=8.0, points_per_axis=256)
    op = freespace_op(grid)
    w = velocity_physical(gaussian_datum(grid), op)[0].values
    x = grid.axis()
    assert (w[(x > 0.5) & (x < 4.0)] > 0.0).all()
    assert (w[(x < -0.5) & (x > -4.0)] < 0.0).all()


def test_step_rejects_negative_state():
    grid = Grid(dim=1, half_width=4.0, points_per_axis=64)
    op = freespace_op(grid)
    bad = Field(grid, np.where(np.abs(grid.axis()) < 1, 1.0, -0.1))
    with pytest.raises(NumericalAbort, match="negative"):
        step_physical(bad, op, SolverConfig())


def test_rescaled_step_rejects_periodic_operator():
    grid = Grid(dim=1, half_width=4.0, points_per_axis=64)
    op = make_operator(grid, FracParams(s=0.25, dim=1), PERIODIC)
    with pytest.raises(ValueError, match="freespace"):
        step_rescaled(box_datum(grid), op, exponents(1, 0.25), SolverConfig(mode=PERIODIC))


def test_run_input_validation():
    grid = Grid(dim=1, half_width=4.0, points_per_axis=64)
    op = freespace_op(grid)
    exp = exponents(1, 0.25)
    u = box_datum(grid)
    with pytest.raises(ValueError, match="mode"):
        run(u, "backwards", SolverConfig(), op, exp)
    nan_vals = u.values.copy()
    nan_vals[3] = np.nan
    with pytest.raises(ValueError, match="finite"):
        run(Field(grid, nan_vals), "physical", SolverConfig(), op, exp)


def test_mass_conserved_and_positive():
    grid = Grid(dim=1, half_width=6.0, points_per_axis=128)
    op = freespace_op(grid)
    u0 = box_datum(grid)
    traj = run(u0, "physical", SolverConfig(end_time=0.5, snapshot_stride=10),
               op, exponents(1, 0.25))
    mass = traj.diagnostics.column("mass")
    assert np.abs(mass - mass[0]).max() <= 1e-12 * mass[0]
    for snap in traj.snapshots:
        assert snap.values.min() >= 0.0


def test_norms_non_increasing():
    grid = Grid(dim=1, half_width=6.0, points_per_axis=128)
    op = freespace_op(grid)
    traj = run(box_datum(grid), "physical", SolverConfig(end_time=0.5), op,
               exponents(1, 0.25))
    for name in ("linf", "l2", "l4"):
        col = traj.diagnostics.column(name)
        assert (np.diff(col) <= 1e-8 * col[:-1]).all(), name


def test_positivity_exact_at_sharp_cfl():
    # flux-form roundoff dust must be repaired, not let through as -1e-16
    grid = Grid(dim=1, half_width=4.0, points_per_axis=128)
    op = freespace_op(grid)
    state = box_datum(grid)
    mass0 = state.mass()
    for _ in range(200):
        state, _ = step_physical(state, op, SolverConfig(cfl_safety=1.0))
    assert state.values.min() >= 0.0
    assert abs(state.mass() - mass0) <= 1e-12 * mass0


def test_constant_periodic_state_is_stationary():
    grid = Grid(dim=1, half_width=4.0, points_per_axis=64)
    op = make_operator(grid, FracParams(s=0.25, dim=1), PERIODIC)
    c = Field(grid, np.full(64, 0.7), "density")
    traj = run(c, "physical", SolverConfig(end_time=3.0, dt_max=1.0, mode=PERIODIC),
               op, exponents(1, 0.25))
    assert len(traj.times) == 4  # quiescent field advances in dt_max hops
    assert np.abs(traj.final().values - 0.7).max() == 0.0


def test_symmetry_preserved_by_step():
    grid = Grid(dim=1, half_width=6.0, points_per_axis=128)
    op = freespace_op(grid)
    state, _ = step_physical(gaussian_datum(grid), op, SolverConfig())
    np.testing.assert_allclose(state.values, state.values[::-1], atol=1e-14)


def test_dt_cap_honored():
    grid = Grid(dim=1, half_width=6.0, points_per_axis=128)
    op = freespace_op(grid)
    _, dt = step_physical(box_datum(grid), op, SolverConfig(), dt_cap=1e-4)
    assert dt == 1e-4


def test_rescale_round_trip():
    grid = Grid(dim=1, half_width=8.0, points_per_axis=512)
    exp = exponents(1, 0.25)
    u = gaussian_datum(grid)
    v, tau = rescale_forward(u, 1.5, exp)
    assert tau == pytest.approx(np.log1p(1.5), abs=1e-15)
    assert v.mass() == pytest.approx(u.mass(), rel=1e-12)
    back, t = rescale_backward(v, tau, exp)
    assert t == pytest.approx(1.5, rel=1e-12)
    assert np.abs(back.values - u.values).max() < 2e-6


def test_rescale_matches_analytic_dilation():
    grid = Grid(dim=1, half_width=8.0, points_per_axis=512)
    exp = exponents(1, 0.25)
    width = 0.8
    v, _ = rescale_forward(gaussian_datum(grid, width), 1.5, exp)
    lam = 2.5**exp.beta
    expected = 2.5**exp.alpha * np.exp(-((grid.axis() * lam) ** 2) / (2 * width**2))
    assert np.abs(v.values - expected).max() < 2e-4


def test_pressure_scaling_under_rescale():
    # K u (x) = (1+t)^(-sigma) K v (x (1+t)^(-beta)) for v = rescale of u
    grid = Grid(dim=1, half_width=8.0, points_per_axis=512)
    op = freespace_op(grid)
    exp = exponents(1, 0.25)
    u = gaussian_datum(grid)
    t = 1.5
    v, _ = rescale_forward(u, t, exp)
    pu = op.inverse(u).values
    pv = op.inverse(v).values
    x = grid.axis()
    pv_pulled = np.interp(x / (1 + t) ** exp.beta, x, pv)
    err = np.abs(pu - (1 + t) ** (-exp.sigma) * pv_pulled).max()
    assert err < 1e-3 * np.abs(pu).max()


def test_rescale_rejects_negative_time():
    grid = Grid(dim=1, half_width=4.0, points_per_axis=64)
    exp = exponents(1, 0.25)
    with pytest.raises(ValueError):
        rescale_forward(box_datum(grid), -0.5, exp)
    with pytest.raises(ValueError):
        rescale_backward(box_datum(grid), -0.5, exp)


def test_records_cover_run():
    grid = Grid(dim=1, half_width=6.0, points_per_axis=128)
    op = freespace_op(grid)
    traj = run(box_datum(grid), "rescaled", SolverConfig(end_time=0.4, snapshot_stride=7),
               op, exponents(1, 0.25))
    times = np.array(traj.times)
    assert times[0] == 0.0
    assert times[-1] == pytest.approx(0.4, abs=1e-12)
    assert (np.diff(times) > 0).all()
    assert len(traj.snapshots) == len(traj.diagnostics)


def test_rescaled_entropy_monotone():
    grid = Grid(dim=1, half_width=6.0, points_per_axis=128)
    op = freespace_op(grid)
    vals = np.clip(1.0 - np.abs(grid.axis()), 0.0, None) ** 2
    traj = run(Field(grid, vals, "density"), "rescaled",
               SolverConfig(end_time=1.5, snapshot_stride=5), op, exponents(1, 0.25))
    e = traj.diagnostics.column("entropy")
    assert (np.diff(e) <= 1e-8 * abs(e[0])).all()
