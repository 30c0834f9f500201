"""Parabolic-obstacle solutions: the stationary profile pair of the rescaled flow.

The pair (P, V): P >= Phi = C - a|y|^2 with equality on the contact set,
V = (-Lap)^s P >= 0 supported there, and V (P - Phi) = 0.  V is taken as the
unknown: for compactly supported V the pressure P = K V is the exact
free-space potential, so P -> 0 at infinity holds by kernel decay rather than
by boundary conditions, and the unknown lives only on cells with
|y| <= sqrt(C/a) + 2h (the contact set sits strictly inside the parabola's
positivity ball).  There the system is the linear complementarity problem

    V >= 0,   W V - Phi >= 0,   V^T (W V - Phi) = 0

with W the symmetric positive definite kernel submatrix.  Projected SOR sweeps
(Cryer) drive the residual down, a direct solve on the final active set
polishes, and the result is re-verified on the full grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .evolution import Exponents
from .fracops import FREESPACE, FracOperator, FracParams, make_operator
from .grid import Field, Grid
from .remap import resample

MARGIN_FACTOR = 1.5
DEFAULT_BOX_FACTOR = 3.0


@dataclass(frozen=True)
class ObstacleProblem:
    """Parabolic obstacle Phi = C - a|y|^2 on a freespace grid.

    The grid box must contain the parabola's positivity ball
    {|y| < sqrt(C/a)} with a factor >= 1.5 to spare, so the free boundary
    never competes with the box edge.
    """

    C: float
    a: float
    s: float
    grid: Grid

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError(f"parabola coefficient a must be positive, got {self.a}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.grid.dim == 1 and self.s >= 0.5:
            raise ValueError(
                f"s = {self.s} needs s < 1/2 in one dimension (kernel not positive)"
            )
        if self.C > 0.0:
            needed = MARGIN_FACTOR * float(np.sqrt(self.C / self.a))
            if self.grid.half_width < needed:
                raise ValueError(
                    f"grid half-width {self.grid.half_width} below the required "
                    f"margin {needed:.6g} = 1.5 sqrt(C/a)"
                )

    @property
    def parabola_radius(self) -> float:
        """Radius where the obstacle crosses zero; free boundary sits inside it."""
        return float(np.sqrt(max(self.C, 0.0) / self.a))

    def obstacle_values(self) -> np.ndarray:
        return self.C - self.a * self.grid.radius2()


def make_problem(C: float, n: int, s: float, points_per_axis: int,
                 box_factor: float = DEFAULT_BOX_FACTOR) -> ObstacleProblem:
    """Problem on the default box: half-width box_factor * sqrt(C/a),
    with a = beta/2 fixed by (n, s)."""
    a = Exponents(n, s).a
    if C <= 0.0:
        raise ValueError(f"default sizing needs C > 0, got {C}")
    half = box_factor * float(np.sqrt(C / a))
    return ObstacleProblem(C=C, a=a, s=s, grid=Grid(n, half, points_per_axis))


@dataclass
class ObstacleSolution:
    problem: ObstacleProblem
    pressure: Field
    density: Field
    contact_mask: Field
    contact_radius: float
    residuals: dict
    sweeps: int

    @property
    def mass(self) -> float:
        return self.density.mass()


@dataclass
class BarenblattSolution:
    """Stationary profile packaged with its exponents; the self-similar
    solution through it is U_C(x, t) = (1+t)^(-alpha) V_C(x (1+t)^(-beta))."""

    profile: ObstacleSolution
    exponents: Exponents

    @property
    def mass(self) -> float:
        return self.profile.mass


def _psor_sweeps(w_mat: np.ndarray, phi: np.ndarray, omega: float,
                 tol: float, max_iter: int) -> tuple:
    """Projected SOR on LCP(W, -phi), residual kept incrementally.

    Returns (V, residual vector, sweeps, residual norm)."""
    m = phi.size
    v = np.zeros(m)
    r = -phi.copy()  # r = W v - phi
    diag = np.ascontiguousarray(np.diag(w_mat))
    cols = np.asfortranarray(w_mat)  # column slices contiguous for the axpy
    res = np.inf
    for sweep in range(1, max_iter + 1):
        for i in range(m):
            target = v[i] - omega * r[i] / diag[i]
            if target < 0.0:
                target = 0.0
            d = target - v[i]
            if d != 0.0:
                v[i] = target
                r += d * cols[:, i]
        res = float(np.abs(np.minimum(v, r)).max())
        if res <= tol:
            return v, r, sweep, res
    raise RuntimeError(
        f"projected SOR did not reach tolerance {tol:.3e} in {max_iter} sweeps "
        f"(residual {res:.3e})"
    )


def _active_set_polish(w_mat: np.ndarray, phi: np.ndarray, v: np.ndarray,
                       tol: float) -> tuple:
    """Direct solve on {v > 0}, adjusting the set when the KKT signs object.

    Falls back to the input iterate if the adjustment loop fails to settle."""
    active = v > 0.0
    for _ in range(60):
        if not active.any():
            r = -phi.copy()
            if r.min() >= -tol:
                return np.zeros_like(v), r
            break
        idx = np.nonzero(active)[0]
        sol = np.linalg.solve(w_mat[np.ix_(idx, idx)], phi[idx])
        if sol.min() < 0.0:
            active[idx[sol < 0.0]] = False
            continue
        cand = np.zeros_like(v)
        cand[idx] = sol
        r = w_mat @ cand - phi
        worst = int(np.argmin(r))
        if r[worst] >= -tol:
            return cand, r
        active[worst] = True
    return v, w_mat @ v - phi


def solve_obstacle(prob: ObstacleProblem, tol: float = 1e-9, omega: float = 1.5,
                   max_iter: int = 10**6) -> ObstacleSolution:
    """Stationary profile pair for the parabolic obstacle.

    tol is relative: convergence and the reported residuals are measured
    against max(C, max V).  Raises RuntimeError (with the residual report in
    the message) if the sweeps stall; C <= 0 short-circuits to the trivial
    solution.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not 0.0 < omega < 2.0:
        raise ValueError(f"relaxation omega must lie in (0, 2), got {omega}")
    grid = prob.grid
    op = make_operator(grid, FracParams(s=prob.s, dim=grid.dim), FREESPACE)
    phi_full = prob.obstacle_values()

    if prob.C <= 0.0:
        zero = Field(grid, np.zeros(grid.shape))
        return ObstacleSolution(
            problem=prob, pressure=zero, density=zero.with_values(zero.values),
            contact_mask=Field(grid, np.zeros(grid.shape, dtype=bool)),
            contact_radius=0.0,
            residuals={"pressure_deficit": 0.0, "density_negativity": 0.0,
                       "complementarity": 0.0, "lcp_residual": 0.0},
            sweeps=0,
        )

    r2 = grid.radius2()
    reach = prob.parabola_radius + 2.0 * grid.spacing
    idx = np.nonzero(r2.ravel() <= reach**2)[0]
    w_mat = op.kernel_submatrix(idx)
    phi = phi_full.ravel()[idx]

    scale = max(prob.C, 1.0)
    v_loc, _, sweeps, _ = _psor_sweeps(w_mat, phi, omega, 0.1 * tol * scale, max_iter)
    scale = max(prob.C, float(v_loc.max()))
    v_loc, _ = _active_set_polish(w_mat, phi, v_loc, 0.1 * tol * scale)

    v_full = np.zeros(grid.npoints)
    v_full[idx] = v_loc
    density = Field(grid, v_full.reshape(grid.shape))
    pressure = op.inverse(density)

    gap = pressure.values - phi_full
    scale = max(prob.C, float(v_loc.max()))
    contact = gap <= 10.0 * tol * scale
    contact_radius = float(np.sqrt(r2[contact].max())) if contact.any() else 0.0
    residuals = {
        "pressure_deficit": float(np.clip(-gap, 0.0, None).max()),
        "density_negativity": float(np.clip(-density.values, 0.0, None).max()),
        "complementarity": float(np.abs(density.values * gap).max()),
        "lcp_residual": float(np.abs(np.minimum(v_full.reshape(grid.shape),
                                                gap)).max()),
    }
    if residuals["pressure_deficit"] > tol * scale * 10.0:
        raise RuntimeError(
            f"pressure dips below the obstacle by {residuals['pressure_deficit']:.3e} "
            "outside the solved region; enlarge the grid box"
        )
    return ObstacleSolution(
        problem=prob, pressure=pressure, density=density,
        contact_mask=Field(grid, contact), contact_radius=contact_radius,
        residuals=residuals, sweeps=sweeps,
    )


def as_barenblatt(sol: ObstacleSolution, n: int | None = None) -> BarenblattSolution:
    exp = Exponents(n or sol.problem.grid.dim, sol.problem.s)
    return BarenblattSolution(profile=sol, exponents=exp)


def barenblatt_at(bsol: BarenblattSolution, t: float,
                  target: Grid | None = None) -> Field:
    """The self-similar state at time t > -1 on the target grid (default: the
    profile's own).  The conservative remap carries the (1+t)^(-alpha)
    amplitude factor automatically, so the mass is t-independent."""
    if t <= -1.0:
        raise ValueError(f"self-similar time must exceed -1, got {t}")
    exp = bsol.exponents
    grid = target or bsol.profile.density.grid
    # resample yields V(lam x) with mass / lam^n; lam = (1+t)^-beta plus the
    # (1+t)^-alpha amplitude leaves the mass exactly t-independent
    out = resample(bsol.profile.density, grid, lam=(1.0 + t) ** -exp.beta)
    return out.with_values((1.0 + t) ** -exp.alpha * out.values)


def scaling_check(sol1: ObstacleSolution, sol_c: ObstacleSolution) -> dict:
    """How well sol_c matches the dilation law applied to sol1.

    P_C(y) = (C/C1) P_1(y / sqrt(C/C1)), V_C(y) = (C/C1)^(1-s) V_1(...);
    sol1 is conservatively resampled onto sol_c's grid, so the reported
    deviations include one interpolation error."""
    ratio = sol_c.problem.C / sol1.problem.C
    s = sol1.problem.s
    lam = float(np.sqrt(ratio))
    # resample gives V1(y/lam) for dilation factor 1/lam; the law's amplitude
    # factors are ratio^(1-s) on the density and ratio on the pressure
    v_pred = resample(sol1.density, sol_c.density.grid, lam=1.0 / lam)
    v_pred = v_pred.with_values(v_pred.values * ratio ** (1.0 - s))
    p_pred = resample(sol1.pressure, sol_c.pressure.grid, lam=1.0 / lam,
                      require_mass=False)
    p_pred = p_pred.with_values(p_pred.values * ratio)
    v_dev = float(np.abs(sol_c.density.values - v_pred.values).max()) / sol_c.density.linf()
    p_dev = float(np.abs(sol_c.pressure.values - p_pred.values).max()) / sol_c.pressure.linf()
    return {
        "density_deviation": v_dev,
        "pressure_deviation": p_dev,
        "radius_ratio": sol_c.contact_radius / sol1.contact_radius,
        "expected_radius_ratio": lam,
        "cell": sol_c.density.grid.spacing,
    }


def mass_law(solutions: list) -> tuple:
    """Fit mass = c * C^p over the solved family; returns (p, c).

    Needs at least 4 levels spanning a factor of 8 in C."""
    cs = np.array([s.problem.C for s in solutions], dtype=float)
    masses = np.array([s.mass for s in solutions], dtype=float)
    if len(cs) < 4:
        raise ValueError(f"need at least 4 solutions, got {len(cs)}")
    if cs.min() <= 0.0 or masses.min() <= 0.0:
        raise ValueError("mass-law fit needs positive C and positive masses")
    if cs.max() / cs.min() < 8.0:
        raise ValueError(
            f"C values span only a factor {cs.max() / cs.min():.3g}; need >= 8"
        )
    slope, intercept = np.polyfit(np.log(cs), np.log(masses), 1)
    return float(slope), float(np.exp(intercept))


def C_of_mass(mass: float, n: int, s: float, calibration: float) -> float:
    """Invert the mass law: C = (M / c)^(2 / (n + 2 - 2s))."""
    if mass <= 0.0:
        raise ValueError(f"mass must be positive, got {mass}")
    if calibration <= 0.0:
        raise ValueError(f"calibration constant must be positive, got {calibration}")
    return float((mass / calibration) ** (2.0 / (n + 2.0 - 2.0 * s)))


def match_mass(mass: float, s: float, grid: Grid,
               tol: float = 1e-9) -> ObstacleSolution:
    """Profile on `grid` whose discrete mass equals `mass` exactly.

    The power law only predicts the continuum mass; quadrature shifts it by
    O(h^2), which would leave a spurious floor in any density comparison at
    matched mass.  So root-find on the level C instead (mass is strictly
    increasing in C), bracketing from the power-law seed by geometric
    expansion.  Every probe is a full solve at tolerance `tol`.
    """
    if mass <= 0.0:
        raise ValueError(f"mass must be positive, got {mass}")
    a = Exponents(grid.dim, s).a

    def solved(level: float) -> ObstacleSolution:
        prob = ObstacleProblem(C=level, a=a, s=s, grid=grid)
        return solve_obstacle(prob, tol=tol)

    def gap(level: float) -> float:
        return solved(level).mass - mass

    # seed with coefficient 1; the true prefactor is O(1) so a few
    # doublings reach a sign change.  A grid too small to host the
    # bracket fails the margin check inside ObstacleProblem.
    seed = mass ** (2.0 / (grid.dim + 2.0 - 2.0 * s))
    lo = hi = seed
    g_lo, g_hi = gap(lo), None
    for _ in range(60):
        if g_lo <= 0.0:
            break
        hi, g_hi = lo, g_lo
        lo *= 0.5
        g_lo = gap(lo)
    else:
        raise RuntimeError("no lower bracket for the mass match")
    if g_hi is None:
        g_hi = gap(hi)
    for _ in range(60):
        if g_hi >= 0.0:
            break
        lo, g_lo = hi, g_hi
        hi *= 2.0
        g_hi = gap(hi)
    else:
        raise RuntimeError("no upper bracket for the mass match")
    level = brentq(gap, lo, hi, xtol=1e-13, rtol=4e-15)
    return solved(float(level))


def convexity_check(sol: ObstacleSolution) -> dict:
    """Second-difference tests of P + a|y|^2 (convex by theory).

    Reports the minimum raw centered second difference over interior cells
    and axes (tolerance 10 h^2 max|P|), the minimum second-difference
    quotient of P alone outside the contact set (theory: > -2a), and whether
    the pressure peak sits at the innermost cells.
    """
    grid = sol.problem.grid
    h = grid.spacing
    q = sol.pressure.values + sol.problem.a * grid.radius2()
    min_second = np.inf
    min_dee_out = np.inf
    outside = sol.contact_mask.values == 0.0  # Field stores the mask as 0/1
    p = sol.pressure.values
    for ax in range(grid.dim):
        mid = [slice(None)] * grid.dim
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        mid[ax] = slice(1, -1)
        lo[ax] = slice(None, -2)
        hi[ax] = slice(2, None)
        d2q = q[tuple(hi)] - 2.0 * q[tuple(mid)] + q[tuple(lo)]
        min_second = min(min_second, float(d2q.min()))
        d2p = (p[tuple(hi)] - 2.0 * p[tuple(mid)] + p[tuple(lo)]) / h**2
        out_mid = outside[tuple(mid)]
        if out_mid.any():
            min_dee_out = min(min_dee_out, float(d2p[out_mid].min()))
    peak = float(p.max())
    r2 = grid.radius2()
    inner = r2 <= r2.min() + 1e-12
    peak_at_origin = bool(np.isclose(p[inner].max(), peak, rtol=0.0, atol=1e-12 * peak)
                          and (p[~inner] < peak).all())
    return {
        "min_second_difference": min_second,
        "tolerance": 10.0 * h**2 * float(np.abs(p).max()),
        "min_dee_outside_contact": min_dee_out,
        "dee_bound": -2.0 * sol.problem.a,
        "peak_at_origin": peak_at_origin,
    }
