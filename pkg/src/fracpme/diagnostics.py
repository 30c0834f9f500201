"""Recorded quantities along a run and the checks built on them.

One record per sampled time: mass, norms, second moment, the quadratic energy
integral(v K v), the confined entropy E = (energy + beta * moment2)/2, the
Boltzmann integral v log v, the dissipation integral(|grad(K v + beta/2 |y|^2)|^2 v),
and the support radius.  All quadratures are the midpoint rule on the grid;
the dissipation uses face-centered gradients with the upwind face density,
matching the flux discretization of the stepper.  With that convention a
stationary profile reports exactly zero dissipation: every face either has a
vanishing potential gradient (on the contact set) or draws its density from
the empty side of the free boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .fracops import PERIODIC, FracOperator, gradient
from .grid import Field

CSV_COLUMNS = (
    "time", "mass", "linf", "l2", "l4", "moment2", "energy1",
    "entropy", "boltzmann", "dissipation", "support_radius",
)

BOLTZMANN_FLOOR = 1e-30


@dataclass
class DiagnosticsRecord:
    time: float
    mass: float
    linf: float
    l2: float
    l4: float
    moment2: float
    energy1: float
    entropy: float
    boltzmann: float
    dissipation: float
    support_radius: float
    # integral |grad H v|^2, filled only when requested (not a CSV column)
    grad_h_sq: float | None = None

    def row(self) -> tuple:
        return tuple(getattr(self, name) for name in CSV_COLUMNS)


@dataclass
class DiagnosticsSeries:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, rec: DiagnosticsRecord):
        if self.records and rec.time <= self.records[-1].time:
            raise ValueError(
                f"record times must increase ({rec.time} after {self.records[-1].time})"
            )
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        if name not in {f.name for f in fields(DiagnosticsRecord)}:
            raise KeyError(f"unknown diagnostics column {name!r}")
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def __len__(self) -> int:
        return len(self.records)


def support_radius(v: Field, threshold: float | None = None) -> float:
    """Largest cell-center radius where v exceeds the threshold (default
    1e-10 * max|v|); zero for an identically zero field."""
    peak = v.linf()
    if peak == 0.0:
        return 0.0
    thr = 1e-10 * peak if threshold is None else threshold
    if thr <= 0.0:
        raise ValueError(f"threshold must be positive, got {thr}")
    mask = v.values > thr
    if not mask.any():
        return 0.0
    return float(np.sqrt(v.grid.radius2()[mask].max()))


def _face_grad_quadrature(pot: np.ndarray, weight: np.ndarray | None, grid,
                          periodic: bool, drift_coeff: float | None) -> float:
    """Sum over faces of (d pot / d axis + drift)^2 * upwind weight * h^n.

    The face velocity is -(d pot + drift), so the upwind cell is the lower
    one where the face gradient is negative.  weight=None means unit weight
    (plain squared-gradient integral, face-centered)."""
    h = grid.spacing
    total = 0.0
    for ax in range(grid.dim):
        if periodic:
            g = (np.roll(pot, -1, axis=ax) - pot) / h
            w = 1.0 if weight is None else np.where(
                g < 0.0, weight, np.roll(weight, -1, axis=ax))
        else:
            g = np.diff(pot, axis=ax) / h
            if drift_coeff is not None:
                faces = grid.interior_faces()
                shape = [1] * grid.dim
                shape[ax] = faces.size
                g = g + drift_coeff * faces.reshape(shape)
            if weight is None:
                w = 1.0
            else:
                lo = [slice(None)] * grid.dim
                hi = [slice(None)] * grid.dim
                lo[ax] = slice(None, -1)
                hi[ax] = slice(1, None)
                w = np.where(g < 0.0, weight[tuple(lo)], weight[tuple(hi)])
        total += float(np.sum(g * g * w)) * h ** grid.dim
    return total


def record(v: Field, time: float, exp, op: FracOperator, confined: bool = True,
           include_half_gradient: bool = False) -> DiagnosticsRecord:
    """All diagnostics of one state.  confined=True adds the drift potential
    beta/2 |y|^2 to the dissipation integrand (rescaled flow); the entropy
    formula always carries its beta moment term."""
    grid = v.grid
    h = grid.spacing
    vol = h ** grid.dim
    vals = v.values
    periodic = op.mode == PERIODIC

    mass = vol * float(vals.sum())
    r2 = grid.radius2()
    moment2 = vol * float((r2 * vals).sum())
    kv = op.inverse(v).values
    energy1 = vol * float((vals * kv).sum())
    entropy = 0.5 * (energy1 + exp.beta * moment2)
    pos = vals[vals > BOLTZMANN_FLOOR]
    boltzmann = vol * float((pos * np.log(pos)).sum())
    dissipation = _face_grad_quadrature(
        kv, vals, grid, periodic, exp.beta if confined else None
    )
    grad_h_sq = None
    if include_half_gradient:
        hv = op.half_inverse(v).values
        grad_h_sq = _face_grad_quadrature(hv, None, grid, periodic, None)
    return DiagnosticsRecord(
        time=float(time), mass=mass, linf=v.linf(), l2=v.lp(2), l4=v.lp(4),
        moment2=moment2, energy1=energy1, entropy=entropy, boltzmann=boltzmann,
        dissipation=dissipation, support_radius=support_radius(v),
        grad_h_sq=grad_h_sq,
    )


def entropy_dissipation_identity_check(series: DiagnosticsSeries,
                                       window: tuple | None = None) -> dict:
    """Centered dE/dtau against -I at interior records.

    Returns the mismatch series and its maximum relative size
    |dE/dtau + I| / max(|dE/dtau|, I) over the window."""
    if len(series) < 3:
        raise ValueError("need at least 3 records for the centered difference")
    t = series.column("time")
    e = series.column("entropy")
    i = series.column("dissipation")
    de = (e[2:] - e[:-2]) / (t[2:] - t[:-2])
    mid_t, mid_i = t[1:-1], i[1:-1]
    if window is not None:
        sel = (mid_t >= window[0]) & (mid_t <= window[1])
        if not sel.any():
            raise ValueError(f"no interior records in window {window}")
        de, mid_t, mid_i = de[sel], mid_t[sel], mid_i[sel]
    scale = np.maximum(np.maximum(np.abs(de), mid_i), 1e-300)
    mismatch = np.abs(de + mid_i) / scale
    return {
        "times": mid_t,
        "mismatch": mismatch,
        "max_rel_mismatch": float(mismatch.max()),
        "de_dtau": de,
        "dissipation": mid_i,
    }


def boltzmann_identity_check(series: DiagnosticsSeries, exp,
                             window: tuple | None = None) -> dict:
    """Centered d/dtau of integral(v log v) against -integral|grad H v|^2 + alpha*mass.

    Records must carry grad_h_sq (run with include_half_gradient)."""
    if len(series) < 3:
        raise ValueError("need at least 3 records for the centered difference")
    if any(r.grad_h_sq is None for r in series.records):
        raise ValueError("records lack grad_h_sq; rerun with include_half_gradient")
    t = series.column("time")
    b = series.column("boltzmann")
    g = series.column("grad_h_sq")
    m = series.column("mass")
    db = (b[2:] - b[:-2]) / (t[2:] - t[:-2])
    rhs = -g[1:-1] + exp.alpha * m[1:-1]
    mid_t = t[1:-1]
    if window is not None:
        sel = (mid_t >= window[0]) & (mid_t <= window[1])
        if not sel.any():
            raise ValueError(f"no interior records in window {window}")
        db, rhs, mid_t = db[sel], rhs[sel], mid_t[sel]
    scale = np.maximum(np.maximum(np.abs(db), np.abs(rhs)), 1e-300)
    mismatch = np.abs(db - rhs) / scale
    return {
        "times": mid_t,
        "mismatch": mismatch,
        "max_rel_mismatch": float(mismatch.max()),
        "db_dtau": db,
        "rhs": rhs,
    }


def fit_power_law(series: DiagnosticsSeries, quantity: str, window: tuple) -> tuple:
    """Least-squares slope of log(quantity) against log(time) in the window;
    returns (slope, stderr)."""
    t = series.column("time")
    y = series.column(quantity)
    sel = (t >= window[0]) & (t <= window[1]) & (t > 0.0)
    if sel.sum() < 10:
        raise ValueError(f"need >= 10 records in window {window}, have {int(sel.sum())}")
    y = y[sel]
    if (y <= 0.0).any():
        raise ValueError(f"nonpositive {quantity} values in the fit window")
    lt, ly = np.log(t[sel]), np.log(y)
    (slope, _), cov = np.polyfit(lt, ly, 1, cov=True)
    return float(slope), float(np.sqrt(cov[0, 0]))


@dataclass
class ConvergenceReport:
    times: np.ndarray
    l1_distance: np.ndarray
    linf_distance: np.ndarray
    entropy_gap: np.ndarray
    gap_ratio: np.ndarray  # entropy gap over dissipation, nan where I ~ 0


def convergence_to_profile(traj, profile: Field, exp, op: FracOperator,
                           mass_tol: float = 0.01) -> ConvergenceReport:
    """Distances of every snapshot to the stationary profile.

    The run's mass must match the profile's within mass_tol (the profile is
    supposed to be selected by the mass rule)."""
    run_mass = traj.snapshots[0].mass()
    prof_mass = profile.mass()
    if abs(run_mass - prof_mass) > mass_tol * prof_mass:
        raise ValueError(
            f"run mass {run_mass:.6g} does not match profile mass {prof_mass:.6g}"
        )
    vol = profile.grid.spacing ** profile.grid.dim
    l1 = np.array([
        vol * float(np.abs(s.values - profile.values).sum()) for s in traj.snapshots
    ])
    linf = np.array([
        float(np.abs(s.values - profile.values).max()) for s in traj.snapshots
    ])
    e_profile = record(profile, 0.0, exp, op, confined=True).entropy
    gap = traj.diagnostics.column("entropy") - e_profile
    diss = traj.diagnostics.column("dissipation")
    ratio = np.where(diss > 1e-14, gap / np.where(diss > 1e-14, diss, 1.0), np.nan)
    return ConvergenceReport(
        times=np.array(traj.times), l1_distance=l1, linf_distance=linf,
        entropy_gap=gap, gap_ratio=ratio,
    )


def spectral_gap_probe(series: DiagnosticsSeries, profile: Field, exp,
                       op: FracOperator) -> dict:
    """Entropy-to-dissipation ratios along a run: the relative form
    (E(v) - E(profile))/I and the literal form E/I.  Ratios are nan where
    I < 1e-14 (stationary state); nothing is asserted here."""
    e_profile = record(profile, 0.0, exp, op, confined=True).entropy
    t = series.column("time")
    e = series.column("entropy")
    i = series.column("dissipation")
    safe = i > 1e-14
    rel = np.where(safe, (e - e_profile) / np.where(safe, i, 1.0), np.nan)
    lit = np.where(safe, e / np.where(safe, i, 1.0), np.nan)
    return {"times": t, "relative_ratio": rel, "literal_ratio": lit}
