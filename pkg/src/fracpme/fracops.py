"""Fractional Laplacian, its inverse potential, and the half-order potential on a grid.

Two realizations of the operator family are provided:

* ``periodic_spectral``: Fourier multipliers on the periodized box, |k|^(2s) for the
  fractional Laplacian and |k|^(-2s) / |k|^(-s) for the inverse and half inverse, with
  the zero mode of the inverses mapped to 0.  Exact on plane waves.
* ``freespace_kernel``: the inverse is realized as convolution with the Riesz kernel
  c(n,s) |x|^(2s-n), discretized by exact cell averages of the kernel over each source
  cell (the singular cell via closed form in 1-D and a polar-coordinate reduction in
  2-D).  The operator is translation invariant, so a single tap table drives both the
  dense matrix (small grids) and a zero-padded circular convolution (any grid).

The half inverse is the symmetric square root of the inverse, so the quadratic-form
identity <f, inverse f> = |half f|^2 holds to round-off in both modes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma, roots_legendre

from .grid import Field, Grid

PERIODIC = "periodic_spectral"
FREESPACE = "freespace_kernel"
_MODE_ALIASES = {
    PERIODIC: PERIODIC,
    FREESPACE: FREESPACE,
    "periodic": PERIODIC,
    "freespace": FREESPACE,
}

# Dense kernel matrix is stored up to this many grid points; beyond it only the
# zero-padded circular convolution path is available.
DENSE_MAX_POINTS = 2 ** 14
# Dense symmetric square root (eigendecomposition) is heavier, so its cap is lower.
HALF_INVERSE_DENSE_MAX = 2 ** 13


def riesz_constant(n: int, s: float) -> float:
    """Normalization c(n,s) = Gamma((n-2s)/2) / (4^s pi^(n/2) Gamma(s)).

    With this constant, convolution against c(n,s)|x|^(2s-n) has Fourier symbol
    |k|^(-2s), i.e. it inverts the fractional Laplacian.  Positive for 2s < n.
    """
    return float(gamma((n - 2.0 * s) / 2.0) / (4.0 ** s * np.pi ** (n / 2.0) * gamma(s)))


@dataclass(frozen=True)
class FracParams:
    """Order parameter s with its validity range tied to the dimension.

    In one dimension the inverse potential requires s < 1/2; larger s is admitted
    only with allow_supercritical=True and comes with a warning (the kernel constant
    changes sign there, so the freespace realization loses positivity).
    """

    s: float
    dim: int
    allow_supercritical: bool = False

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.dim == 1 and self.s >= 0.5:
            if not self.allow_supercritical:
                raise ValueError(
                    f"s = {self.s} >= 1/2 with dim = 1 is outside the supported range; "
                    "pass allow_supercritical=True to override"
                )
            warnings.warn(
                f"dim = 1 with s = {self.s} >= 1/2: inverse-potential kernel is not "
                "positive, results are exploratory",
                UserWarning,
                stacklevel=2,
            )


# ---------------------------------------------------------------------------
# Kernel tap tables (cell-averaged Riesz kernel, freespace realization)
# ---------------------------------------------------------------------------


def _taps_1d(grid: Grid, s: float) -> np.ndarray:
    """Cell integrals of c(1,s)|x|^(2s-1) at displacements 0, h, ..., (N-1) h.

    The antiderivative of |z|^(2s-1) is |z|^(2s) sign(z) / (2s), which gives every
    tap in closed form, the singular one included.
    """
    n, h = grid.points_per_axis, grid.spacing
    c = riesz_constant(1, s)
    if not np.isfinite(c):
        raise ValueError(f"Riesz kernel normalization diverges at 2s = n (s = {s}, n = 1)")
    m = np.arange(n, dtype=float)
    taps = np.empty(n)
    taps[0] = 2.0 * (h / 2.0) ** (2 * s) / (2 * s)
    d = m[1:] * h
    taps[1:] = ((d + h / 2.0) ** (2 * s) - (d - h / 2.0) ** (2 * s)) / (2 * s)
    return c * taps


def _singular_cell_2d(h: float, s: float) -> float:
    """Integral of |z|^(2s-2) over the square [-h/2, h/2]^2 by polar reduction.

    Splitting the square into 8 congruent triangles leaves a smooth 1-D integral
    of sec(theta)^(2s) over [0, pi/4].
    """
    sec_int, err = quad(lambda t: np.cos(t) ** (-2.0 * s), 0.0, np.pi / 4.0, epsabs=1e-14)
    if err > 1e-10:
        raise RuntimeError(f"singular-cell quadrature failed to converge (err {err:.1e})")
    return (8.0 / (2.0 * s)) * (h / 2.0) ** (2.0 * s) * sec_int


def _gl_rule(h: float, subdivisions: int, order: int) -> tuple:
    """Tensor Gauss-Legendre rule over [-h/2, h/2]^2: flat nodes (one axis) and weights."""
    x, w = roots_legendre(order)
    edges = np.linspace(-h / 2.0, h / 2.0, subdivisions + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return nodes, wts


def _taps_2d(grid: Grid, s: float) -> np.ndarray:
    """Cell integrals of c(2,s)|x|^(2s-2) at displacements (i h, j h), i,j in [0, N).

    Off-center cells are regular, so fixed Gauss-Legendre rules suffice; the rule is
    refined near the singularity where the integrand still varies strongly.
    """
    n, h = grid.points_per_axis, grid.spacing
    c = riesz_constant(2, s)
    expo = s - 1.0  # (|d - z|^2)^(s-1)
    taps = np.zeros((n, n))
    taps[0, 0] = _singular_cell_2d(h, s)

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    dinf = np.maximum(ii, jj)
    # (subdivisions, order) per distance band; the band edges were chosen so that
    # doubling either parameter moves no tap by more than ~1e-12 relative.
    for lo, hi, q, g in ((1, 2, 8, 12), (3, 6, 2, 10), (7, None, 1, 8)):
        sel = (dinf >= lo) if hi is None else ((dinf >= lo) & (dinf <= hi))
        sel &= ~((ii == 0) & (jj == 0))
        if not sel.any():
            continue
        nodes, wts = _gl_rule(h, q, g)
        dx = ii[sel, None, None] * h - nodes[None, :, None]
        dy = jj[sel, None, None] * h - nodes[None, None, :]
        vals = (dx ** 2 + dy ** 2) ** expo
        taps[sel] = np.einsum("kab,a,b->k", vals, wts, wts)
    return c * taps


# ---------------------------------------------------------------------------
# Operator realization
# ---------------------------------------------------------------------------


class FracOperator:
    """One (grid, s, mode) realization with cached multipliers / kernel tables."""

    def __init__(self, grid: Grid, params: FracParams, mode: str):
        if params.dim != grid.dim:
            raise ValueError(f"params.dim = {params.dim} does not match grid.dim = {grid.dim}")
        try:
            mode = _MODE_ALIASES[mode]
        except KeyError:
            raise ValueError(f"unknown operator mode {mode!r}") from None
        self.grid = grid
        self.params = params
        self.s = params.s
        self.mode = mode
        self._dense = None
        self._half_dense = None
        self._cho = None
        self._stiffness = None

        if mode == PERIODIC:
            k1 = 2.0 * np.pi * np.fft.fftfreq(grid.points_per_axis, d=grid.spacing)
            kr = k1[: grid.points_per_axis // 2 + 1].copy()
            kr[-1] = abs(k1[grid.points_per_axis // 2])  # Nyquist enters positive
            if grid.dim == 1:
                kabs = np.abs(kr)
            else:
                kabs = np.sqrt(k1[:, None] ** 2 + kr[None, :] ** 2)
            self._mult_lap = kabs ** (2.0 * self.s)
            with np.errstate(divide="ignore"):
                inv = kabs ** (-2.0 * self.s)
                half = kabs ** (-self.s)
            inv[~np.isfinite(inv)] = 0.0
            half[~np.isfinite(half)] = 0.0
            self._mult_inv = inv
            self._mult_half = half
        else:
            taps = _taps_1d(grid, self.s) if grid.dim == 1 else _taps_2d(grid, self.s)
            self.taps = taps
            n = grid.points_per_axis
            if grid.dim == 1:
                emb = np.zeros(2 * n)
                emb[:n] = taps
                emb[n + 1:] = taps[1:][::-1]
            else:
                emb = np.zeros((2 * n, 2 * n))
                emb[:n, :n] = taps
                emb[n + 1:, :n] = taps[1:, :][::-1, :]
                emb[:n, n + 1:] = taps[:, 1:][:, ::-1]
                emb[n + 1:, n + 1:] = taps[1:, 1:][::-1, ::-1]
            self._taps_hat = np.fft.rfftn(emb)
            self._pad_shape = emb.shape

    # -- internals ---------------------------------------------------------

    def _spectral_apply(self, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
        axes = tuple(range(values.ndim))
        fh = np.fft.rfftn(values)
        return np.fft.irfftn(fh * mult, s=values.shape, axes=axes)

    def _conv_apply(self, values: np.ndarray) -> np.ndarray:
        n = self.grid.points_per_axis
        pad = np.zeros(self._pad_shape)
        pad[(slice(0, n),) * self.grid.dim] = values
        axes = tuple(range(pad.ndim))
        out = np.fft.irfftn(np.fft.rfftn(pad) * self._taps_hat, s=self._pad_shape, axes=axes)
        return out[(slice(0, n),) * self.grid.dim]

    def dense_matrix(self) -> np.ndarray:
        """Dense inverse-potential matrix from the tap table (small grids only)."""
        if self.mode != FREESPACE:
            raise ValueError("dense matrix exists only for the freespace realization")
        if self.grid.npoints > DENSE_MAX_POINTS:
            raise ValueError(
                f"{self.grid.npoints} points exceed the dense-matrix cap {DENSE_MAX_POINTS}"
            )
        if self._dense is None:
            idx = np.arange(self.grid.points_per_axis)
            d = np.abs(idx[:, None] - idx[None, :])
            if self.grid.dim == 1:
                self._dense = self.taps[d]
            else:
                self._dense = self.taps[d[:, None, :, None], d[None, :, None, :]].reshape(
                    self.grid.npoints, self.grid.npoints
                )
        return self._dense

    def kernel_submatrix(self, flat_index: np.ndarray) -> np.ndarray:
        """Inverse-potential matrix restricted to the given flat cell indices."""
        if self.mode != FREESPACE:
            raise ValueError("kernel submatrix exists only for the freespace realization")
        if self.grid.dim == 1:
            d = np.abs(flat_index[:, None] - flat_index[None, :])
            return self.taps[d]
        n = self.grid.points_per_axis
        ix, iy = np.divmod(flat_index, n)
        dx = np.abs(ix[:, None] - ix[None, :])
        dy = np.abs(iy[:, None] - iy[None, :])
        return self.taps[dx, dy]

    def _half_matrix(self) -> np.ndarray:
        if self._half_dense is None:
            if self.grid.npoints > HALF_INVERSE_DENSE_MAX:
                raise ValueError(
                    f"freespace half inverse needs <= {HALF_INVERSE_DENSE_MAX} points "
                    f"(got {self.grid.npoints}); use the periodic realization instead"
                )
            vals, vecs = np.linalg.eigh(self.dense_matrix())
            floor = 1e-14 * vals.max()
            if vals.min() < -floor:
                warnings.warn(
                    f"inverse-potential matrix has negative eigenvalue {vals.min():.3e}; "
                    "clipping for the square root",
                    UserWarning,
                    stacklevel=2,
                )
            vals = np.clip(vals, 0.0, None)
            self._half_dense = (vecs * np.sqrt(vals)) @ vecs.T
        return self._half_dense

    def _check_field(self, f: Field):
        if not f.grid.compatible(self.grid):
            raise ValueError("field grid does not match operator grid")

    def stiffness_bound(self) -> float:
        """max over Fourier modes of (second-difference symbol) * (kernel symbol).

        Bounds the decay rate of the linearized density-weighted diffusion
        div(u grad K du): a mode decays at rate <= u * bound, so an explicit
        Euler step is non-amplifying when dt * u_max * bound <= 2.  Because
        the kernel symbol behaves like |k|^(-2s), the bound scales like
        h^(2s-2): the diffusion constraint dt ~ h^(2-2s) beats the advective
        CFL dt ~ h on fine grids whenever s < 1/2."""
        if self._stiffness is None:
            h = self.grid.spacing
            if self.mode == PERIODIC:
                n = self.grid.points_per_axis
                k1 = np.fft.fftfreq(n)
                kr = np.abs(np.fft.rfftfreq(n))
                if self.grid.dim == 1:
                    lap = (4.0 / h**2) * np.sin(np.pi * kr) ** 2
                else:
                    lap = (4.0 / h**2) * (
                        np.sin(np.pi * k1[:, None]) ** 2 + np.sin(np.pi * kr[None, :]) ** 2
                    )
                self._stiffness = float((lap * self._mult_inv).max())
            else:
                # circulant symbol of the embedded kernel; taps are symmetric
                # so it is real up to roundoff
                sym = np.maximum(self._taps_hat.real, 0.0)
                m = self._pad_shape[0]
                k1 = np.fft.fftfreq(m)
                kr = np.abs(np.fft.rfftfreq(m))
                if self.grid.dim == 1:
                    lap = (4.0 / h**2) * np.sin(np.pi * kr) ** 2
                else:
                    lap = (4.0 / h**2) * (
                        np.sin(np.pi * k1[:, None]) ** 2 + np.sin(np.pi * kr[None, :]) ** 2
                    )
                self._stiffness = float((lap * sym).max())
        return self._stiffness

    # -- public applications -------------------------------------------------

    def frac_laplacian(self, f: Field) -> Field:
        self._check_field(f)
        if self.mode == PERIODIC:
            out = self._spectral_apply(f.values, self._mult_lap)
        else:
            from scipy.linalg import cho_factor, cho_solve

            if self._cho is None:
                self._cho = cho_factor(self.dense_matrix())
            out = cho_solve(self._cho, f.values.ravel()).reshape(f.values.shape)
        return Field(self.grid, out, "generic")

    def inverse(self, f: Field) -> Field:
        self._check_field(f)
        if self.mode == PERIODIC:
            out = self._spectral_apply(f.values, self._mult_inv)
        else:
            out = self._conv_apply(f.values)
        return Field(self.grid, out, "pressure")

    def half_inverse(self, f: Field) -> Field:
        self._check_field(f)
        if self.mode == PERIODIC:
            out = self._spectral_apply(f.values, self._mult_half)
        else:
            out = (self._half_matrix() @ f.values.ravel()).reshape(f.values.shape)
        return Field(self.grid, out, "generic")


def make_operator(grid: Grid, params: FracParams, mode: str) -> FracOperator:
    return FracOperator(grid, params, mode)


def apply_frac_laplacian(op: FracOperator, f: Field) -> Field:
    return op.frac_laplacian(f)


def apply_inverse(op: FracOperator, f: Field) -> Field:
    return op.inverse(f)


def apply_half_inverse(op: FracOperator, f: Field) -> Field:
    return op.half_inverse(f)


def gradient(f: Field, periodic: bool = False) -> list:
    """Second-order gradient per axis: centered inside, one-sided at a free boundary."""
    h = f.grid.spacing
    out = []
    for ax in range(f.grid.dim):
        if periodic:
            g = (np.roll(f.values, -1, axis=ax) - np.roll(f.values, 1, axis=ax)) / (2.0 * h)
        else:
            g = np.gradient(f.values, h, axis=ax, edge_order=2)
        out.append(Field(f.grid, g, "generic"))
    return out
