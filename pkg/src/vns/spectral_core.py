"""Periodic grid, FFT transforms and Fourier-multiplier operators on the 2D torus.

Fields are sampled on an n x n grid over [0, l)^2.  Array axis 0 runs along
x1 and axis 1 along x2, so ``values[i, j] = f(i*h, j*h)``.  Spectral
coefficients use the unnormalized ``numpy.fft.fft2`` layout, so a constant
field c has zero-mode coefficient ``c * n**2``.

Two kinds of functions live here:

* array-level helpers (``fft``, ``ifft``, ``dealias`` and the symbol
  properties on :class:`Grid`) used by the time stepper, and
* the public field-level operations (``transform``, ``riesz``,
  ``biot_savart``, ``strain``, the norms) which validate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

DEALIAS_RULES = ("two_thirds", "none")
MEAN_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the torus [0, l)^2.

    Args:
        n: Points per dimension, a power of two no smaller than 16.
        l: Period length.
        dealias_rule: ``"two_thirds"`` (default) or ``"none"``.
    """

    n: int
    l: float = 2.0 * math.pi
    dealias_rule: str = "two_thirds"

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise ValueError(f"grid size n must be a power of two >= 16, got {n!r}")
        if not (math.isfinite(self.l) and self.l > 0):
            raise ValueError(f"period l must be positive, got {self.l!r}")
        if self.dealias_rule not in DEALIAS_RULES:
            raise ValueError(
                f"dealias_rule must be one of {DEALIAS_RULES}, got {self.dealias_rule!r}"
            )

    @property
    def h(self) -> float:
        """Grid spacing l/n."""
        return self.l / self.n

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @cached_property
    def nodes(self) -> np.ndarray:
        """1D node coordinates i*h."""
        return np.arange(self.n) * self.h

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates (X1, X2) with ``indexing="ij"``."""
        x1, x2 = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        x1.setflags(write=False)
        x2.setflags(write=False)
        return x1, x2

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer wavenumbers in FFT order (Nyquist appears as -n/2)."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(int)

    @cached_property
    def k1(self) -> np.ndarray:
        """Physical wavenumber along x1, shape (n, 1)."""
        return (2.0 * math.pi / self.l) * self.mode_index[:, None].astype(float)

    @cached_property
    def k2(self) -> np.ndarray:
        """Physical wavenumber along x2, shape (1, n)."""
        return (2.0 * math.pi / self.l) * self.mode_index[None, :].astype(float)

    @cached_property
    def k1_odd(self) -> np.ndarray:
        """k1 with the Nyquist entry zeroed, for odd-order symbols."""
        k = self.k1.copy()
        k[self.n // 2, 0] = 0.0
        return k

    @cached_property
    def k2_odd(self) -> np.ndarray:
        k = self.k2.copy()
        k[0, self.n // 2] = 0.0
        return k

    @cached_property
    def ksq(self) -> np.ndarray:
        """|xi|^2 on the full (n, n) layout."""
        return self.k1**2 + self.k2**2

    @cached_property
    def ksq_safe(self) -> np.ndarray:
        """|xi|^2 with the zero mode replaced by 1 (safe divisor)."""
        k = self.ksq.copy()
        k[0, 0] = 1.0
        return k

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask of retained modes (|k_j| <= n/3 under two_thirds)."""
        if self.dealias_rule == "none":
            return np.ones((self.n, self.n), dtype=bool)
        keep = np.abs(self.mode_index) <= self.n / 3.0
        return keep[:, None] & keep[None, :]

    @cached_property
    def resolved_mask(self) -> np.ndarray:
        """Retained modes minus the zero mode and the Nyquist row/column.

        This is the subspace on which the Riesz identities hold exactly and
        on which R_mu is inverted.
        """
        m = self.dealias_mask.copy()
        m[0, 0] = False
        m[self.n // 2, :] = False
        m[:, self.n // 2] = False
        return m

    @cached_property
    def p1_symbol(self) -> np.ndarray:
        """Symbol of P1 = R2R2 - R1R1, (xi2^2 - xi1^2)/|xi|^2."""
        s = (self.k2**2 - self.k1**2) / self.ksq_safe
        s[0, 0] = 0.0
        return s

    @cached_property
    def p2_symbol(self) -> np.ndarray:
        """Symbol of P2 = 2 R1R2, 2 xi1 xi2/|xi|^2 (Nyquist zeroed)."""
        s = 2.0 * self.k1_odd * self.k2_odd / self.ksq_safe
        s[0, 0] = 0.0
        return s

    def zeros(self) -> np.ndarray:
        return np.zeros((self.n, self.n))


# ---------------------------------------------------------------------------
# array-level helpers


def fft(values: np.ndarray) -> np.ndarray:
    """Forward 2D FFT of real samples."""
    return np.fft.fft2(values)


def ifft(coeffs: np.ndarray) -> np.ndarray:
    """Inverse 2D FFT, returning the real part."""
    return np.fft.ifft2(coeffs).real


def dealias(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Zero the modes outside the dealiasing mask (returns a new array)."""
    if grid.dealias_rule == "none":
        return coeffs
    return np.where(grid.dealias_mask, coeffs, 0.0)


def product_hat(f: np.ndarray, g: np.ndarray, grid: Grid) -> np.ndarray:
    """Dealiased coefficients of the pointwise product of two real arrays."""
    return dealias(fft(f * g), grid)


def deriv_hat(coeffs: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Coefficients of d/dx_{axis+1} (axis is 0 or 1)."""
    k = grid.k1_odd if axis == 0 else grid.k2_odd
    return 1j * k * coeffs


def grad(values: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Spectral gradient of a real array."""
    c = fft(values)
    return ifft(deriv_hat(c, 0, grid)), ifft(deriv_hat(c, 1, grid))


def velocity_hat(omega_hat: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Biot-Savart in coefficient space: u = grad_perp inv_lap omega."""
    psi = -omega_hat / grid.ksq_safe
    psi[0, 0] = 0.0
    return -deriv_hat(psi, 1, grid), deriv_hat(psi, 0, grid)


def velocity_gradient(u1: np.ndarray, u2: np.ndarray, grid: Grid) -> np.ndarray:
    """Return G with G[i, j] = d_j u_i, shape (2, 2, n, n)."""
    d11, d12 = grad(u1, grid)
    d21, d22 = grad(u2, grid)
    return np.array([[d11, d12], [d21, d22]])


def is_mean_zero(values: np.ndarray, tol: float = MEAN_TOL) -> bool:
    """True when |mean| <= tol * max(1, max|f|)."""
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    return abs(float(np.mean(values))) <= tol * scale


def random_field(grid: Grid, rng: np.random.Generator, slope: float = 0.0,
                 band_limited: bool = True) -> np.ndarray:
    """Random real mean-zero field with spectrum |k|^-slope.

    Args:
        grid: Target grid.
        rng: Random generator.
        slope: Amplitude decay exponent in |k|.
        band_limited: Restrict to resolved modes (zero mode, Nyquist and
            dealiased modes removed).

    Returns:
        Real array normalized to unit RMS.
    """
    white = fft(rng.standard_normal((grid.n, grid.n)))
    kmag = np.sqrt(grid.ksq_safe) * grid.l / (2.0 * math.pi)
    c = white * kmag ** (-slope)
    mask = grid.resolved_mask if band_limited else np.ones_like(grid.resolved_mask)
    c = np.where(mask, c, 0.0)
    c[0, 0] = 0.0
    f = ifft(c)
    return f / np.sqrt(np.mean(f**2))


# ---------------------------------------------------------------------------
# field types


def _frozen_array(values, shape: tuple[int, int], dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field contains NaN or Inf")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples on a grid (immutable)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        object.__setattr__(self, "values", _frozen_array(self.values, (n, n), float))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "ScalarField":
        x1, x2 = grid.mesh
        return cls(grid, np.broadcast_to(func(x1, x2), (grid.n, grid.n)))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values - other.values)

    def scale(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, c * self.values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """FFT coefficients of a field, standard (unnormalized) fft2 layout."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        object.__setattr__(self, "coeffs", _frozen_array(self.coeffs, (n, n), complex))

    def is_conjugate_symmetric(self, tol: float = 1e-10) -> bool:
        c = self.coeffs
        mirror = np.conj(np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1)))
        scale = max(1.0, float(np.max(np.abs(c))))
        return bool(np.max(np.abs(c - mirror)) <= tol * scale)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two-component field sharing one grid."""

    x: ScalarField
    y: ScalarField

    def __post_init__(self):
        if self.x.grid != self.y.grid:
            raise ValueError("vector components must share one grid")

    @property
    def grid(self) -> Grid:
        return self.x.grid

    @classmethod
    def from_arrays(cls, grid: Grid, v1, v2) -> "VectorField":
        return cls(ScalarField(grid, v1), ScalarField(grid, v2))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.x.values, self.y.values)


@dataclass(frozen=True, eq=False)
class TensorField:
    """Symmetric 2x2 field stored by its independent entries."""

    s11: ScalarField
    s12: ScalarField
    s22: ScalarField

    @property
    def s21(self) -> ScalarField:
        return self.s12

    def trace(self) -> ScalarField:
        return self.s11 + self.s22

    def frobenius_sq(self) -> np.ndarray:
        return self.s11.values**2 + 2.0 * self.s12.values**2 + self.s22.values**2


# ---------------------------------------------------------------------------
# public operations


def transform(field: ScalarField) -> SpectralField:
    """Forward FFT of a scalar field."""
    return SpectralField(field.grid, fft(field.values))


def inverse_transform(spec: SpectralField) -> ScalarField:
    """Inverse FFT; the imaginary part (roundoff or non-Hermitian input) is dropped."""
    return ScalarField(spec.grid, ifft(spec.coeffs))


def riesz(j: int, f: SpectralField) -> SpectralField:
    """Riesz transform with multiplier xi_j/|xi| (zero mode mapped to 0).

    Args:
        j: Axis index, 1 or 2.
        f: Input coefficients.

    Returns:
        Coefficients multiplied by xi_j/|xi|.  A single Riesz transform of a
        real field is purely imaginary; compositions of two are real.
    """
    if j not in (1, 2):
        raise ValueError(f"axis index must be 1 or 2, got {j}")
    g = f.grid
    k = g.k1 if j == 1 else g.k2
    sym = k / np.sqrt(g.ksq_safe)
    sym = np.broadcast_to(sym, (g.n, g.n)).copy()
    sym[0, 0] = 0.0
    return SpectralField(g, sym * f.coeffs)


def riesz_pair(i: int, j: int, f: SpectralField) -> SpectralField:
    """R_i R_j with the even symbol xi_i xi_j/|xi|^2 (real-valued output)."""
    g = f.grid
    ks = {1: (g.k1, g.k1_odd), 2: (g.k2, g.k2_odd)}
    if i not in ks or j not in ks:
        raise ValueError("axis indices must be 1 or 2")
    if i == j:
        sym = ks[i][0] ** 2 / g.ksq_safe
    else:
        sym = ks[i][1] * ks[j][1] / g.ksq_safe
    sym = np.broadcast_to(sym, (g.n, g.n)).copy()
    sym[0, 0] = 0.0
    return SpectralField(g, sym * f.coeffs)


def derivative(j: int, f: SpectralField) -> SpectralField:
    """Partial derivative d/dx_j, multiplier i xi_j (Nyquist zeroed)."""
    if j not in (1, 2):
        raise ValueError(f"axis index must be 1 or 2, got {j}")
    return SpectralField(f.grid, deriv_hat(f.coeffs, j - 1, f.grid))


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """Solve Delta g = f for mean-zero g.

    Raises:
        ValueError: if f has a nonzero mean above tolerance.
    """
    g = f.grid
    mean = abs(f.coeffs[0, 0]) / g.n**2
    scale = max(1.0, float(np.max(np.abs(f.coeffs))) / g.n**2)
    if mean > MEAN_TOL * scale:
        raise ValueError(f"inverse_laplacian needs a mean-zero field (mean {mean:.3e})")
    out = -f.coeffs / g.ksq_safe
    out[0, 0] = 0.0
    return SpectralField(g, out)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.ksq * f.coeffs)


def biot_savart(omega: ScalarField) -> VectorField:
    """Velocity u = grad_perp inv_lap omega with grad_perp = (-d2, d1).

    Raises:
        ValueError: if omega is not mean-zero.
    """
    if not is_mean_zero(omega.values):
        raise ValueError(f"biot_savart needs mean-zero vorticity (mean {omega.mean():.3e})")
    g = omega.grid
    u1, u2 = velocity_hat(fft(omega.values), g)
    return VectorField.from_arrays(g, ifft(u1), ifft(u2))


def curl(u: VectorField) -> ScalarField:
    """Scalar vorticity d1 u2 - d2 u1."""
    g = u.grid
    c1, c2 = fft(u.x.values), fft(u.y.values)
    return ScalarField(g, ifft(deriv_hat(c2, 0, g) - deriv_hat(c1, 1, g)))


def divergence(u: VectorField) -> ScalarField:
    g = u.grid
    c1, c2 = fft(u.x.values), fft(u.y.values)
    return ScalarField(g, ifft(deriv_hat(c1, 0, g) + deriv_hat(c2, 1, g)))


def strain(u: VectorField) -> TensorField:
    """Su = grad u + grad u^T, i.e. (Su)_ij = d_i u_j + d_j u_i."""
    g = u.grid
    G = velocity_gradient(u.x.values, u.y.values, g)
    return TensorField(
        ScalarField(g, 2.0 * G[0, 0]),
        ScalarField(g, G[0, 1] + G[1, 0]),
        ScalarField(g, 2.0 * G[1, 1]),
    )


def lp_norm(f: ScalarField | np.ndarray, p: float, grid: Grid | None = None) -> float:
    """L^p norm by equispaced quadrature; p = inf gives the max norm.

    Args:
        f: Field, or a raw array (then ``grid`` is required).  A raw array of
            shape (k, n, n) is treated pointwise as a k-vector (Euclidean norm).
        p: Exponent, >= 1 or ``math.inf``.
    """
    if isinstance(f, ScalarField):
        grid, vals = f.grid, f.values
    else:
        if grid is None:
            raise ValueError("grid required for raw arrays")
        vals = np.asarray(f)
        if vals.ndim == 3:
            vals = np.sqrt(np.sum(vals**2, axis=0))
    if p == math.inf:
        return float(np.max(np.abs(vals)))
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(vals)
    top = float(np.max(a))
    if top == 0.0:
        return 0.0
    # scale to avoid overflow for large p
    return top * float(np.sum((a / top) ** p) * grid.cell_area) ** (1.0 / p)


def linf_norm(f: ScalarField) -> float:
    return float(np.max(np.abs(f.values)))


def sobolev_norm(f: ScalarField, s: float) -> float:
    """Homogeneous Sobolev norm via the Plancherel sum.

    For s > 0 and s < 0 the zero mode is excluded; s = 0 reproduces L^2.

    Raises:
        ValueError: for s < 0 on a field with nonzero mean.
    """
    g = f.grid
    c = fft(f.values)
    if s < 0 and not is_mean_zero(f.values):
        raise ValueError("negative-order Sobolev norm needs a mean-zero field")
    weight = g.ksq_safe**s
    if s != 0:
        weight = weight.copy()
        weight[0, 0] = 0.0
    total = float(np.sum(weight * np.abs(c) ** 2))
    return math.sqrt(total * g.l**2 / g.n**4)


def vector_sobolev_norm(u: VectorField, s: float) -> float:
    return math.hypot(sobolev_norm(u.x, s), sobolev_norm(u.y, s))


def vector_lp_norm(u: VectorField, p: float) -> float:
    return lp_norm(np.array([u.x.values, u.y.values]), p, u.grid)
