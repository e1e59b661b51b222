"""Transport of the material fields: mu, tau, unit tangent, d_tau mu, theta,
and the Lagrangian flow map.

Semi-Lagrangian steps backtrack characteristics with an RK2 midpoint rule
and interpolate at the departure points.  Cubic interpolation is the
4-point Lagrange stencil per axis (fourth order); its monotone variant
clips each value to the range of the enclosing grid cell, which keeps
min/max bounds exactly.  Fourier interpolation evaluates the trigonometric
interpolant directly (O(n^4), meant for small grids and smooth data).

Source terms (stretching) are applied by Strang splitting with the exact
exponential of the frozen pointwise velocity gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral_core import (
    Grid,
    ScalarField,
    VectorField,
    deriv_hat,
    dealias,
    fft,
    ifft,
    velocity_gradient,
)

SCHEME_KINDS = ("semi_lagrangian_spectral", "pseudo_spectral_rk")
INTERPOLATIONS = ("fourier", "cubic")
MAX_COURANT = 1.0


@dataclass(frozen=True)
class AdvectionScheme:
    """How the material fields are advected.

    Args:
        kind: ``semi_lagrangian_spectral`` or ``pseudo_spectral_rk``.
        interpolation: ``cubic`` or ``fourier`` (semi-Lagrangian only).
    """

    kind: str = "semi_lagrangian_spectral"
    interpolation: str = "cubic"

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown advection scheme {self.kind!r}")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"unknown interpolation {self.interpolation!r}")

    @property
    def semi_lagrangian(self) -> bool:
        return self.kind == "semi_lagrangian_spectral"

    def check_for_jump(self) -> None:
        """Reject schemes that are not allowed for mollified-jump viscosity."""
        if not (self.semi_lagrangian and self.interpolation == "cubic"):
            raise ValueError(
                "discontinuous viscosity requires semi_lagrangian_spectral with cubic interpolation"
            )


class CFLError(ValueError):
    """Time step exceeds the Courant limit."""


class DegenerateFieldError(RuntimeError):
    """The unit tangent lost length below 1/2 before renormalization."""


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Forward flow map X(t, xi) sampled at the grid nodes xi.

    Attributes:
        positions: Array of shape (2, n, n); positions are not wrapped.
        t: Time.
    """

    positions: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float, copy=True)
        if pos.ndim != 3 or pos.shape[0] != 2 or pos.shape[1] != pos.shape[2]:
            raise ValueError("flow map positions must have shape (2, n, n)")
        if not np.all(np.isfinite(pos)):
            raise ValueError("flow map positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def identity(cls, grid: Grid, t: float = 0.0) -> "FlowMap":
        x1, x2 = grid.mesh
        return cls(np.array([x1, x2]), t)

    def displacement(self, grid: Grid) -> np.ndarray:
        x1, x2 = grid.mesh
        return self.positions - np.array([x1, x2])


# ---------------------------------------------------------------------------
# interpolation


def _lagrange_weights(t: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights for nodes -1, 0, 1, 2 at offset t in [0, 1)."""
    return np.array([
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ])


class Interpolator:
    """Periodic interpolation of grid arrays at a fixed set of points.

    Weights and stencil indices are computed once and reused for every
    field evaluated at the same points.

    Args:
        grid: Source grid.
        x1, x2: Point coordinates (any shape, unwrapped is fine).
        kind: ``cubic`` or ``fourier``.
    """

    def __init__(self, grid: Grid, x1: np.ndarray, x2: np.ndarray, kind: str = "cubic"):
        if kind not in INTERPOLATIONS:
            raise ValueError(f"unknown interpolation {kind!r}")
        self.grid = grid
        self.kind = kind
        self.shape = np.shape(x1)
        p1 = np.ravel(x1) % grid.l
        p2 = np.ravel(x2) % grid.l
        if kind == "fourier":
            m = grid.mode_index.astype(float) * (2.0 * math.pi / grid.l)
            self._e1 = np.exp(1j * np.outer(p1, m))
            self._e2 = np.exp(1j * np.outer(p2, m))
            return
        n = grid.n
        s1, s2 = p1 / grid.h, p2 / grid.h
        i0, j0 = np.floor(s1).astype(int), np.floor(s2).astype(int)
        t1, t2 = s1 - i0, s2 - j0
        off = np.arange(-1, 3)[:, None]
        self._ia = (i0[None, :] + off) % n
        self._jb = (j0[None, :] + off) % n
        self._w1 = _lagrange_weights(t1)
        self._w2 = _lagrange_weights(t2)
        # nearest node inside the 4x4 stencil (used for sign alignment)
        self._near = (1 + (t1 >= 0.5).astype(int), 1 + (t2 >= 0.5).astype(int))

    def _stencil(self, f: np.ndarray) -> np.ndarray:
        return f[self._ia[:, None, :], self._jb[None, :, :]]

    def _combine(self, F: np.ndarray) -> np.ndarray:
        return np.einsum("am,bm,abm->m", self._w1, self._w2, F)

    def __call__(self, f: np.ndarray, monotone: bool = False) -> np.ndarray:
        if self.kind == "fourier":
            c = fft(f) / f.size
            out = np.einsum("ma,ab,mb->m", self._e1, c, self._e2).real
            return out.reshape(self.shape)
        F = self._stencil(f)
        out = self._combine(F)
        if monotone:
            cell = F[1:3, 1:3].reshape(4, -1)
            out = np.clip(out, cell.min(axis=0), cell.max(axis=0))
        return out.reshape(self.shape)

    def vector(self, f1: np.ndarray, f2: np.ndarray, align: bool = False):
        """Interpolate a vector field.

        With ``align`` each stencil vector is first flipped to agree in sign
        with the nearest node, so a tangent field with a head-to-tail jump
        is averaged as an unoriented direction (cubic only).
        """
        if self.kind == "fourier" or not align:
            return self(f1), self(f2)
        F1, F2 = self._stencil(f1), self._stencil(f2)
        m = np.arange(F1.shape[2])
        r1 = F1[self._near[0], self._near[1], m]
        r2 = F2[self._near[0], self._near[1], m]
        sign = np.where(F1 * r1 + F2 * r2 < 0.0, -1.0, 1.0)
        return (self._combine(F1 * sign).reshape(self.shape),
                self._combine(F2 * sign).reshape(self.shape))


def interpolate(f: ScalarField, x1, x2, kind: str = "cubic", monotone: bool = False) -> np.ndarray:
    """Evaluate a periodic field at arbitrary points."""
    return Interpolator(f.grid, np.asarray(x1, float), np.asarray(x2, float), kind)(f.values, monotone)


# ---------------------------------------------------------------------------
# array-level kernels


def courant(u1: np.ndarray, u2: np.ndarray, dt: float, grid: Grid) -> float:
    umax = float(np.max(np.hypot(u1, u2))) if u1.size else 0.0
    return dt * umax / grid.h


def check_cfl(u1, u2, dt: float, grid: Grid) -> None:
    c = courant(u1, u2, dt, grid)
    if c > MAX_COURANT * (1.0 + 1e-12):
        raise CFLError(f"Courant number {c:.3f} exceeds {MAX_COURANT}")


def departure_points(u1: np.ndarray, u2: np.ndarray, dt: float, grid: Grid,
                     kind: str = "cubic"):
    """Backtrack characteristics one step with the RK2 midpoint rule."""
    x1, x2 = grid.mesh
    m1 = x1 - 0.5 * dt * u1
    m2 = x2 - 0.5 * dt * u2
    ip = Interpolator(grid, m1, m2, kind)
    return x1 - dt * ip(u1), x2 - dt * ip(u2)


def expm2(G: np.ndarray, s: float) -> np.ndarray:
    """Exact exp(s G) for a field of 2x2 matrices G, shape (2, 2, ...)."""
    tr = G[0, 0] + G[1, 1]
    a = 0.5 * (G[0, 0] - G[1, 1])
    b, c = G[0, 1], G[1, 0]
    q = a * a + b * c
    sq = np.sqrt(q.astype(complex))
    small = np.abs(sq) * abs(s) < 1e-6
    safe = np.where(small, 1.0, sq)
    C = np.where(small, 1.0 + 0.5 * s * s * q, np.cosh(s * safe)).real
    Sh = np.where(small, s * (1.0 + s * s * q / 6.0), np.sinh(s * safe) / safe).real
    e = np.exp(0.5 * s * tr)
    return e * np.array([[C + Sh * a, Sh * b], [Sh * c, C - Sh * a]])


def _apply_matrix(E: np.ndarray, v1: np.ndarray, v2: np.ndarray):
    return E[0, 0] * v1 + E[0, 1] * v2, E[1, 0] * v1 + E[1, 1] * v2


def stretch_rate(t1: np.ndarray, t2: np.ndarray, G: np.ndarray) -> np.ndarray:
    """tau . (d_tau u) = tau^T G tau with G[i, j] = d_j u_i."""
    return (t1 * (G[0, 0] * t1 + G[0, 1] * t2) + t2 * (G[1, 0] * t1 + G[1, 1] * t2))


def unit_source(t1, t2, G, s):
    """Exact flow of d_t tau = G tau - tau (tau . G tau) over time s."""
    E = expm2(G, s)
    v1, v2 = _apply_matrix(E, t1, t2)
    norm = np.hypot(v1, v2)
    return v1 / norm, v2 / norm


def advection_term(f: np.ndarray, u1: np.ndarray, u2: np.ndarray, grid: Grid) -> np.ndarray:
    """Dealiased coefficients of -u . grad f."""
    c = fft(f)
    fx = ifft(deriv_hat(c, 0, grid))
    fy = ifft(deriv_hat(c, 1, grid))
    return -dealias(fft(u1 * fx + u2 * fy), grid)


def _heun(f: np.ndarray, rhs, dt: float) -> np.ndarray:
    k1 = rhs(f)
    k2 = rhs(f + dt * k1)
    return f + 0.5 * dt * (k1 + k2)


# ---------------------------------------------------------------------------
# public operations


def _vel(u: VectorField):
    return u.x.values, u.y.values


def advect_scalar(f: ScalarField, u: VectorField, dt: float,
                  scheme: AdvectionScheme | None = None,
                  monotone: bool | None = None) -> ScalarField:
    """One transport step of d_t f + u . grad f = 0 with u frozen.

    Args:
        f: Transported scalar.
        u: Divergence-free velocity.
        dt: Time step, subject to the Courant limit.
        scheme: Advection scheme (default semi-Lagrangian, cubic).
        monotone: Clip cubic values to the local cell range (default on for
            cubic interpolation).

    Raises:
        CFLError: if dt * max|u| / h exceeds 1.
    """
    scheme = scheme or AdvectionScheme()
    g = f.grid
    u1, u2 = _vel(u)
    check_cfl(u1, u2, dt, g)
    if scheme.semi_lagrangian:
        d1, d2 = departure_points(u1, u2, dt, g, scheme.interpolation)
        mono = (scheme.interpolation == "cubic") if monotone is None else monotone
        return ScalarField(g, Interpolator(g, d1, d2, scheme.interpolation)(f.values, mono))

    def rhs(v):
        return ifft(advection_term(v, u1, u2, g))

    return ScalarField(g, _heun(f.values, rhs, dt))


def step_tau(tau: VectorField, u: VectorField, dt: float,
             scheme: AdvectionScheme | None = None) -> VectorField:
    """One step of d_t tau + u . grad tau = tau . grad u (Strang split)."""
    scheme = scheme or AdvectionScheme()
    g = tau.grid
    u1, u2 = _vel(u)
    check_cfl(u1, u2, dt, g)
    G = velocity_gradient(u1, u2, g)
    if scheme.semi_lagrangian:
        E = expm2(G, 0.5 * dt)
        v1, v2 = _apply_matrix(E, tau.x.values, tau.y.values)
        d1, d2 = departure_points(u1, u2, dt, g, scheme.interpolation)
        ip = Interpolator(g, d1, d2, scheme.interpolation)
        v1, v2 = ip(v1), ip(v2)
        v1, v2 = _apply_matrix(E, v1, v2)
        return VectorField.from_arrays(g, v1, v2)

    def rhs(v):
        a1 = ifft(advection_term(v[0], u1, u2, g))
        a2 = ifft(advection_term(v[1], u1, u2, g))
        return np.array([a1 + G[0, 0] * v[0] + G[0, 1] * v[1],
                         a2 + G[1, 0] * v[0] + G[1, 1] * v[1]])

    v = _heun(np.array([tau.x.values, tau.y.values]), rhs, dt)
    return VectorField.from_arrays(g, v[0], v[1])


def _check_unit(t1, t2, tol: float = 1e-8) -> None:
    dev = float(np.max(np.abs(np.hypot(t1, t2) - 1.0)))
    if dev > tol:
        raise ValueError(f"unit tangent deviates from unit length by {dev:.3e}")


def unit_tau_sl(t1, t2, G, interp: Interpolator, dt: float):
    """Semi-Lagrangian unit-tangent step on arrays (half source, advect, half source)."""
    a1, a2 = unit_source(t1, t2, G, 0.5 * dt)
    b1, b2 = interp.vector(a1, a2, align=True)
    norm = np.hypot(b1, b2)
    low = float(norm.min())
    if low < 0.5:
        raise DegenerateFieldError(f"|tau| dropped to {low:.3f} before renormalization")
    return unit_source(b1 / norm, b2 / norm, G, 0.5 * dt)


def step_unit_tau(tau_bar: VectorField, u: VectorField, dt: float,
                  scheme: AdvectionScheme | None = None) -> VectorField:
    """One step of the unit-tangent equation followed by renormalization.

    Raises:
        ValueError: if the input is not unit length within 1e-8.
        DegenerateFieldError: if |tau| < 1/2 before renormalization.
    """
    scheme = scheme or AdvectionScheme()
    g = tau_bar.grid
    t1, t2 = tau_bar.x.values, tau_bar.y.values
    _check_unit(t1, t2)
    u1, u2 = _vel(u)
    check_cfl(u1, u2, dt, g)
    G = velocity_gradient(u1, u2, g)
    if scheme.semi_lagrangian:
        d1, d2 = departure_points(u1, u2, dt, g, scheme.interpolation)
        ip = Interpolator(g, d1, d2, scheme.interpolation)
        return VectorField.from_arrays(g, *unit_tau_sl(t1, t2, G, ip, dt))

    def rhs(v):
        s = stretch_rate(v[0], v[1], G)
        a1 = ifft(advection_term(v[0], u1, u2, g))
        a2 = ifft(advection_term(v[1], u1, u2, g))
        return np.array([a1 + G[0, 0] * v[0] + G[0, 1] * v[1] - s * v[0],
                         a2 + G[1, 0] * v[0] + G[1, 1] * v[1] - s * v[1]])

    v = _heun(np.array([t1, t2]), rhs, dt)
    norm = np.hypot(v[0], v[1])
    if float(norm.min()) < 0.5:
        raise DegenerateFieldError(f"|tau| dropped to {float(norm.min()):.3f} before renormalization")
    return VectorField.from_arrays(g, v[0] / norm, v[1] / norm)


def dtau_mu_sl(gv, t1, t2, t1_new, t2_new, G, interp: Interpolator, dt: float):
    """Semi-Lagrangian step of d_t g + u . grad g = -g (tau . d_tau u) on arrays."""
    h = np.exp(-0.5 * dt * stretch_rate(t1, t2, G)) * gv
    h = interp(h)
    return np.exp(-0.5 * dt * stretch_rate(t1_new, t2_new, G)) * h


def step_dtau_mu(gfield: ScalarField, tau_bar: VectorField, u: VectorField, dt: float,
                 scheme: AdvectionScheme | None = None,
                 tau_bar_new: VectorField | None = None) -> ScalarField:
    """One step of the tangential-derivative equation.

    Args:
        gfield: Current d_tau mu.
        tau_bar: Unit tangent at the start of the step.
        u: Velocity (frozen over the step).
        dt: Time step.
        scheme: Advection scheme.
        tau_bar_new: Unit tangent at the end of the step; when omitted it is
            obtained by transporting ``tau_bar``.
    """
    scheme = scheme or AdvectionScheme()
    g = gfield.grid
    u1, u2 = _vel(u)
    check_cfl(u1, u2, dt, g)
    G = velocity_gradient(u1, u2, g)
    t1, t2 = tau_bar.x.values, tau_bar.y.values
    if scheme.semi_lagrangian:
        d1, d2 = departure_points(u1, u2, dt, g, scheme.interpolation)
        ip = Interpolator(g, d1, d2, scheme.interpolation)
        if tau_bar_new is None:
            n1, n2 = unit_tau_sl(t1, t2, G, ip, dt)
        else:
            n1, n2 = tau_bar_new.x.values, tau_bar_new.y.values
        return ScalarField(g, dtau_mu_sl(gfield.values, t1, t2, n1, n2, G, ip, dt))

    rate = stretch_rate(t1, t2, G)

    def rhs(v):
        return ifft(advection_term(v, u1, u2, g)) - rate * v

    return ScalarField(g, _heun(gfield.values, rhs, dt))


def flow_map_heun(pos: np.ndarray, u1, u2, u1_next, u2_next, dt: float, grid: Grid) -> np.ndarray:
    """Heun update of node positions with velocities at both ends of the step."""
    ip = Interpolator(grid, pos[0], pos[1], "cubic")
    k1 = np.array([ip(u1), ip(u2)])
    mid = pos + dt * k1
    ip2 = Interpolator(grid, mid[0], mid[1], "cubic")
    k2 = np.array([ip2(u1_next), ip2(u2_next)])
    return pos + 0.5 * dt * (k1 + k2)


def update_flow_map(X: FlowMap, u: VectorField, dt: float,
                    u_next: VectorField | None = None) -> FlowMap:
    """RK2 (Heun) update of the flow map positions.

    Args:
        X: Current flow map.
        u: Velocity at the start of the step.
        dt: Time step.
        u_next: Velocity at the end of the step (default: u, frozen).
    """
    g = u.grid
    un = u if u_next is None else u_next
    pos = flow_map_heun(X.positions, u.x.values, u.y.values, un.x.values, un.y.values, dt, g)
    return FlowMap(pos, X.t + dt)


def jacobian_determinant(X: FlowMap, grid: Grid) -> np.ndarray:
    """det of the spectral gradient of X (via its periodic displacement)."""
    d = X.displacement(grid)
    a11, a12 = _grad_pair(d[0], grid)
    a21, a22 = _grad_pair(d[1], grid)
    return (1.0 + a11) * (1.0 + a22) - a12 * a21


def _grad_pair(f, grid):
    c = fft(f)
    return ifft(deriv_hat(c, 0, grid)), ifft(deriv_hat(c, 1, grid))
