"""Initial-data constructors: viscosity patches, concentric layers, the
collar tangent field around a disc, interface polylines and their
regularity.

Radial distances are measured to the nearest periodic image of the centre.
Jumps in viscosity are mollified with the C-infinity step
S(s) = f(s) / (f(s) + f(1 - s)), f(x) = exp(-1/x), over the band
[R - w, R + w] where w is ``mollify_width``.

The collar tangent field around a disc of radius R is

* e1 for r <= R/4 and r >= 7R/4,
* e_theta = (-sin theta, cos theta) for 3R/4 <= r <= 5R/4,
* (sin F, cos F), F = 3 pi (s - 3/4) - 2 theta (s - 1/4), s = r/R, inside,
* (-sin F, cos F), F = 3 pi (s - 5/4) - 2 theta (s - 7/4), outside,

with theta = atan2 in (-pi, pi].  A continuous unit field cannot join e1 to
e_theta (their winding numbers differ), so the connecting collars carry a
jump along the ray theta = pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .spectral_core import Grid, ScalarField, VectorField
from .transport import FlowMap, Interpolator

Profile = float | Callable[[np.ndarray], np.ndarray]


class SelfIntersectionError(RuntimeError):
    """Interface polyline is not simple within tolerance."""


# ---------------------------------------------------------------------------
# blend functions


def smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def quintic_step(s: np.ndarray) -> np.ndarray:
    """6s^5 - 15s^4 + 10s^3 clamped to [0, 1]."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def _dip(s: np.ndarray, a: float, b: float) -> np.ndarray:
    """1 outside [a, b], dipping smoothly to 1/2 at the midpoint."""
    x = (s - a) / (b - a)
    bump = np.where(x <= 0.5, quintic_step(2.0 * x), quintic_step(2.0 - 2.0 * x))
    bump = np.where((x <= 0.0) | (x >= 1.0), 0.0, bump)
    return 1.0 - 0.5 * bump


def collar_magnitude(s: np.ndarray) -> np.ndarray:
    """Blend magnitudes h, h~ as a function of s = r/R (values in [1/2, 1])."""
    return (_dip(s, 0.125, 0.25) * _dip(s, 0.75, 0.875)
            * _dip(s, 1.125, 1.25) * _dip(s, 1.75, 1.875))


# ---------------------------------------------------------------------------
# specs


def polar(grid: Grid, center: tuple[float, float]):
    """Minimum-image displacement, radius and angle relative to a centre."""
    x1, x2 = grid.mesh
    l = grid.l
    d1 = (x1 - center[0] + 0.5 * l) % l - 0.5 * l
    d2 = (x2 - center[1] + 0.5 * l) % l - 0.5 * l
    return d1, d2, np.hypot(d1, d2), np.arctan2(d2, d1)


def _eval_profile(p: Profile, r: np.ndarray) -> np.ndarray:
    if callable(p):
        return np.broadcast_to(np.asarray(p(r), dtype=float), r.shape)
    return np.full(r.shape, float(p))


@dataclass(frozen=True)
class PatchSpec:
    """Disc-shaped viscosity patch.

    Args:
        center: Patch centre.
        radius: Disc radius R > 0.
        mu_in: Viscosity inside (number or callable of r).
        mu_out: Viscosity outside (number or callable of r).
        mollify_width: Half-width w of the transition band; None means
            two grid cells.
    """

    center: tuple[float, float]
    radius: float
    mu_in: Profile = 2.0
    mu_out: Profile = 0.5
    mollify_width: float | None = None

    def width(self, grid: Grid) -> float:
        return 2.0 * grid.h if self.mollify_width is None else float(self.mollify_width)

    def validate(self, grid: Grid) -> None:
        if not self.radius > 0:
            raise ValueError("patch radius must be positive")
        if 3.0 * self.radius > 0.5 * grid.l * (1 + 1e-12):
            raise ValueError(
                f"patch radius {self.radius} too large: 3*radius must fit in the half period {grid.l / 2}"
            )
        w = self.width(grid)
        if w < 2.0 * grid.h * (1 - 1e-12):
            raise ValueError(f"mollify_width {w} is below two grid cells ({2 * grid.h})")
        if w > 0.25 * self.radius:
            raise ValueError("mollify_width must not exceed radius/4 (band must sit inside the e_theta annulus)")


@dataclass(frozen=True)
class LayerSpec:
    """Concentric viscosity layers.

    Args:
        radii: Strictly increasing disc radii r1 < ... < rN.
        values: N + 1 viscosity values, innermost disc first and the far
            field last.
        mollify_width: Half-width of each transition band (None: 2 cells).
        center: Common centre (None: centre of the torus).
    """

    radii: tuple[float, ...]
    values: tuple[float, ...]
    mollify_width: float | None = None
    center: tuple[float, float] | None = None

    def centre(self, grid: Grid) -> tuple[float, float]:
        return (0.5 * grid.l, 0.5 * grid.l) if self.center is None else self.center

    def width(self, grid: Grid) -> float:
        return 2.0 * grid.h if self.mollify_width is None else float(self.mollify_width)

    def validate(self, grid: Grid) -> None:
        r = list(self.radii)
        if not r or any(x <= 0 for x in r) or any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("layer radii must be positive and strictly increasing")
        if len(self.values) != len(r) + 1:
            raise ValueError(f"expected {len(r) + 1} layer values, got {len(self.values)}")
        if any(v <= 0 for v in self.values):
            raise ValueError("layer values must be positive")
        if 3.0 * r[-1] > 0.5 * grid.l * (1 + 1e-12):
            raise ValueError("outer layer too large: 3*r_N must fit in the half period")
        w = self.width(grid)
        if w < 2.0 * grid.h * (1 - 1e-12):
            raise ValueError("mollify_width is below two grid cells")
        gaps = [r[0]] + [b - a for a, b in zip(r, r[1:])]
        if 2.0 * w > min(gaps) or w > 0.25 * r[0]:
            raise ValueError("mollify_width too large for the layer spacing")


@dataclass(frozen=True, eq=False)
class InterfaceCurve:
    """Closed polyline (last point not repeated)."""

    points: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError("curve points must have shape (N, 2) with N >= 3")
        if not np.all(np.isfinite(pts)):
            raise ValueError("curve points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def segment_lengths(self) -> np.ndarray:
        d = np.roll(self.points, -1, axis=0) - self.points
        return np.hypot(d[:, 0], d[:, 1])

    def arclength(self) -> float:
        return float(self.segment_lengths().sum())

    def area(self) -> float:
        """Signed shoelace area."""
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def circle_curve(center, radius: float, count: int = 256, t: float = 0.0) -> InterfaceCurve:
    s = 2.0 * math.pi * np.arange(count) / count
    return InterfaceCurve(np.column_stack([center[0] + radius * np.cos(s),
                                           center[1] + radius * np.sin(s)]), t)


# ---------------------------------------------------------------------------
# viscosity constructors


def patch_profile(spec: PatchSpec, grid: Grid):
    """Radial viscosity profile r -> mu(r) of a patch."""
    w = spec.width(grid)

    def profile(r):
        inside = smooth_step((spec.radius + w - r) / (2.0 * w))
        out = _eval_profile(spec.mu_out, r)
        return out + (_eval_profile(spec.mu_in, r) - out) * inside

    return profile


def layers_profile(spec: LayerSpec, grid: Grid):
    """Radial viscosity profile r -> mu(r) of concentric layers."""
    w = spec.width(grid)
    v = spec.values

    def profile(r):
        mu = np.full(np.shape(r), float(v[-1]))
        for j, rj in enumerate(spec.radii):
            mu = mu + (v[j] - v[j + 1]) * smooth_step((rj + w - r) / (2.0 * w))
        return mu

    return profile


def make_patch_mu(grid: Grid, spec: PatchSpec) -> ScalarField:
    """Mollified patch mu_in inside the disc, mu_out outside."""
    spec.validate(grid)
    _, _, r, _ = polar(grid, spec.center)
    return ScalarField(grid, patch_profile(spec, grid)(r))


def make_layers_mu(grid: Grid, spec: LayerSpec) -> ScalarField:
    """Concentric mollified layers; values[0] inside r1, values[-1] outside rN."""
    spec.validate(grid)
    _, _, r, _ = polar(grid, spec.centre(grid))
    return ScalarField(grid, layers_profile(spec, grid)(r))


def radial_dtau_mu(grid: Grid, center, profile, tau: VectorField) -> ScalarField:
    """d_tau mu for a radial mu, as mu'(r) (tau . e_r).

    mu'(r) is a centred difference of the profile in r with step 1e-6, so
    the result does not suffer from the Gibbs oscillations that a spectral
    gradient of a sharply mollified step produces.  On the e_theta annulus
    tau . e_r vanishes to roundoff.
    """
    d1, d2, r, _ = polar(grid, center)
    dr = 1e-6
    slope = (profile(r + dr) - profile(np.maximum(r - dr, 0.0))) / (r + dr - np.maximum(r - dr, 0.0))
    safe = np.where(r > 0, r, 1.0)
    er1 = np.where(r > 0, d1 / safe, 0.0)
    er2 = np.where(r > 0, d2 / safe, 0.0)
    return ScalarField(grid, slope * (tau.x.values * er1 + tau.y.values * er2))


def make_checkerboard_mu(grid: Grid, mu_lo: float, mu_hi: float,
                         width: float | None = None) -> ScalarField:
    """Mollified 2x2 checkerboard: mu_hi where sin x1 sin x2 > 0 (period l)."""
    w = 2.0 * grid.h if width is None else float(width)
    l = grid.l

    def smooth_sign(x):
        x = x % l
        d = np.where(x < 0.5 * l, np.minimum(x, 0.5 * l - x), -np.minimum(x - 0.5 * l, l - x))
        return 2.0 * smooth_step(d / (2.0 * w) + 0.5) - 1.0

    x1, x2 = grid.mesh
    sigma = smooth_sign(x1) * smooth_sign(x2)
    return ScalarField(grid, mu_lo + (mu_hi - mu_lo) * 0.5 * (1.0 + sigma))


def checkerboard_corners(grid: Grid) -> list[tuple[float, float]]:
    h = 0.5 * grid.l
    return [(0.0, 0.0), (h, 0.0), (0.0, h), (h, h)]


# ---------------------------------------------------------------------------
# tangent fields


def _collar_field(r, theta, r_in: float, r_out: float):
    """Unit collar field joining e1 to e_theta on [3r_in/4, 5r_out/4]."""
    t1 = np.ones_like(r)
    t2 = np.zeros_like(r)
    s = r / r_in
    inner = (s > 0.25) & (s < 0.75)
    phi = 3.0 * math.pi * (s - 0.75) - 2.0 * theta * (s - 0.25)
    t1 = np.where(inner, np.sin(phi), t1)
    t2 = np.where(inner, np.cos(phi), t2)
    ring = (r >= 0.75 * r_in) & (r <= 1.25 * r_out)
    t1 = np.where(ring, -np.sin(theta), t1)
    t2 = np.where(ring, np.cos(theta), t2)
    so = r / r_out
    outer = (so > 1.25) & (so < 1.75)
    phi = 3.0 * math.pi * (so - 1.25) - 2.0 * theta * (so - 1.75)
    t1 = np.where(outer, -np.sin(phi), t1)
    t2 = np.where(outer, np.cos(phi), t2)
    return t1, t2


def _collar_magnitude2(r, r_in: float, r_out: float):
    s_in = r / r_in
    s_out = r / r_out
    inner = np.where(s_in < 1.0, collar_magnitude(s_in), 1.0)
    outer = np.where(s_out > 1.0, collar_magnitude(s_out), 1.0)
    return inner * outer


def make_disc_tau(grid: Grid, spec: PatchSpec, unit: bool = True) -> VectorField:
    """Collar tangent field around the patch disc.

    Args:
        grid: Grid.
        spec: Patch geometry (centre, radius).
        unit: Return the unit field; otherwise scale it by the blend
            magnitudes h, h~ (values in [1/2, 1]).
    """
    spec.validate(grid)
    _, _, r, theta = polar(grid, spec.center)
    t1, t2 = _collar_field(r, theta, spec.radius, spec.radius)
    if not unit:
        m = _collar_magnitude2(r, spec.radius, spec.radius)
        t1, t2 = m * t1, m * t2
    return VectorField.from_arrays(grid, t1, t2)


def make_layer_tau(grid: Grid, spec: LayerSpec, unit: bool = True) -> VectorField:
    """Tangent field equal to e_theta on [r1, rN], e1 near the centre and far away.

    The inner collar is the disc construction scaled by r1 and the outer
    collar the one scaled by rN, so a single layer reproduces
    :func:`make_disc_tau`.
    """
    spec.validate(grid)
    _, _, r, theta = polar(grid, spec.centre(grid))
    r_in, r_out = spec.radii[0], spec.radii[-1]
    t1, t2 = _collar_field(r, theta, r_in, r_out)
    if not unit:
        m = _collar_magnitude2(r, r_in, r_out)
        t1, t2 = m * t1, m * t2
    return VectorField.from_arrays(grid, t1, t2)


def _collar_gradient(d1, d2, r, theta, r_in: float, r_out: float) -> np.ndarray:
    """Exact d_j tau_i of the unit collar field, off its phase-jump ray."""
    rs = np.where(r > 0, r, 1.0)
    gr = (d1 / rs, d2 / rs)
    gt = (-d2 / rs**2, d1 / rs**2)
    out = np.zeros((2, 2) + r.shape)
    s = r / r_in
    so = r / r_out
    inner = (s > 0.25) & (s < 0.75)
    ring = (r >= 0.75 * r_in) & (r <= 1.25 * r_out)
    outer = (so > 1.25) & (so < 1.75)
    # phase phi with tau = (sin phi, cos phi) inside, (-sin phi, cos phi) outside
    phi_in = 3.0 * math.pi * (s - 0.75) - 2.0 * theta * (s - 0.25)
    dr_in = (3.0 * math.pi - 2.0 * theta) / r_in
    dt_in = -2.0 * (s - 0.25)
    phi_out = 3.0 * math.pi * (so - 1.25) - 2.0 * theta * (so - 1.75)
    dr_out = (3.0 * math.pi - 2.0 * theta) / r_out
    dt_out = -2.0 * (so - 1.75)
    for j in (0, 1):
        dphi_in = dr_in * gr[j] + dt_in * gt[j]
        dphi_out = dr_out * gr[j] + dt_out * gt[j]
        d1j = np.where(inner, np.cos(phi_in) * dphi_in,
                       np.where(ring, -np.cos(theta) * gt[j],
                                np.where(outer, -np.cos(phi_out) * dphi_out, 0.0)))
        d2j = np.where(inner, -np.sin(phi_in) * dphi_in,
                       np.where(ring, -np.sin(theta) * gt[j],
                                np.where(outer, -np.sin(phi_out) * dphi_out, 0.0)))
        out[0, j] = d1j
        out[1, j] = d2j
    return out


def disc_tau_gradient(grid: Grid, spec: PatchSpec) -> np.ndarray:
    """Exact absolutely continuous part of grad make_disc_tau, shape (2, 2, n, n)."""
    d1, d2, r, theta = polar(grid, spec.center)
    return _collar_gradient(d1, d2, r, theta, spec.radius, spec.radius)


def layer_tau_gradient(grid: Grid, spec: LayerSpec) -> np.ndarray:
    """Exact absolutely continuous part of grad make_layer_tau."""
    d1, d2, r, theta = polar(grid, spec.centre(grid))
    return _collar_gradient(d1, d2, r, theta, spec.radii[0], spec.radii[-1])


def tangent_gradient(tau: VectorField, jump_angle: float = 0.5 * math.pi) -> np.ndarray:
    """Absolutely continuous part of grad tau by centred differences.

    Differences between neighbours whose directions differ by more than
    ``jump_angle`` are treated as jumps and dropped (the one-sided
    difference on the other side is used instead, or zero if both sides
    jump).

    Returns:
        Array D with D[i, j] = d_j tau_i, shape (2, 2, n, n).
    """
    g = tau.grid
    t1, t2 = tau.x.values, tau.y.values
    out = np.zeros((2, 2) + t1.shape)
    for axis in (0, 1):
        f1p, f2p = np.roll(t1, -1, axis), np.roll(t2, -1, axis)
        f1m, f2m = np.roll(t1, 1, axis), np.roll(t2, 1, axis)
        ang_p = np.abs(np.arctan2(t1 * f2p - t2 * f1p, t1 * f1p + t2 * f2p))
        ang_m = np.abs(np.arctan2(t1 * f2m - t2 * f1m, t1 * f1m + t2 * f2m))
        ok_p, ok_m = ang_p <= jump_angle, ang_m <= jump_angle
        for comp, (fp, f0, fm) in enumerate(((f1p, t1, f1m), (f2p, t2, f2m))):
            central = (fp - fm) / (2.0 * g.h)
            fwd = (fp - f0) / g.h
            bwd = (f0 - fm) / g.h
            d = np.where(ok_p & ok_m, central, np.where(ok_p, fwd, np.where(ok_m, bwd, 0.0)))
            out[comp, axis] = d
    return out


# ---------------------------------------------------------------------------
# interface curves


def resample_closed(points: np.ndarray, count: int | None = None) -> np.ndarray:
    """Resample a closed polyline to uniform arclength with a periodic spline."""
    pts = np.asarray(points, dtype=float)
    count = pts.shape[0] if count is None else count
    closed = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    if np.any(seg == 0):
        keep = np.concatenate([seg > 0])
        pts = pts[keep]
        closed = np.vstack([pts, pts[:1]])
        seg = np.hypot(*np.diff(closed, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    spline = CubicSpline(s, closed, bc_type="periodic")
    # one refinement pass: measure spline arclength on a fine parameter grid
    fine = np.linspace(0.0, s[-1], 8 * count + 1)
    fp = spline(fine)
    fs = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(fp, axis=0).T))])
    target = np.linspace(0.0, fs[-1], count, endpoint=False)
    return spline(np.interp(target, fs, fine))


def check_simple(points: np.ndarray, tol: float) -> None:
    """Raise SelfIntersectionError if the closed polyline crosses itself or
    comes within ``tol`` of itself between points far apart along the curve."""
    p = np.asarray(points)
    m = p.shape[0]
    q = np.roll(p, -1, axis=0)
    # proper crossings between non-adjacent segments
    d = q - p
    for i in range(m):
        j = np.arange(i + 2, m)
        if i == 0:
            j = j[j != m - 1]
        if j.size == 0:
            continue
        a, b = p[i], d[i]
        c, e = p[j], d[j]
        den = b[0] * e[:, 1] - b[1] * e[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = ((c[:, 0] - a[0]) * e[:, 1] - (c[:, 1] - a[1]) * e[:, 0]) / den
            t = ((c[:, 0] - a[0]) * b[1] - (c[:, 1] - a[1]) * b[0]) / den
        hit = (den != 0) & (s >= 0) & (s <= 1) & (t >= 0) & (t <= 1)
        if np.any(hit):
            raise SelfIntersectionError(f"segments {i} and {int(j[hit][0])} intersect")
    # near contacts between points far apart in arclength
    seg = np.hypot(d[:, 0], d[:, 1])
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    total = seg.sum()
    ds = np.abs(s[:, None] - s[None, :])
    ds = np.minimum(ds, total - ds)
    dist = np.hypot(p[:, None, 0] - p[None, :, 0], p[:, None, 1] - p[None, :, 1])
    far = ds > max(4.0 * tol, 3.0 * float(seg.max()))
    if np.any(far & (dist < tol)):
        raise SelfIntersectionError("curve comes within tolerance of itself")


def interface_points(flow: FlowMap, initial: InterfaceCurve, grid: Grid,
                     resample: bool = True) -> InterfaceCurve:
    """Push the initial polyline forward with the (interpolated) flow map.

    Raises:
        SelfIntersectionError: if the image is not simple within h/2.
    """
    disp = flow.displacement(grid)
    ip = Interpolator(grid, initial.points[:, 0], initial.points[:, 1], "cubic")
    pts = initial.points + np.column_stack([ip(disp[0]), ip(disp[1])])
    if resample:
        pts = resample_closed(pts, len(initial))
    check_simple(pts, 0.5 * grid.h)
    return InterfaceCurve(pts, flow.t)


def circumcircle_curvature(points: np.ndarray) -> np.ndarray:
    """Unsigned curvature 1/R of the circle through each vertex and its neighbours."""
    p0 = np.roll(points, 1, axis=0)
    p2 = np.roll(points, -1, axis=0)
    a = np.hypot(*(points - p0).T)
    b = np.hypot(*(p2 - points).T)
    c = np.hypot(*(p2 - p0).T)
    cross = ((points[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
             - (points[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = 2.0 * np.abs(cross) / (a * b * c)
    # repeated vertices carry no curvature information
    return np.where(np.isfinite(kappa), kappa, 0.0)


def boundary_regularity(curve: InterfaceCurve, eps: float, resample: bool = True):
    """Arclength and curvature norms of a closed curve.

    Args:
        curve: Simple closed curve with at least 16 points.
        eps: The exponent is p = 2 + eps.
        resample: Resample to uniform arclength first.

    Returns:
        (arclength, curvature L^{2+eps} norm, max curvature).

    Raises:
        ValueError: for fewer than 16 points or an everywhere-collinear curve.
    """
    if len(curve) < 16:
        raise ValueError("boundary_regularity needs at least 16 points")
    pts = resample_closed(curve.points) if resample else np.asarray(curve.points)
    kappa = circumcircle_curvature(pts)
    if not np.any(kappa > 0):
        raise ValueError("degenerate curve: every vertex triple is collinear")
    seg = np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)
    ds = 0.5 * (seg + np.roll(seg, 1))
    p = 2.0 + eps
    length = float(seg.sum())
    norm = float(np.sum(kappa**p * ds)) ** (1.0 / p)
    return length, norm, float(kappa.max())
