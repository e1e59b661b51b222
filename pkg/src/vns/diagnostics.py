"""Measurable counterparts of the analytic estimates.

Conventions: Su = grad u + grad u^T, n = tau_perp = (-tau_2, tau_1),
omega_1 = mu P1 omega, omega_2 = mu P2 omega, so that

    a = P1 omega_1 + P2 omega_2,
    alpha = c omega_1 + s omega_2,  c = tau_2^2 - tau_1^2,  s = 2 tau_1 tau_2,

and the pointwise dissipation is mu |Su|^2 / 2 = mu ((P1 omega)^2 + (P2 omega)^2).
All (2 + eps)-norms record the eps they were computed with.  The constant in
V(t) = exp(C int ||grad u||_inf dt) is fixed to C = 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Sequence

import numpy as np

from .elliptic_ops import ViscosityBounds, rmu_qmu_hat
from .geometry import InterfaceCurve, tangent_gradient
from .spectral_core import (
    Grid,
    ScalarField,
    VectorField,
    deriv_hat,
    fft,
    grad,
    ifft,
    lp_norm,
    product_hat,
    random_field,
    sobolev_norm,
    velocity_gradient,
    velocity_hat,
)
from .transport import Interpolator

_TINY = np.finfo(float).tiny


def _rel(num: np.ndarray, den: np.ndarray) -> float:
    """Relative L2 size of num against den (0 when both vanish)."""
    nn = math.sqrt(float(np.sum(num**2)))
    dd = math.sqrt(float(np.sum(den**2)))
    if nn == 0.0:
        return 0.0
    return nn / max(dd, _TINY)


# ---------------------------------------------------------------------------
# good unknowns


def good_unknowns(mu: ScalarField, omega: ScalarField,
                  bounds: ViscosityBounds | None = None):
    """(a, b) = (R_mu omega, Q_mu omega)."""
    if bounds is not None:
        bounds.check(mu)
    g = omega.grid
    a_hat, b_hat = rmu_qmu_hat(mu.values, fft(omega.values), g)
    return ScalarField(g, ifft(a_hat)), ScalarField(g, ifft(b_hat))


def _frame(tau_bar: VectorField):
    t1, t2 = tau_bar.x.values, tau_bar.y.values
    return t1, t2, -t2, t1


def good_unknown_alpha(mu: ScalarField, u: VectorField, tau_bar: VectorField) -> ScalarField:
    """alpha = tau . (mu Su n), n = tau_perp, evaluated pointwise from Su."""
    g = u.grid
    G = velocity_gradient(u.x.values, u.y.values, g)
    s11, s12, s22 = 2.0 * G[0, 0], G[0, 1] + G[1, 0], 2.0 * G[1, 1]
    t1, t2, n1, n2 = _frame(tau_bar)
    val = t1 * (s11 * n1 + s12 * n2) + t2 * (s12 * n1 + s22 * n2)
    return ScalarField(g, mu.values * val)


def alpha_reform_check(mu: ScalarField, u: VectorField, tau_bar: VectorField,
                       alpha: ScalarField) -> float:
    """Relative L2 residual of d_n u = (alpha/mu) tau - 2 (n . d_tau u) tau - (d_tau u)_perp."""
    g = u.grid
    G = velocity_gradient(u.x.values, u.y.values, g)
    t1, t2, n1, n2 = _frame(tau_bar)
    dtu1 = G[0, 0] * t1 + G[0, 1] * t2
    dtu2 = G[1, 0] * t1 + G[1, 1] * t2
    dnu1 = G[0, 0] * n1 + G[0, 1] * n2
    dnu2 = G[1, 0] * n1 + G[1, 1] * n2
    q = alpha.values / mu.values
    ndt = n1 * dtu1 + n2 * dtu2
    r1 = q * t1 - 2.0 * ndt * t1 + dtu2
    r2 = q * t2 - 2.0 * ndt * t2 - dtu1
    return _rel(np.array([dnu1 - r1, dnu2 - r2]), np.array([dnu1, dnu2]))


def alpha_a_relation(a: ScalarField, alpha: ScalarField, mu: ScalarField,
                     omega: ScalarField, tau_bar: VectorField):
    """Both sides of the gradient relation for a + alpha.

    The right-hand side is R R . V + R R_perp . W with

        V = tau d_tau alpha + (c tau + 2 s n) d_tau omega_1
            + (s tau - 2 c n) d_tau omega_2 + (omega_1 d_n c + omega_2 d_n s) n,
        W = -omega_1 grad s + omega_2 grad c,

    where R R . V has symbol xi (xi . V)/|xi|^2 and R R_perp . W has symbol
    xi (xi_perp . W)/|xi|^2, xi_perp = (-xi_2, xi_1).

    Returns:
        (lhs, rhs) as arrays of shape (2, n, n).
    """
    g = a.grid
    t1, t2, n1, n2 = _frame(tau_bar)
    w_hat = fft(omega.values)
    w1 = mu.values * ifft(g.p1_symbol * w_hat)
    w2 = mu.values * ifft(g.p2_symbol * w_hat)
    c = t2 * t2 - t1 * t1
    s = 2.0 * t1 * t2

    def dirs(f):
        fx, fy = grad(f, g)
        return fx * t1 + fy * t2, fx * n1 + fy * n2, fx, fy

    dt_alpha = dirs(alpha.values)[0]
    dt_w1 = dirs(w1)[0]
    dt_w2 = dirs(w2)[0]
    _, dn_c, cx, cy = dirs(c)
    _, dn_s, sx, sy = dirs(s)
    normal = w1 * dn_c + w2 * dn_s
    v1 = t1 * dt_alpha + (c * t1 + 2 * s * n1) * dt_w1 + (s * t1 - 2 * c * n1) * dt_w2 + normal * n1
    v2 = t2 * dt_alpha + (c * t2 + 2 * s * n2) * dt_w1 + (s * t2 - 2 * c * n2) * dt_w2 + normal * n2
    q1 = -w1 * sx + w2 * cx
    q2 = -w1 * sy + w2 * cy
    V1, V2, Q1, Q2 = fft(v1), fft(v2), fft(q1), fft(q2)
    k1, k2 = g.k1_odd, g.k2_odd
    proj = (k1 * V1 + k2 * V2 + (-k2) * Q1 + k1 * Q2) / g.ksq_safe
    proj[0, 0] = 0.0
    rhs = np.array([ifft(k1 * proj), ifft(k2 * proj)])
    lhs = np.array(grad(a.values + alpha.values, g))
    return lhs, rhs


def alpha_a_relation_residual(a: ScalarField, alpha: ScalarField, mu: ScalarField,
                              omega: ScalarField, tau_bar: VectorField) -> float:
    """Relative L2 residual of the gradient relation for a + alpha."""
    lhs, rhs = alpha_a_relation(a, alpha, mu, omega, tau_bar)
    return _rel(lhs - rhs, lhs)


@dataclass(frozen=True)
class InterfaceAlphaReport:
    """|a + alpha| sampled along an interface.

    Attributes:
        max_abs: max |a + alpha| over the curve nodes.
        l2: Arclength L2 norm of a + alpha.
        max_a: max |a| over the curve nodes.
        ratio: max_abs / max_a (0 when both vanish).
    """

    max_abs: float
    l2: float
    max_a: float
    ratio: float


def interface_alpha_check(a: ScalarField, alpha: ScalarField,
                          curve: InterfaceCurve) -> InterfaceAlphaReport:
    """Interpolate a and alpha (cubic) onto the curve nodes and compare."""
    g = a.grid
    ip = Interpolator(g, curve.points[:, 0], curve.points[:, 1], "cubic")
    av = ip(a.values)
    sv = av + ip(alpha.values)
    seg = curve.segment_lengths()
    ds = 0.5 * (seg + np.roll(seg, 1))
    max_abs = float(np.max(np.abs(sv)))
    max_a = float(np.max(np.abs(av)))
    l2 = math.sqrt(float(np.sum(sv**2 * ds)))
    ratio = 0.0 if max_abs == 0.0 else max_abs / max(max_a, _TINY)
    return InterfaceAlphaReport(max_abs, l2, max_a, ratio)


# ---------------------------------------------------------------------------
# sigma quantities and the Lipschitz bound


def dtau_mu(mu: ScalarField, tau_bar: VectorField) -> ScalarField:
    """Directional derivative tau . grad mu (spectral gradient)."""
    mx, my = grad(mu.values, mu.grid)
    return ScalarField(mu.grid, tau_bar.x.values * mx + tau_bar.y.values * my)


def material_norm(g: ScalarField, tau_bar: VectorField, eps: float,
                  grad_tau: np.ndarray | None = None) -> float:
    """||(d_tau mu, grad tau)||_{2+eps} with the pointwise Euclidean norm.

    ``grad_tau`` (shape (2, 2, n, n)) replaces the masked finite-difference
    gradient when an exact one is known.
    """
    D = tangent_gradient(tau_bar) if grad_tau is None else grad_tau
    stack = np.concatenate([g.values[None], D.reshape(4, *g.values.shape)])
    return lp_norm(stack, 2.0 + eps, g.grid)


@dataclass(frozen=True)
class SigmaQuantities:
    sigma_minus1: float
    sigma_0: float
    sigma_1: float
    epsilon_used: float
    smallness_lhs: float


def sigma_quantities(mu0: ScalarField, u0: VectorField, tau_bar0: VectorField,
                     eps: float, dtau_mu0: ScalarField | None = None,
                     grad_tau0: np.ndarray | None = None) -> SigmaQuantities:
    """sigma_{-1}, sigma_0, sigma_1 and sigma_0^{eps/2} sigma_{-1} sigma_1.

    Homogeneous norms exclude the zero mode (torus H^{-1}).

    Args:
        mu0: Initial viscosity.
        u0: Initial velocity (mean-zero, divergence-free).
        tau_bar0: Initial unit tangent.
        eps: Exponent offset, > 0.
        dtau_mu0: Tangential derivative of mu0; computed spectrally if omitted.
        grad_tau0: Exact gradient of tau_bar0; masked differences if omitted.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = u0.grid
    l2u = math.hypot(lp_norm(u0.x, 2), lp_norm(u0.y, 2))
    hm1 = math.hypot(sobolev_norm(u0.x, -1), sobolev_norm(u0.y, -1))
    h1 = math.hypot(sobolev_norm(u0.x, 1), sobolev_norm(u0.y, 1))
    mu_dev = lp_norm(ScalarField(g, mu0.values - 1.0), 2)
    gtm = dtau_mu(mu0, tau_bar0) if dtau_mu0 is None else dtau_mu0
    mat = material_norm(gtm, tau_bar0, eps, grad_tau0)
    s_m1 = hm1 + mu_dev * l2u
    s_0 = l2u
    s_1 = h1 + mat ** ((2.0 + eps) / eps)
    return SigmaQuantities(s_m1, s_0, s_1, eps, s_0 ** (eps / 2.0) * s_m1 * s_1)


def lipschitz_bound_check(a: ScalarField, tau_bar: VectorField, mu: ScalarField,
                          dtau: ScalarField, u: VectorField, eps: float):
    """(||grad u||_inf, rhs) with

    rhs = ||a||_p^{eps/p} (||grad a||_p + ||(grad tau, d_tau mu)||_p ||(grad u, a)||_inf)^{2/p},
    p = 2 + eps.  Only the ratio lhs/rhs is meaningful (constants omitted).
    """
    g = a.grid
    p = 2.0 + eps
    G = velocity_gradient(u.x.values, u.y.values, g)
    lhs = lp_norm(G.reshape(4, g.n, g.n), math.inf, g)
    ax, ay = grad(a.values, g)
    a_p = lp_norm(a, p)
    ga_p = lp_norm(np.array([ax, ay]), p, g)
    mat = material_norm(dtau, tau_bar, eps)
    sup = lp_norm(np.concatenate([G.reshape(4, g.n, g.n), a.values[None]]), math.inf, g)
    rhs = a_p ** (eps / p) * (ga_p + mat * sup) ** (2.0 / p)
    return lhs, rhs


# ---------------------------------------------------------------------------
# per-sample record


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One diagnostic sample.  Field order is the CSV column order."""

    t: float
    energy: float
    grad_u_l2: float
    omega_l2: float
    omega_lp: float
    a_l2: float
    grad_a_l2: float
    a_lp: float
    grad_a_lp: float
    b_l2: float
    grad_u_inf: float
    int_grad_u_inf: float
    V: float
    grad_tau_lp: float
    dtau_mu_lp: float
    dissipation: float
    buoyancy_work: float
    energy_residual: float
    bracket_ratio: float
    bracket_ok: bool
    lipschitz_lhs: float
    lipschitz_rhs: float
    mu_min: float
    mu_max: float
    theta_l2: float
    interface_max_apa: float
    interface_ratio: float
    interface_curvature_lp: float
    interface_area: float
    epsilon: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def values(self) -> list:
        return list(asdict(self).values())


def compute_record(t: float, omega: ScalarField, mu: ScalarField, tau_bar: VectorField,
                   g_field: ScalarField, eps: float, bounds: ViscosityBounds,
                   int_grad_u_inf: float = 0.0, theta: ScalarField | None = None,
                   interface: InterfaceCurve | None = None,
                   curvature_eps: float | None = None,
                   buoyancy: bool = False) -> DiagnosticsRecord:
    """Evaluate every per-sample diagnostic from one state.

    Args:
        t: Sample time.
        omega, mu, tau_bar, g_field: State fields (g_field = d_tau mu).
        eps: Exponent offset for the (2 + eps)-norms.
        bounds: Declared viscosity bounds for the bracket check.
        int_grad_u_inf: Accumulated time integral of ||grad u||_inf.
        theta: Temperature, if present.
        interface: Current interface curve, if tracked.
        curvature_eps: eps for the curvature norm (default ``eps``).
        buoyancy: Record the buoyancy power <theta, u_2> (Boussinesq runs).
    """
    from .geometry import boundary_regularity

    grid = omega.grid
    p = 2.0 + eps
    w_hat = fft(omega.values)
    u1h, u2h = velocity_hat(w_hat, grid)
    u1, u2 = ifft(u1h), ifft(u2h)
    u = VectorField.from_arrays(grid, u1, u2)
    G = velocity_gradient(u1, u2, grid)
    a_hat, b_hat = rmu_qmu_hat(mu.values, w_hat, grid)
    a = ScalarField(grid, ifft(a_hat))
    av = a.values
    ax, ay = ifft(deriv_hat(a_hat, 0, grid)), ifft(deriv_hat(a_hat, 1, grid))
    w1 = ifft(grid.p1_symbol * w_hat)
    w2 = ifft(grid.p2_symbol * w_hat)
    ca = grid.cell_area
    energy = float(np.sum(u1**2 + u2**2)) * ca
    om2 = float(np.sum(omega.values**2)) * ca
    dissipation = float(np.sum(mu.values * (w1**2 + w2**2))) * ca
    ratio = float(np.sum(av * omega.values)) * ca / om2 if om2 > 0 else float("nan")
    a_l2 = lp_norm(a, 2)
    om_l2 = math.sqrt(om2)
    tol = 1e-12 * max(1.0, bounds.mu_hi)
    bracket_ok = om2 == 0 or (
        bounds.mu_lo - tol <= ratio <= bounds.mu_hi + tol
        and bounds.mu_lo * om_l2 * (1 - 1e-12) <= a_l2 <= 8 * bounds.mu_hi * om_l2 * (1 + 1e-12)
    )
    grad_u_inf = lp_norm(G.reshape(4, grid.n, grid.n), math.inf, grid)
    lip_l, lip_r = lipschitz_bound_check(a, tau_bar, mu, g_field, u, eps)
    max_apa = ratio_apa = curv = area = float("nan")
    if interface is not None:
        alpha = good_unknown_alpha(mu, u, tau_bar)
        rep = interface_alpha_check(a, alpha, interface)
        max_apa, ratio_apa = rep.max_abs, rep.ratio
        ce = eps if curvature_eps is None else curvature_eps
        curv = boundary_regularity(interface, ce)[1]
        area = abs(interface.area())
    D = tangent_gradient(tau_bar)
    return DiagnosticsRecord(
        t=float(t),
        energy=energy,
        grad_u_l2=math.sqrt(float(np.sum(G**2)) * ca),
        omega_l2=om_l2,
        omega_lp=lp_norm(omega, p),
        a_l2=a_l2,
        grad_a_l2=math.sqrt(float(np.sum(ax**2 + ay**2)) * ca),
        a_lp=lp_norm(a, p),
        grad_a_lp=lp_norm(np.array([ax, ay]), p, grid),
        b_l2=math.sqrt(float(np.sum(ifft(b_hat) ** 2)) * ca),
        grad_u_inf=grad_u_inf,
        int_grad_u_inf=float(int_grad_u_inf),
        V=math.exp(int_grad_u_inf),
        grad_tau_lp=lp_norm(D.reshape(4, grid.n, grid.n), p, grid),
        dtau_mu_lp=lp_norm(g_field, p),
        dissipation=dissipation,
        buoyancy_work=float(np.sum(theta.values * u2)) * ca if (buoyancy and theta is not None) else 0.0,
        energy_residual=0.0,
        bracket_ratio=ratio,
        bracket_ok=bool(bracket_ok),
        lipschitz_lhs=lip_l,
        lipschitz_rhs=lip_r,
        mu_min=float(mu.values.min()),
        mu_max=float(mu.values.max()),
        theta_l2=lp_norm(theta, 2) if theta is not None else float("nan"),
        interface_max_apa=max_apa,
        interface_ratio=ratio_apa,
        interface_curvature_lp=curv,
        interface_area=area,
        epsilon=float(eps),
    )


# ---------------------------------------------------------------------------
# trajectory-level diagnostics


def _records(traj) -> list[DiagnosticsRecord]:
    return list(getattr(traj, "diagnostics", traj))


def _interval_integral(ts: np.ndarray, fs: np.ndarray, i: int) -> float:
    """Integral of the local (up to cubic) interpolant over [ts[i], ts[i+1]]."""
    m = len(ts)
    lo = min(max(i - 1, 0), max(m - 4, 0))
    idx = np.arange(lo, min(lo + 4, m))
    x, y = ts[idx], fs[idx]
    a, b = ts[i], ts[i + 1]
    # exact integration of the Lagrange interpolant with Gauss-Legendre nodes
    gx, gw = np.polynomial.legendre.leggauss(3)
    xs = 0.5 * (b - a) * gx + 0.5 * (a + b)
    vals = np.zeros_like(xs)
    for j in range(len(x)):
        lj = np.ones_like(xs)
        for k in range(len(x)):
            if k != j:
                lj *= (xs - x[k]) / (x[j] - x[k])
        vals += y[j] * lj
    return 0.5 * (b - a) * float(np.sum(gw * vals))


def energy_balance_residual(traj) -> list[float]:
    """Per-sample residual of the energy law, normalized by the initial energy.

    Entry i (i >= 1) is

        |(E_i - E_{i-1}) / dt + (1/dt) int D dt| / E_0,   E = ||u||^2 / 2,

    with D = mu |Su|^2 / 2 - <theta, u_2> integrated by the cubic interpolant through the
    nearest four samples (fewer if unavailable).  Entry 0 is 0.

    Raises:
        ValueError: for fewer than two samples.
    """
    recs = _records(traj)
    if len(recs) < 2:
        raise ValueError("energy_balance_residual needs at least two samples")
    ts = np.array([r.t for r in recs])
    e = 0.5 * np.array([r.energy for r in recs])
    d = np.array([r.dissipation - r.buoyancy_work for r in recs])
    e0 = e[0]
    out = [0.0]
    for i in range(len(recs) - 1):
        dt = ts[i + 1] - ts[i]
        res = (e[i + 1] - e[i]) / dt + _interval_integral(ts, d, i) / dt
        out.append(0.0 if e0 == 0 else abs(res) / e0)
    return out


def with_energy_residuals(records: Sequence[DiagnosticsRecord]) -> list[DiagnosticsRecord]:
    """Return the records with the energy_residual column filled in."""
    recs = list(records)
    if len(recs) < 2:
        return recs
    res = energy_balance_residual(recs)
    return [replace(r, energy_residual=float(x)) for r, x in zip(recs, res)]


def _weighted_l2(ts: np.ndarray, sq: np.ndarray, q: float) -> float:
    """sqrt(int t^{2q} f(t)^2 dt) with f^2 piecewise linear in t, integrated exactly."""
    total = 0.0
    e = 2.0 * q
    for a, b, fa, fb in zip(ts[:-1], ts[1:], sq[:-1], sq[1:]):
        h = b - a
        if h <= 0:
            continue
        # f^2 = fa + (fb - fa)(t - a)/h ; int t^e f^2 = (fa - s a) I0 + s I1
        s = (fb - fa) / h
        i0 = (b ** (e + 1) - a ** (e + 1)) / (e + 1)
        i1 = (b ** (e + 2) - a ** (e + 2)) / (e + 2)
        total += (fa - s * a) * i0 + s * i1
    return math.sqrt(max(total, 0.0))


@dataclass(frozen=True)
class TimeWeightedNorms:
    """Weighted sup and L2-in-time norms.  Names read weight_quantity."""

    delta: float
    sup_tdelta_u: float
    sup_thalf_a: float
    sup_thalf_grad_a: float
    sup_thalfdelta_a: float
    l2_tdelta_u: float
    l2_thalf_a: float
    l2_thalf_grad_a: float
    l2_thalfdelta_a: float


def time_weighted_norms(traj, delta: float, eps: float | None = None) -> TimeWeightedNorms:
    """Weighted norms ||t^q f||_{L^inf_t L^2} and ||t^q f||_{L^2_t L^2}.

    Sups are taken over the samples; the L2-in-time integrals treat ||f||^2
    as piecewise linear and integrate the weight exactly.  A single sample
    yields the pointwise weighted values and zero integrals.

    Args:
        traj: Trajectory or list of DiagnosticsRecord.
        delta: Weight exponent, in (1/(2+eps), 1/2).
        eps: Defaults to the epsilon recorded in the first sample.
    """
    recs = _records(traj)
    if not recs:
        raise ValueError("time_weighted_norms needs at least one sample")
    e = recs[0].epsilon if eps is None else eps
    if not (1.0 / (2.0 + e) < delta < 0.5):
        raise ValueError(f"delta must lie in (1/(2+eps), 1/2) = ({1 / (2 + e):.4f}, 0.5)")
    ts = np.array([r.t for r in recs])
    u = np.sqrt(np.array([r.energy for r in recs]))
    a = np.array([r.a_l2 for r in recs])
    ga = np.array([r.grad_a_l2 for r in recs])

    def sup(q, f):
        return float(np.max(ts**q * f))

    def l2(q, f):
        return _weighted_l2(ts, f**2, q) if len(ts) > 1 else 0.0

    return TimeWeightedNorms(
        delta=delta,
        sup_tdelta_u=sup(delta, u),
        sup_thalf_a=sup(0.5, a),
        sup_thalf_grad_a=sup(0.5, ga),
        sup_thalfdelta_a=sup(0.5 + delta, a),
        l2_tdelta_u=l2(delta, u),
        l2_thalf_a=l2(0.5, a),
        l2_thalf_grad_a=l2(0.5, ga),
        l2_thalfdelta_a=l2(0.5 + delta, a),
    )


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fits of log ||u||_2^2.

    Attributes:
        exp_rate: r in ||u||^2 ~ exp(-r t).
        exp_r2: Coefficient of determination of the exponential fit.
        alg_rate: q in ||u||^2 ~ <t>^-q with <t> = e + t.
        alg_r2: Coefficient of determination of the algebraic fit.
        monotone: ||u||_2 nonincreasing across samples.
        skipped: True when the fit was not attempted.
        reason: Why the fit was skipped.
    """

    exp_rate: float
    exp_r2: float
    alg_rate: float
    alg_r2: float
    monotone: bool
    skipped: bool = False
    reason: str = ""


def decay_fit(traj, min_samples: int = 10) -> DecayFit:
    """Fit the kinetic energy against t (exponential) and log<t> (algebraic).

    Raises:
        ValueError: with fewer than ``min_samples`` samples.
    """
    recs = _records(traj)
    if len(recs) < min_samples:
        raise ValueError(f"decay_fit needs at least {min_samples} samples, got {len(recs)}")
    ts = np.array([r.t for r in recs])
    e = np.array([r.energy for r in recs])
    monotone = bool(np.all(np.diff(e) <= 1e-14 * max(e[0], _TINY)))
    nan = float("nan")
    if np.any(e <= 0):
        return DecayFit(nan, nan, nan, nan, monotone, True, "zero field")
    y = np.log(e)

    def fit(x):
        A = np.column_stack([x, np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        res = y - A @ coef
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 if ss == 0 else 1.0 - float(np.sum(res**2)) / ss
        return -float(coef[0]), r2

    er, e2 = fit(ts)
    ar, a2 = fit(np.log(math.e + ts))
    return DecayFit(er, e2, ar, a2, monotone)


# ---------------------------------------------------------------------------
# commutator probe

PAIRS = ((1, 1), (1, 2), (2, 2))


def _rr_symbol(grid: Grid, i: int, j: int) -> np.ndarray:
    ks = {1: (grid.k1, grid.k1_odd), 2: (grid.k2, grid.k2_odd)}
    sym = ks[i][0] ** 2 / grid.ksq_safe if i == j else ks[i][1] * ks[j][1] / grid.ksq_safe
    sym = np.broadcast_to(sym, (grid.n, grid.n)).copy()
    sym[0, 0] = 0.0
    return sym


def commutator(X: VectorField, g: ScalarField, i: int, j: int) -> np.ndarray:
    """[R_i R_j, X . grad] g on the grid (products dealiased)."""
    grid = g.grid
    sym = _rr_symbol(grid, i, j)
    gh = fft(g.values)
    x1, x2 = X.x.values, X.y.values
    gx, gy = ifft(deriv_hat(gh, 0, grid)), ifft(deriv_hat(gh, 1, grid))
    first = sym * (product_hat(x1, gx, grid) + product_hat(x2, gy, grid))
    rg = sym * gh
    rx, ry = ifft(deriv_hat(rg, 0, grid)), ifft(deriv_hat(rg, 1, grid))
    second = product_hat(x1, rx, grid) + product_hat(x2, ry, grid)
    return ifft(first - second)


def commutator_probe(X: VectorField, g: ScalarField, p: float, p1: float, p2: float,
                     rtol: float = 1e-12) -> dict[tuple[int, int], float]:
    """||[R_i R_j, d_X] g||_p / (||grad X||_{p2} ||g||_{p1}) for each pair (i, j).

    Raises:
        ValueError: unless 1/p1 + 1/p2 = 1/p and p in (1, inf).
    """
    if not (1.0 < p < math.inf):
        raise ValueError("p must lie in (1, inf)")
    if abs(1.0 / p1 + 1.0 / p2 - 1.0 / p) > rtol * (1.0 / p):
        raise ValueError(f"exponent mismatch: 1/{p1} + 1/{p2} != 1/{p}")
    grid = g.grid
    G = velocity_gradient(X.x.values, X.y.values, grid)
    den = lp_norm(G.reshape(4, grid.n, grid.n), p2, grid) * lp_norm(g, p1)
    out = {}
    for i, j in PAIRS:
        num = lp_norm(commutator(X, g, i, j), p, grid)
        out[(i, j)] = 0.0 if num == 0.0 else num / max(den, _TINY)
    return out


def commutator_ensemble(X: VectorField, count: int, seed: int, p: float = 2.0,
                        p1: float = 4.0, p2: float = 4.0, slope: float = 1.0) -> np.ndarray:
    """Ratios for ``count`` random smooth g; returns an array (count, 3) over PAIRS."""
    grid = X.grid
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(count):
        g = ScalarField(grid, random_field(grid, rng, slope))
        r = commutator_probe(X, g, p, p1, p2)
        rows.append([r[q] for q in PAIRS])
    return np.array(rows)
