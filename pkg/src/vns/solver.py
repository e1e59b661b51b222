"""Time integration of the variable-viscosity vorticity equation

    d_t omega + u . grad omega = Delta a,   a = R_mu omega,   u = grad_perp inv_lap omega,

(optionally with buoyancy d_1 theta) coupled to the transport of mu, the
unit tangent and d_tau mu.

Vorticity step: integrating-factor Heun.  With E = exp(-nu_bar |k|^2 dt) and
N(omega, mu) = -P(u . grad omega) + Delta(R_mu omega - nu_bar omega) [+ i k1 theta],

    omega* = E (omega + dt N(omega^n, mu^n)),
    omega^{n+1} = E omega^n + dt/2 (E N(omega^n, mu^n) + N(omega*, mu^{n+1})).

P is the two-thirds projection, so omega stays in the dealiased band and
the discrete energy law holds exactly in semi-discrete form.  For the
semi-Lagrangian scheme the material fields are advanced in between the two
stages with the midpoint velocity (u^n + u*)/2.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .diagnostics import DiagnosticsRecord, compute_record, with_energy_residuals
from .elliptic_ops import ViscosityBounds, rmu_qmu_hat
from .geometry import InterfaceCurve, interface_points
from .spectral_core import (
    Grid,
    ScalarField,
    VectorField,
    dealias,
    deriv_hat,
    fft,
    ifft,
    is_mean_zero,
    velocity_gradient,
    velocity_hat,
)
from .transport import (
    AdvectionScheme,
    DegenerateFieldError,
    FlowMap,
    Interpolator,
    advection_term,
    check_cfl,
    departure_points,
    dtau_mu_sl,
    flow_map_heun,
    stretch_rate,
    unit_tau_sl,
)

U_FLOOR = 1e-8
BLOWUP_FACTOR = 1e6
VARIANTS = ("munse", "boussinesq")


class BlowupError(RuntimeError):
    """The blow-up guard tripped.

    Attributes:
        t: Time at which the guard tripped.
        last_good: Last state that passed the guard.
    """

    def __init__(self, message: str, t: float, last_good: "State"):
        super().__init__(message)
        self.t = t
        self.last_good = last_good


class StepError(RuntimeError):
    """A step failed; the failing time is attached."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (at t = {t:.6g})")
        self.t = t


@dataclass(frozen=True, eq=False)
class State:
    """Solver state.

    Attributes:
        t: Time.
        omega: Mean-zero vorticity.
        mu: Viscosity.
        tau_bar: Unit tangent field.
        dtau_mu: Tangential derivative of mu, transported with its own law.
        theta: Temperature (Boussinesq only).
        flow: Forward flow map, if tracked.
    """

    t: float
    omega: ScalarField
    mu: ScalarField
    tau_bar: VectorField
    dtau_mu: ScalarField
    theta: ScalarField | None = None
    flow: FlowMap | None = None

    @property
    def grid(self) -> Grid:
        return self.omega.grid

    def validate(self, bounds: ViscosityBounds | None = None, unit_tol: float = 1e-8) -> None:
        """Check the state invariants.

        Raises:
            ValueError: on a nonzero vorticity mean, mu outside ``bounds`` or
                a non-unit tangent.
        """
        g = self.grid
        for f in (self.mu, self.tau_bar.x, self.dtau_mu) + ((self.theta,) if self.theta else ()):
            if f.grid != g:
                raise ValueError("all state fields must share one grid")
        if not is_mean_zero(self.omega.values):
            raise ValueError("omega must be mean-zero")
        if bounds is not None:
            bounds.check(self.mu)
        elif float(self.mu.values.min()) <= 0:
            raise ValueError("mu must be positive")
        dev = float(np.max(np.abs(self.tau_bar.magnitude() - 1.0)))
        if dev > unit_tol:
            raise ValueError(f"tau_bar is not unit length (deviation {dev:.3e})")

    def digest(self) -> str:
        """SHA-256 over t and the raw bytes of every field."""
        h = hashlib.sha256()
        h.update(np.float64(self.t).tobytes())
        for name, arr in self.arrays().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def arrays(self) -> dict[str, np.ndarray]:
        """Named n x n arrays in a fixed order (the snapshot manifest)."""
        out = {
            "omega": self.omega.values,
            "mu": self.mu.values,
            "tau_bar_1": self.tau_bar.x.values,
            "tau_bar_2": self.tau_bar.y.values,
            "dtau_mu": self.dtau_mu.values,
        }
        if self.theta is not None:
            out["theta"] = self.theta.values
        if self.flow is not None:
            out["flow_1"] = self.flow.positions[0]
            out["flow_2"] = self.flow.positions[1]
        return out


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    Args:
        t_end: Final time (>= 0).
        nu_bar: Reference viscosity; None means the midpoint of the bounds.
        cfl: Courant number in (0, 1).
        cg_tol: Tolerance for R_mu inversions done by diagnostics, in (0, 1e-4].
        sample_every: Diagnostic cadence in time units; None samples every step.
        scheme: Advection scheme for the material fields.
        variant: ``munse`` or ``boussinesq``.
        epsilon: Exponent offset for (2 + eps)-norm diagnostics.
        bounds: Declared viscosity bounds; None takes them from the initial mu.
        interface: Initial interface polyline to track (requires a flow map).
        curvature_eps: eps for the interface curvature norm.
        max_steps: Safety cap on the number of steps.
    """

    t_end: float = 1.0
    nu_bar: float | None = None
    cfl: float = 0.5
    cg_tol: float = 1e-10
    sample_every: float | None = None
    scheme: AdvectionScheme = field(default_factory=AdvectionScheme)
    variant: str = "munse"
    epsilon: float = 0.5
    bounds: ViscosityBounds | None = None
    interface: InterfaceCurve | None = None
    curvature_eps: float | None = None
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be finite and nonnegative")
        if not (0 < self.cfl < 1):
            raise ValueError(f"cfl must lie in (0, 1), got {self.cfl}")
        if not (0 < self.cg_tol <= 1e-4):
            raise ValueError(f"cg_tol must lie in (0, 1e-4], got {self.cg_tol}")
        if self.sample_every is not None and not self.sample_every > 0:
            raise ValueError("sample_every must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def resolve(self, mu: ScalarField) -> tuple[ViscosityBounds, float]:
        """Bounds and nu_bar for a given initial viscosity.

        Raises:
            ValueError: if nu_bar lies outside the bounds.
        """
        b = self.bounds or ViscosityBounds.from_field(mu)
        nu = b.mid if self.nu_bar is None else float(self.nu_bar)
        if not (b.mu_lo * (1 - 1e-12) <= nu <= b.mu_hi * (1 + 1e-12)):
            raise ValueError(f"nu_bar {nu} outside [{b.mu_lo}, {b.mu_hi}]")
        return b, nu


@dataclass
class Trajectory:
    """Sampled run output.

    Attributes:
        snapshots: (t, state digest) per sample, strictly increasing in t.
        diagnostics: DiagnosticsRecord per sample.
        states: Sampled states (only when the run keeps them).
        final: Final state.
        steps: Number of time steps taken.
    """

    snapshots: list[tuple[float, str]] = field(default_factory=list)
    diagnostics: list[DiagnosticsRecord] = field(default_factory=list)
    states: list[State] = field(default_factory=list)
    final: State | None = None
    steps: int = 0


# ---------------------------------------------------------------------------
# time step selection


def explicit_viscosity(bounds: ViscosityBounds, nu_bar: float) -> float:
    """Largest magnitude of mu - nu_bar, i.e. the explicitly treated diffusion."""
    return max(bounds.mu_hi - nu_bar, nu_bar - bounds.mu_lo, 0.0)


def cfl_dt(u: VectorField, grid: Grid, cfl: float, nu_explicit: float = 0.0) -> float:
    """Advective and explicit-diffusion time step limit.

    dt = cfl h / max(||u||_inf, 1e-8), further capped by cfl h^2 / nu_explicit
    when nu_explicit > 0.
    """
    if not (0 < cfl < 1):
        raise ValueError(f"cfl must lie in (0, 1), got {cfl}")
    umax = float(np.max(u.magnitude()))
    dt = cfl * grid.h / max(umax, U_FLOOR)
    if nu_explicit > 0:
        dt = min(dt, cfl * grid.h**2 / nu_explicit)
    return dt


# ---------------------------------------------------------------------------
# the step


@dataclass(frozen=True)
class _Ctx:
    grid: Grid
    nu_bar: float
    bounds: ViscosityBounds
    scheme: AdvectionScheme
    buoyancy: bool


def _velocity(w_hat: np.ndarray, grid: Grid):
    u1h, u2h = velocity_hat(w_hat, grid)
    return ifft(u1h), ifft(u2h)


def _nonlinear(w_hat, u1, u2, mu, theta_hat, ctx: _Ctx) -> np.ndarray:
    """N(omega) in coefficient space (zero mode removed)."""
    g = ctx.grid
    wx, wy = ifft(deriv_hat(w_hat, 0, g)), ifft(deriv_hat(w_hat, 1, g))
    adv = -dealias(fft(u1 * wx + u2 * wy), g)
    a_hat, _ = rmu_qmu_hat(mu, w_hat, g, want_b=False)
    diff = -g.ksq * (a_hat - ctx.nu_bar * w_hat)
    out = adv + diff
    if ctx.buoyancy and theta_hat is not None:
        out = out + dealias(deriv_hat(theta_hat, 0, g), g)
    out[0, 0] = 0.0
    return out


def _theta_rhs(th_hat, u1, u2, grid) -> np.ndarray:
    return advection_term(ifft(th_hat), u1, u2, grid)


def _step(state: State, dt: float, ctx: _Ctx) -> State:
    g = ctx.grid
    E = np.exp(-ctx.nu_bar * g.ksq * dt)
    w_hat = fft(state.omega.values)
    u1, u2 = _velocity(w_hat, g)
    check_cfl(u1, u2, dt, g)
    mu0 = state.mu.values
    th_hat = fft(state.theta.values) if state.theta is not None else None
    n1 = _nonlinear(w_hat, u1, u2, mu0, th_hat, ctx)
    w_star = E * (w_hat + dt * n1)
    us1, us2 = _velocity(w_star, g)
    th_star = None
    if th_hat is not None:
        k_th1 = _theta_rhs(th_hat, u1, u2, g)
        th_star = th_hat + dt * k_th1

    t1, t2 = state.tau_bar.x.values, state.tau_bar.y.values
    gv = state.dtau_mu.values
    if ctx.scheme.semi_lagrangian:
        m1, m2 = 0.5 * (u1 + us1), 0.5 * (u2 + us2)
        check_cfl(m1, m2, dt, g)
        G = velocity_gradient(m1, m2, g)
        d1, d2 = departure_points(m1, m2, dt, g, ctx.scheme.interpolation)
        ip = Interpolator(g, d1, d2, ctx.scheme.interpolation)
        mono = ctx.scheme.interpolation == "cubic"
        mu1 = ip(mu0, monotone=mono)
        nt1, nt2 = unit_tau_sl(t1, t2, G, ip, dt)
        gv1 = dtau_mu_sl(gv, t1, t2, nt1, nt2, G, ip, dt)
    else:
        Gs0 = velocity_gradient(u1, u2, g)
        Gs1 = velocity_gradient(us1, us2, g)

        def rhs(mu_, a1, a2, gg, v1, v2, G):
            s = stretch_rate(a1, a2, G)
            r_mu = ifft(advection_term(mu_, v1, v2, g))
            r1 = ifft(advection_term(a1, v1, v2, g)) + G[0, 0] * a1 + G[0, 1] * a2 - s * a1
            r2 = ifft(advection_term(a2, v1, v2, g)) + G[1, 0] * a1 + G[1, 1] * a2 - s * a2
            rg = ifft(advection_term(gg, v1, v2, g)) - s * gg
            return r_mu, r1, r2, rg

        k1 = rhs(mu0, t1, t2, gv, u1, u2, Gs0)
        pred = [f + dt * k for f, k in zip((mu0, t1, t2, gv), k1)]
        k2 = rhs(*pred, us1, us2, Gs1)
        mu1, nt1, nt2, gv1 = [f + 0.5 * dt * (a + b) for f, a, b in zip((mu0, t1, t2, gv), k1, k2)]
        norm = np.hypot(nt1, nt2)
        if float(norm.min()) < 0.5:
            raise DegenerateFieldError(f"|tau| dropped to {float(norm.min()):.3f} before renormalization")
        nt1, nt2 = nt1 / norm, nt2 / norm

    n2 = _nonlinear(w_star, us1, us2, mu1, th_star, ctx)
    w_new = E * w_hat + 0.5 * dt * (E * n1 + n2)
    w_new[0, 0] = 0.0
    theta_new = None
    if th_hat is not None:
        k_th2 = _theta_rhs(th_star, us1, us2, g)
        theta_new = ScalarField(g, ifft(th_hat + 0.5 * dt * (k_th1 + k_th2)))
    flow = state.flow
    if flow is not None:
        nu1, nu2 = _velocity(w_new, g)
        flow = FlowMap(flow_map_heun(flow.positions, u1, u2, nu1, nu2, dt, g), state.t + dt)
    return State(
        t=state.t + dt,
        omega=ScalarField(g, ifft(w_new)),
        mu=ScalarField(g, mu1),
        tau_bar=VectorField.from_arrays(g, nt1, nt2),
        dtau_mu=ScalarField(g, gv1),
        theta=theta_new,
        flow=flow,
    )


def _context(state: State, cfg: SolverConfig) -> _Ctx:
    bounds, nu = cfg.resolve(state.mu)
    if cfg.variant == "boussinesq" and state.theta is None:
        raise ValueError("the boussinesq variant needs theta in the state")
    return _Ctx(state.grid, nu, bounds, cfg.scheme, cfg.variant == "boussinesq")


def _auto_dt(state: State, ctx: _Ctx, cfl: float) -> float:
    u1, u2 = _velocity(fft(state.omega.values), ctx.grid)
    return cfl_dt(VectorField.from_arrays(ctx.grid, u1, u2), ctx.grid, cfl,
                  explicit_viscosity(ctx.bounds, ctx.nu_bar))


def step_munse(state: State, cfg: SolverConfig, dt: float | None = None) -> State:
    """One step of the variable-viscosity system (buoyancy ignored).

    Args:
        state: Current state.
        cfg: Configuration (scheme, nu_bar, cfl).
        dt: Step size; defaults to :func:`cfl_dt`.
    """
    ctx = replace(_context(state, replace(cfg, variant="munse")), buoyancy=False)
    dt = _auto_dt(state, ctx, cfg.cfl) if dt is None else dt
    return _step(state, dt, ctx)


def step_boussinesq(state: State, cfg: SolverConfig, dt: float | None = None) -> State:
    """One step with the buoyancy source d_1 theta and transport of theta."""
    if state.theta is None:
        raise ValueError("step_boussinesq needs theta in the state")
    ctx = replace(_context(state, replace(cfg, variant="boussinesq")), buoyancy=True)
    dt = _auto_dt(state, ctx, cfg.cfl) if dt is None else dt
    return _step(state, dt, ctx)


# ---------------------------------------------------------------------------
# driver


def _grad_u_inf(omega: ScalarField) -> float:
    g = omega.grid
    u1, u2 = _velocity(fft(omega.values), g)
    G = velocity_gradient(u1, u2, g)
    return float(np.max(np.sqrt(np.sum(G**2, axis=(0, 1)))))


def run(initial: State, cfg: SolverConfig, keep_states: bool = False,
        on_sample: Callable[[State, DiagnosticsRecord], None] | None = None,
        dt_fixed: float | None = None) -> Trajectory:
    """Integrate to t_end, sampling diagnostics.

    Steps are shortened so that every sample time and t_end are hit exactly.
    The run is deterministic given (initial, cfg).

    Args:
        initial: Initial state (validated).
        cfg: Configuration.
        keep_states: Store every sampled state in the trajectory.
        on_sample: Callback invoked at each sample.
        dt_fixed: Use this step size instead of the adaptive CFL step (still
            shortened to land on samples).

    Raises:
        BlowupError: if ||omega||_inf exceeds 1e6 times its initial value
            (or becomes non-finite).
        StepError: wrapping any other step failure, with the failing time.
    """
    ctx = _context(initial, cfg)
    initial.validate(ctx.bounds)
    track = cfg.interface is not None
    state = initial
    if track and state.flow is None:
        state = replace(state, flow=FlowMap.identity(state.grid, state.t))
    traj = Trajectory()
    w0 = max(float(np.max(np.abs(state.omega.values))), U_FLOOR)
    integral = 0.0
    gu_prev = _grad_u_inf(state.omega)
    t_end = initial.t + cfg.t_end

    def sample(s: State):
        curve = None
        if track:
            curve = interface_points(s.flow, cfg.interface, s.grid)
        rec = compute_record(s.t, s.omega, s.mu, s.tau_bar, s.dtau_mu, cfg.epsilon,
                             ctx.bounds, integral, s.theta, curve, cfg.curvature_eps,
                             ctx.buoyancy)
        traj.snapshots.append((s.t, s.digest()))
        traj.diagnostics.append(rec)
        if keep_states:
            traj.states.append(s)
        if on_sample is not None:
            on_sample(s, rec)

    try:
        sample(state)
    except Exception as exc:  # noqa: BLE001
        raise StepError(str(exc), state.t) from exc
    every = cfg.sample_every
    next_sample = initial.t + every if every else None
    k = 1
    while state.t < t_end * (1 - 1e-14) and t_end - state.t > 1e-14:
        if traj.steps >= cfg.max_steps:
            raise StepError("max_steps exceeded", state.t)
        dt = _auto_dt(state, ctx, cfg.cfl) if dt_fixed is None else dt_fixed
        target = t_end if next_sample is None else min(next_sample, t_end)
        due = False
        if state.t + dt >= target - 1e-12 * max(1.0, abs(target)):
            dt = target - state.t
            due = True
        elif state.t + 1.5 * dt > target:
            # split the remainder into two equal steps to avoid a sliver
            dt = 0.5 * (target - state.t)
        try:
            new = _step(state, dt, ctx)
        except Exception as exc:  # noqa: BLE001
            raise StepError(f"{type(exc).__name__}: {exc}", state.t) from exc
        if due:
            new = replace(new, t=target)
            if new.flow is not None:
                new = replace(new, flow=FlowMap(new.flow.positions, target))
        wmax = float(np.max(np.abs(new.omega.values)))
        if not math.isfinite(wmax) or wmax > BLOWUP_FACTOR * w0:
            raise BlowupError(f"blow-up guard tripped at t = {new.t:.6g} (|omega|_inf = {wmax:.3e})",
                              new.t, state)
        gu = _grad_u_inf(new.omega)
        integral += 0.5 * dt * (gu + gu_prev)
        gu_prev = gu
        state = new
        traj.steps += 1
        if due or every is None:
            try:
                sample(state)
            except Exception as exc:  # noqa: BLE001
                raise StepError(str(exc), state.t) from exc
            if next_sample is not None:
                k += 1
                next_sample = initial.t + k * every
    traj.diagnostics = with_energy_residuals(traj.diagnostics)
    traj.final = state
    return traj
