"""Build initial states and probe sweeps from a RunConfig."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .cli_io import RunConfig, layer_spec, patch_spec, read_snapshot, state_from_snapshot
from .diagnostics import PAIRS, commutator_ensemble, sigma_quantities
from .elliptic_ops import ViscosityBounds, epsilon_probe
from .geometry import (
    checkerboard_corners,
    circle_curve,
    disc_tau_gradient,
    layer_tau_gradient,
    layers_profile,
    make_checkerboard_mu,
    make_disc_tau,
    make_layer_tau,
    make_layers_mu,
    make_patch_mu,
    patch_profile,
    radial_dtau_mu,
)
from .solver import SolverConfig, State
from .spectral_core import (
    Grid,
    ScalarField,
    VectorField,
    biot_savart,
    fft,
    ifft,
)
from .transport import AdvectionScheme


def grid_of(cfg: RunConfig) -> Grid:
    return Grid(cfg["grid.n"], cfg["grid.l"], cfg["grid.dealias"])


def band_limit(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Project onto the resolved (dealiased, Nyquist-free, mean-zero) modes."""
    c = np.where(grid.resolved_mask, fft(values), 0.0)
    return ifft(c)


def taylor_green(grid: Grid, amplitude: float = 1.0, mode: int = 1) -> np.ndarray:
    """amplitude * 2 sin(m x1') sin(m x2') with x' scaled to a 2 pi period."""
    x1, x2 = grid.mesh
    s = 2.0 * math.pi / grid.l * mode
    return amplitude * 2.0 * np.sin(s * x1) * np.sin(s * x2)


def random_vorticity(grid: Grid, seed: int, kmax: int, amplitude: float) -> np.ndarray:
    """Random field on integer wavenumbers |m| <= kmax with max |omega| = amplitude."""
    rng = np.random.default_rng(seed)
    c = fft(rng.standard_normal((grid.n, grid.n)))
    m2 = (grid.ksq * (grid.l / (2.0 * math.pi)) ** 2)
    c = np.where((m2 <= kmax**2) & grid.resolved_mask, c, 0.0)
    w = ifft(c)
    top = float(np.max(np.abs(w)))
    return w * (amplitude / top) if top > 0 else w


def _omega(cfg: RunConfig, grid: Grid, default: str) -> np.ndarray:
    kind = cfg["init.omega"] or default
    if kind == "zero":
        return grid.zeros()
    if kind == "taylor_green":
        w = taylor_green(grid, cfg["init.amplitude"], cfg["init.mode"])
    else:
        w = random_vorticity(grid, cfg["init.seed"], cfg["init.kmax"], cfg["init.amplitude"])
    return band_limit(w, grid)


def _scale_to_smallness(omega: np.ndarray, mu: ScalarField, tau: VectorField,
                        g: ScalarField, eps: float, target: float,
                        grad_tau: np.ndarray | None = None) -> np.ndarray:
    """Rescale omega so that sigma_0^{eps/2} sigma_{-1} sigma_1 equals ``target``."""
    grid = mu.grid

    def lhs(lam):
        u = biot_savart(ScalarField(grid, lam * omega))
        return sigma_quantities(mu, u, tau, eps, g, grad_tau).smallness_lhs

    if not np.any(omega):
        return omega
    hi = 1.0
    while lhs(hi) < target:
        hi *= 2.0
    lam = brentq(lambda x: lhs(x) - target, 0.0, hi, xtol=1e-14, rtol=1e-12)
    return lam * omega


def build_initial(cfg: RunConfig) -> tuple[State, SolverConfig]:
    """Construct the initial State and the SolverConfig described by ``cfg``."""
    grid = grid_of(cfg)
    kind = cfg["init.kind"]
    x1, x2 = grid.mesh
    interface = None
    bounds = None
    want_interface = cfg["diag.interface"]
    npts = cfg["diag.interface_points"]
    if kind == "taylor_green":
        mu = ScalarField(grid, np.full((grid.n, grid.n), cfg["init.mu"]))
        tau = VectorField.from_arrays(grid, np.ones_like(x1), np.zeros_like(x1))
        g = ScalarField(grid, grid.zeros())
        omega = _omega(cfg, grid, "taylor_green")
        state = State(0.0, ScalarField(grid, omega), mu, tau, g)
    elif kind in ("patch", "layers"):
        if kind == "patch":
            spec = patch_spec(cfg)
            mu = make_patch_mu(grid, spec)
            tau = make_disc_tau(grid, spec)
            g = radial_dtau_mu(grid, spec.center, patch_profile(spec, grid), tau)
            grad_tau = disc_tau_gradient(grid, spec)
            center, radius = spec.center, spec.radius
            lo, hi = sorted((spec.mu_in, spec.mu_out))
        else:
            spec = layer_spec(cfg)
            mu = make_layers_mu(grid, spec)
            tau = make_layer_tau(grid, spec)
            g = radial_dtau_mu(grid, spec.centre(grid), layers_profile(spec, grid), tau)
            grad_tau = layer_tau_gradient(grid, spec)
            center, radius = spec.centre(grid), spec.radii[-1]
            lo, hi = min(spec.values), max(spec.values)
        bounds = ViscosityBounds(lo, hi)
        omega = _omega(cfg, grid, "random")
        if cfg["init.smallness"] is not None:
            omega = _scale_to_smallness(omega, mu, tau, g, cfg["diag.epsilon"],
                                        cfg["init.smallness"], grad_tau)
        if want_interface is None or want_interface:
            interface = circle_curve(center, radius, npts)
        state = State(0.0, ScalarField(grid, omega), mu, tau, g)
    else:
        snap = read_snapshot(cfg["init.file.path"])
        state = state_from_snapshot(snap, cfg["grid.dealias"])
        grid = state.grid
    if cfg["solver.variant"] == "boussinesq" and state.theta is None:
        gx1, _ = grid.mesh
        th = cfg["init.theta_amplitude"] * np.sin(2.0 * math.pi / grid.l * gx1)
        state = State(state.t, state.omega, state.mu, state.tau_bar, state.dtau_mu,
                      ScalarField(grid, th), state.flow)
    scfg = SolverConfig(
        t_end=cfg["time.t_end"],
        nu_bar=cfg["solver.nu_bar"],
        cfl=cfg["time.cfl"],
        cg_tol=cfg["solver.cg_tol"],
        sample_every=cfg["time.sample_every"],
        scheme=AdvectionScheme(cfg["solver.scheme"], cfg["solver.interpolation"]),
        variant=cfg["solver.variant"],
        epsilon=cfg["diag.epsilon"],
        bounds=bounds,
        interface=interface,
    )
    if interface is not None and mu_has_jump(kind):
        scfg.scheme.check_for_jump()
    return state, scfg


def mu_has_jump(kind: str) -> bool:
    return kind in ("patch", "layers")


PROBE_COLUMNS = ("K", "p", "estimate", "score", "onset", "ensemble_size", "mollification_width")


def probe_rows(cfg: RunConfig) -> list[tuple]:
    """epsilon_probe sweep over two-value checkerboards mu in {1/K, K}."""
    grid = grid_of(cfg)
    width = cfg["probe.mollify_width"] or 2.0 * grid.h
    rows = []
    for K in cfg["probe.k_values"]:
        mu = make_checkerboard_mu(grid, 1.0 / K, K, width)
        sweep = epsilon_probe(
            mu, cfg["probe.p_grid"], cfg["probe.threshold"],
            ensemble_size=cfg["probe.ensemble_size"], seed=cfg["probe.seed"],
            tol=cfg["solver.cg_tol"],
            hotspots=checkerboard_corners(grid) if cfg["probe.hotspots"] else None,
            power_steps=cfg["probe.power_steps"], refine_keep=cfg["probe.refine_keep"])
        onset = "" if sweep.onset is None else sweep.onset
        rows.append((K, 2.0, sweep.estimate_l2, 1.0 if sweep.relative else sweep.estimate_l2,
                     onset, sweep.ensemble_size, width))
        for p, e, s in zip(sweep.p_values, sweep.estimates, sweep.scores):
            rows.append((K, p, e, s, onset, sweep.ensemble_size, width))
    return rows


COMMUTATOR_COLUMNS = ("seed", "i", "j", "max_ratio", "mean_ratio", "count", "p", "p1", "p2")


def commutator_field(grid: Grid) -> VectorField:
    """X = e1 sin(x2) (in 2 pi-periodic units)."""
    _, x2 = grid.mesh
    return VectorField.from_arrays(grid, np.sin(2.0 * math.pi / grid.l * x2), grid.zeros())


def commutator_rows(cfg: RunConfig) -> list[tuple]:
    grid = grid_of(cfg)
    X = commutator_field(grid)
    p, p1, p2 = cfg["commutator.p"], cfg["commutator.p1"], cfg["commutator.p2"]
    rows = []
    for seed in cfg["commutator.seeds"]:
        r = commutator_ensemble(X, cfg["commutator.count"], seed, p, p1, p2, cfg["commutator.slope"])
        for col, (i, j) in enumerate(PAIRS):
            rows.append((seed, i, j, float(r[:, col].max()), float(r[:, col].mean()),
                         cfg["commutator.count"], p, p1, p2))
    return rows
