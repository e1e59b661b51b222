"""Acceptance suite: one test group per numbered criterion.

Every check reports a PASS/FAIL line through the ``report`` fixture; the
terminal summary prints one aggregated line per criterion.  Tolerances are
the stated ones.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import CONFIG_DIR
from helpers import (
    e1,
    random_omega,
    random_velocity,
    shipped,
    smooth_mu,
    smooth_omega,
    smooth_unit_tau,
)
import oracles
from vns.diagnostics import (
    alpha_a_relation_residual,
    alpha_reform_check,
    good_unknown_alpha,
    good_unknowns,
    sigma_quantities,
)
from vns.elliptic_ops import apply_rmu, invert_rmu, stress_decompose
from vns.experiments import (
    band_limit,
    build_initial,
    commutator_rows,
    probe_rows,
    random_vorticity,
)
from vns.geometry import (
    LayerSpec,
    PatchSpec,
    check_simple,
    disc_tau_gradient,
    interface_points,
    make_checkerboard_mu,
    make_disc_tau,
    make_layers_mu,
    make_patch_mu,
    patch_profile,
    radial_dtau_mu,
)
from vns.solver import run
from vns.spectral_core import Grid, ScalarField, biot_savart, fft, ifft, random_field

RUN_CONFIGS = sorted(CONFIG_DIR.glob("*.cfg"))


def _run_config(path, **overrides):
    cfg = shipped(path)
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    state, scfg = build_initial(cfg)
    return cfg, state, run(state, scfg, keep_states=True)


@pytest.fixture(scope="module")
def tg_run():
    t0 = time.perf_counter()
    out = _run_config(CONFIG_DIR / "taylor_green.cfg")
    return out + (time.perf_counter() - t0,)


@pytest.fixture(scope="module")
def shipped_runs():
    return {p.name: _run_config(p) for p in RUN_CONFIGS}


# ---------------------------------------------------------------------------
# 1. Taylor-Green regression


def test_c1_taylor_green_regression(tg_run, report):
    cfg, state, traj, elapsed = tg_run
    nu = cfg["init.mu"]
    x1, x2 = state.grid.mesh
    exact = oracles.tg_omega(x1, x2, nu, traj.final.t)
    err = np.linalg.norm(traj.final.omega.values - exact) / np.linalg.norm(exact)
    ok = (cfg["grid.n"] == 64 and cfg["time.cfl"] == 0.25 and nu == 0.1
          and abs(traj.final.t - 1.0) < 1e-14 and err <= 1e-6 and elapsed <= 30.0)
    report("1", "1", ok, f"rel L2 error {err:.3e} (<= 1e-6), runtime {elapsed:.2f} s (<= 30 s)")
    assert ok


# ---------------------------------------------------------------------------
# 2. Operator bracket suite


def _bracket_fields(grid):
    h = grid.h
    c = (0.5 * grid.l, 0.5 * grid.l)
    return {
        "constant": ScalarField(grid, np.ones((grid.n, grid.n))),
        "smooth": smooth_mu(grid, 0.5, 2.0),
        "patch": make_patch_mu(grid, PatchSpec(c, 1.0, 2.0, 0.5)),
        "checkerboard": make_checkerboard_mu(grid, 0.5, 2.0, 2.0 * h),
        "layered": make_layers_mu(grid, LayerSpec((0.5, 1.0), (2.0, 1.0, 0.5))),
    }


def test_c2_operator_bracket(report):
    t0 = time.perf_counter()
    grid = Grid(128)
    lo, hi = 0.5, 2.0
    slack = 1e-12
    rng = np.random.default_rng(2)
    omegas = [random_field(grid, rng, slope=float(rng.uniform(0.0, 3.0))) for _ in range(100)]
    violations = []
    worst = [math.inf, -math.inf, math.inf, -math.inf]
    for name, mu in _bracket_fields(grid).items():
        assert mu.values.min() >= lo - 1e-15 and mu.values.max() <= hi + 1e-15
        for k, w in enumerate(omegas):
            a = apply_rmu(mu, ScalarField(grid, w)).values
            wn = float(np.sum(w * w))
            q = float(np.sum(a * w)) / wn
            r = math.sqrt(float(np.sum(a * a)) / wn)
            worst = [min(worst[0], q), max(worst[1], q), min(worst[2], r), max(worst[3], r)]
            if not (lo * (1 - slack) <= q <= hi * (1 + slack)):
                violations.append((name, k, "rayleigh", q))
            if not (lo * (1 - slack) <= r <= 8 * hi * (1 + slack)):
                violations.append((name, k, "norm", r))
    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed <= 10.0
    report("2", "2", ok,
           f"{len(violations)} violations over 500 pairs; Rayleigh in [{worst[0]:.4f}, {worst[1]:.4f}], "
           f"norm ratio in [{worst[2]:.4f}, {worst[3]:.4f}], runtime {elapsed:.2f} s (<= 10 s)")
    assert ok, violations[:5]


# ---------------------------------------------------------------------------
# 3. Decomposition identity


def test_c3_decomposition_identity(report):
    g64 = Grid(64)
    x1, x2 = g64.mesh
    tg = biot_savart(ScalarField(g64, 2 * np.sin(x1) * np.sin(x2)))
    smooth = max(
        stress_decompose(smooth_mu(g64), tg)[2],
        stress_decompose(smooth_mu(g64), random_velocity(g64, 3))[2],
    )
    g256 = Grid(256)
    patch = make_patch_mu(g256, PatchSpec((math.pi, math.pi), 1.0, 2.0, 0.5))
    mollified = stress_decompose(patch, random_velocity(g256, 4))[2]
    ok = smooth <= 1e-8 and mollified <= 1e-6
    report("3", "3", ok, f"smooth residual {smooth:.2e} (<= 1e-8), patch n=256 {mollified:.2e} (<= 1e-6)")
    assert ok


# ---------------------------------------------------------------------------
# 4. Inversion roundtrip


def test_c4_inversion_roundtrip(report):
    grid = Grid(128)
    fields = {
        "patch": make_patch_mu(grid, PatchSpec((math.pi, math.pi), 1.0, 2.0, 0.5)),
        "checkerboard": make_checkerboard_mu(grid, 0.5, 2.0, 2.0 * grid.h),
        "smooth": smooth_mu(grid),
    }
    worst_err, worst_it = 0.0, 0
    for k, mu in enumerate(fields.values()):
        assert mu.values.max() / mu.values.min() <= 4.0 + 1e-12
        w = random_omega(grid, 10 + k, slope=1.0)
        back, rep = invert_rmu(mu, apply_rmu(mu, w))
        err = np.linalg.norm(back.values - w.values) / np.linalg.norm(w.values)
        worst_err, worst_it = max(worst_err, err), max(worst_it, rep.iterations)
    ok = worst_err <= 1e-9 and worst_it <= 60
    report("4", "4", ok, f"roundtrip error {worst_err:.2e} (<= 1e-9), CG iterations {worst_it} (<= 60)")
    assert ok


# ---------------------------------------------------------------------------
# 5. alpha / a suite


def test_c5a_alpha_reform(report):
    grid = Grid(64)
    mu, tau, u = smooth_mu(grid), smooth_unit_tau(grid), biot_savart(smooth_omega(grid, 5))
    res = alpha_reform_check(mu, u, tau, good_unknown_alpha(mu, u, tau))
    report("5", "5a", res <= 1e-8, f"alpha_reform_check residual {res:.2e} (<= 1e-8)")
    assert res <= 1e-8


def test_c5b_alpha_a_relation(report):
    grid = Grid(64)
    mu, tau, w = smooth_mu(grid), smooth_unit_tau(grid), smooth_omega(grid, 6)
    a, _ = good_unknowns(mu, w)
    alpha = good_unknown_alpha(mu, biot_savart(w), tau)
    res = alpha_a_relation_residual(a, alpha, mu, w, tau)
    report("5", "5b", res <= 1e-6, f"alpha_a_relation_residual {res:.2e} (<= 1e-6)")
    assert res <= 1e-6


def _interface_ratio(n: int) -> float:
    cfg = shipped(CONFIG_DIR / "patch.cfg").with_overrides(grid__n=n, time__t_end=0.05,
                                                           time__sample_every=0.025)
    state, scfg = build_initial(cfg)
    traj = run(state, scfg)
    return max(r.interface_ratio for r in traj.diagnostics)


def test_c5c_interface_alpha(report):
    ratios = {n: _interface_ratio(n) for n in (64, 128, 256)}
    decreasing = ratios[128] < ratios[64] and ratios[256] < ratios[128]
    ok = ratios[256] <= 0.05 and decreasing
    report("5", "5c", ok,
           "interface max|a+alpha|/max|a| = "
           + ", ".join(f"{r:.3f} (n={n})" for n, r in ratios.items())
           + " (need <= 0.05 at n=256 and decreasing)")
    assert ok


# ---------------------------------------------------------------------------
# 6. Transport conservation


def _check_transport(traj, g0_norm):
    d = traj.diagnostics
    th0 = d[0].theta_l2
    theta_drift = max(abs(r.theta_l2 - th0) / th0 for r in d)
    lo0, hi0 = d[0].mu_min, d[0].mu_max
    mu_drift = max(max(abs(r.mu_min - lo0), abs(r.mu_max - hi0)) for r in d)
    bound_ok = all(r.dtau_mu_lp <= g0_norm * r.V for r in d)
    return theta_drift, mu_drift, bound_ok


def test_c6_transport_conservation(report):
    cfg = shipped(CONFIG_DIR / "patch.cfg").with_overrides(solver__variant="boussinesq")
    state, scfg = build_initial(cfg)
    traj = run(state, scfg)
    th, mu_d, bound = _check_transport(traj, traj.diagnostics[0].dtau_mu_lp)
    # same run with tau_bar = e1, where d_tau mu is O(1) and the bound is not vacuous
    spec = PatchSpec((math.pi, math.pi), cfg["init.patch.radius"], cfg["init.patch.mu_in"],
                     cfg["init.patch.mu_out"])
    grid = state.grid
    tau = e1(grid)
    g = radial_dtau_mu(grid, spec.center, patch_profile(spec, grid), tau)
    traj_e1 = run(replace(state, tau_bar=tau, dtau_mu=g), scfg)
    th2, mu_d2, bound2 = _check_transport(traj_e1, traj_e1.diagnostics[0].dtau_mu_lp)
    ok = max(th, th2) <= 1e-6 and max(mu_d, mu_d2) <= 1e-6 and bound and bound2
    report("6", "6", ok,
           f"theta L2 drift {max(th, th2):.1e}, mu bound drift {max(mu_d, mu_d2):.1e} (<= 1e-6); "
           f"d_tau mu <= |d_tau0 mu0| V at every sample: {bound and bound2} "
           f"(tau_B and tau = e1, initial norms {traj.diagnostics[0].dtau_mu_lp:.1e} and "
           f"{traj_e1.diagnostics[0].dtau_mu_lp:.2f})")
    assert ok


# ---------------------------------------------------------------------------
# 7. Energy law


def test_c7a_energy_residual_taylor_green(tg_run, report):
    _, _, traj, _ = tg_run
    worst = max(r.energy_residual for r in traj.diagnostics)
    report("7", "7a", worst <= 1e-6, f"Taylor-Green energy residual {worst:.2e} (<= 1e-6)")
    assert worst <= 1e-6


def test_c7b_energy_monotone_on_shipped_configs(shipped_runs, report):
    bad = []
    for name, (_, _, traj) in shipped_runs.items():
        e = [r.energy for r in traj.diagnostics]
        if any(b > a for a, b in zip(e, e[1:])):
            bad.append(name)
    ok = not bad and len(shipped_runs) >= 4
    report("7", "7b", ok,
           f"energy nonincreasing on {len(shipped_runs) - len(bad)}/{len(shipped_runs)} shipped configs"
           + (f" (failed: {', '.join(bad)})" if bad else ""))
    assert ok


# ---------------------------------------------------------------------------
# 8. Commutator probe


def test_c8_commutator_probe(report):
    cfg = shipped(CONFIG_DIR / "commutator.cfg")
    rows = commutator_rows(cfg)
    assert cfg["commutator.count"] == 100 and len(cfg["commutator.seeds"]) == 3
    finite = all(math.isfinite(r[3]) and r[3] > 0 for r in rows)
    spreads = {}
    for i, j in ((1, 1), (1, 2), (2, 2)):
        m = [r[3] for r in rows if (r[1], r[2]) == (i, j)]
        spreads[(i, j)] = max(m) / min(m)
    worst = max(spreads.values())
    ok = finite and worst <= 2.0
    report("8", "8", ok, f"ratios finite: {finite}; max-over-100 spread across seeds {worst:.3f}x (<= 2x)")
    assert ok


# ---------------------------------------------------------------------------
# 9. epsilon-probe trend


@pytest.mark.slow
def test_c9_epsilon_probe_trend(report):
    cfg = shipped(CONFIG_DIR / "probe.cfg")
    t0 = time.perf_counter()
    rows = probe_rows(cfg)
    elapsed = time.perf_counter() - t0
    onset = {}
    for K, _, _, _, o, _, _ in rows:
        onset[K] = o
    ks = sorted(onset)
    vals = [onset[k] for k in ks]
    ok = (ks == [2.0, 4.0, 8.0] and all(v != "" for v in vals)
          and all(b < a for a, b in zip(vals, vals[1:])) and elapsed <= 300.0)
    report("9", "9", ok, "onset p " + ", ".join(f"K={k:g}: {v}" for k, v in zip(ks, vals))
           + f" (strictly decreasing), runtime {elapsed:.0f} s (<= 300 s)")
    assert ok


# ---------------------------------------------------------------------------
# 10. Scaling invariance


def _patch_smallness(n: int, l: float, scale: float, omega_hat: np.ndarray, n0: int, eps: float):
    """smallness_lhs of patch data dilated by ``scale`` on the (n, l) torus.

    omega_hat holds the coefficients of omega0 on the base (n0, l0) grid;
    the dilated field omega0(x / scale) / scale^2 has the same integer-mode
    coefficients on the dilated torus.
    """
    grid = Grid(n, l)
    width = scale * 2.0 * (2.0 * math.pi / 64)
    spec = PatchSpec((0.5 * l, 0.5 * l), scale, 2.0, 0.5, mollify_width=width)
    mu, tau = make_patch_mu(grid, spec), make_disc_tau(grid, spec)
    g = radial_dtau_mu(grid, spec.center, patch_profile(spec, grid), tau)
    c = np.zeros((n, n), dtype=complex)
    idx = np.r_[0:n0 // 2, -(n0 // 2):0]
    c[np.ix_(idx, idx)] = omega_hat[np.ix_(idx, idx)] * (n / n0) ** 2
    omega = ScalarField(grid, ifft(c) / scale**2)
    return sigma_quantities(mu, biot_savart(omega), tau, eps, g, disc_tau_gradient(grid, spec))


def test_c10_scaling_invariance(report):
    n0, eps = 128, 0.5
    base = Grid(n0)
    w = fft(band_limit(random_vorticity(base, 0, 3, 1.0), base))
    s1 = _patch_smallness(n0, 2.0 * math.pi, 1.0, w, n0, eps)
    s2 = _patch_smallness(2 * n0, 4.0 * math.pi, 2.0, w, n0, eps)
    rel = abs(s2.smallness_lhs / s1.smallness_lhs - 1.0)
    report("10", "10", rel <= 0.01,
           f"smallness_lhs {s1.smallness_lhs:.6g} vs rescaled {s2.smallness_lhs:.6g}, "
           f"relative difference {rel:.2e} (<= 1e-2)")
    assert rel <= 0.01


# ---------------------------------------------------------------------------
# 11. Patch stability run


@pytest.mark.slow
def test_c11_patch_stability(shipped_runs, report):
    cfg, state, traj = shipped_runs["patch_stability.cfg"]
    scfg = build_initial(cfg)[1]
    spec = PatchSpec((math.pi, math.pi), cfg["init.patch.radius"], cfg["init.patch.mu_in"],
                     cfg["init.patch.mu_out"])
    grid = state.grid
    sig = sigma_quantities(state.mu, biot_savart(state.omega), state.tau_bar, cfg["diag.epsilon"],
                           state.dtau_mu, disc_tau_gradient(grid, spec))
    d = traj.diagnostics
    integral = d[-1].int_grad_u_inf
    curv = [r.interface_curvature_lp for r in d]
    simple = True
    for s in traj.states:
        try:
            check_simple(interface_points(s.flow, scfg.interface, grid).points, 0.5 * grid.h)
        except Exception:  # noqa: BLE001
            simple = False
    ok = (cfg["init.kind"] == "patch" and cfg["init.patch.mu_in"] == 2.0 and cfg["init.patch.mu_out"] == 0.5
          and sig.smallness_lhs <= 1e-3 * (1 + 1e-9) and abs(traj.final.t - 5.0) < 1e-12
          and math.isfinite(integral) and simple and all(math.isfinite(c) for c in curv))
    report("11", "11", ok,
           f"smallness_lhs {sig.smallness_lhs:.3e} (<= 1e-3), reached t = {traj.final.t:g} without guard trip, "
           f"int ||grad u||_inf = {integral:.3e}, interface simple at {len(traj.states)} samples: {simple}, "
           f"curvature norm finite: {all(math.isfinite(c) for c in curv)} (max {max(curv):.3f})")
    assert ok
