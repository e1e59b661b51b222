"""Variable-viscosity operator layer built from double Riesz transforms.

With P1 = R2R2 - R1R1 and P2 = 2R1R2 the good unknowns are

    a = R_mu omega = P1(mu P1 omega) + P2(mu P2 omega)
    b = Q_mu omega = P1(mu P2 omega) - P2(mu P1 omega)

and div(mu Su) = grad_perp a + grad b for u = grad_perp inv_lap omega.
Products with mu are dealiased.  On band-limited omega (the subspace kept
by the solver) R_mu is self-adjoint with spectrum in [mu_lo, mu_hi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral_core import (
    Grid,
    ScalarField,
    VectorField,
    curl,
    deriv_hat,
    divergence,
    fft,
    ifft,
    is_mean_zero,
    product_hat,
    random_field,
    velocity_gradient,
)

BOUNDS_TOL = 1e-8


@dataclass(frozen=True)
class ViscosityBounds:
    """Pointwise viscosity bounds 0 < mu_lo <= mu <= mu_hi."""

    mu_lo: float
    mu_hi: float

    def __post_init__(self):
        if not (self.mu_lo > 0 and self.mu_hi >= self.mu_lo and math.isfinite(self.mu_hi)):
            raise ValueError(f"invalid viscosity bounds ({self.mu_lo}, {self.mu_hi})")

    @classmethod
    def from_field(cls, mu: ScalarField | np.ndarray) -> "ViscosityBounds":
        vals = mu.values if isinstance(mu, ScalarField) else np.asarray(mu)
        return cls(float(vals.min()), float(vals.max()))

    @property
    def ratio(self) -> float:
        return self.mu_hi / self.mu_lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.mu_lo + self.mu_hi)

    def check(self, mu: ScalarField | np.ndarray, tol: float = BOUNDS_TOL) -> None:
        """Raise ValueError if mu leaves [mu_lo, mu_hi] by more than tol."""
        vals = mu.values if isinstance(mu, ScalarField) else np.asarray(mu)
        lo, hi = float(vals.min()), float(vals.max())
        slack = tol * self.mu_hi
        if lo < self.mu_lo - slack or hi > self.mu_hi + slack:
            raise ValueError(
                f"viscosity range [{lo:.6g}, {hi:.6g}] violates bounds "
                f"[{self.mu_lo:.6g}, {self.mu_hi:.6g}]"
            )


@dataclass(frozen=True)
class KrylovReport:
    iterations: int
    residual: float
    converged: bool


class ConvergenceError(RuntimeError):
    """Raised when CG does not reach the requested tolerance."""

    def __init__(self, message: str, report: KrylovReport):
        super().__init__(message)
        self.report = report


def _resolve_bounds(mu: ScalarField, bounds: ViscosityBounds | None) -> ViscosityBounds:
    if bounds is None:
        if float(mu.values.min()) <= 0.0:
            raise ValueError("viscosity must be strictly positive")
        return ViscosityBounds.from_field(mu)
    bounds.check(mu)
    return bounds


def _require_mean_zero(f: ScalarField, name: str) -> None:
    if not is_mean_zero(f.values):
        raise ValueError(f"{name} must be mean-zero (mean {f.mean():.3e})")


# ---------------------------------------------------------------------------
# coefficient-space kernels


def rmu_qmu_hat(mu: np.ndarray, w_hat: np.ndarray, grid: Grid, want_b: bool = True):
    """Coefficients of (R_mu w, Q_mu w) given mu samples and w coefficients.

    Returns:
        (a_hat, b_hat); b_hat is None when ``want_b`` is False.
    """
    A = product_hat(mu, ifft(grid.p1_symbol * w_hat), grid)
    B = product_hat(mu, ifft(grid.p2_symbol * w_hat), grid)
    a_hat = grid.p1_symbol * A + grid.p2_symbol * B
    b_hat = grid.p1_symbol * B - grid.p2_symbol * A if want_b else None
    return a_hat, b_hat


def stress_parts(mu: np.ndarray, w_hat: np.ndarray, grid: Grid):
    """Pointwise omega_1 = mu P1 w and omega_2 = mu P2 w (undealiased)."""
    return mu * ifft(grid.p1_symbol * w_hat), mu * ifft(grid.p2_symbol * w_hat)


# ---------------------------------------------------------------------------
# public operations


def apply_p1(omega: ScalarField) -> ScalarField:
    """P1 = R2R2 - R1R1, symbol (xi2^2 - xi1^2)/|xi|^2."""
    g = omega.grid
    return ScalarField(g, ifft(g.p1_symbol * fft(omega.values)))


def apply_p2(omega: ScalarField) -> ScalarField:
    """P2 = 2 R1R2, symbol 2 xi1 xi2/|xi|^2."""
    g = omega.grid
    return ScalarField(g, ifft(g.p2_symbol * fft(omega.values)))


def apply_rmu(mu: ScalarField, omega: ScalarField,
              bounds: ViscosityBounds | None = None) -> ScalarField:
    """a = R_mu omega.

    Args:
        mu: Viscosity samples.
        omega: Mean-zero field.
        bounds: Declared bounds; mu is checked against them.  When omitted
            the bounds are taken from mu itself (only positivity is checked).
    """
    _resolve_bounds(mu, bounds)
    _require_mean_zero(omega, "omega")
    a_hat, _ = rmu_qmu_hat(mu.values, fft(omega.values), omega.grid, want_b=False)
    return ScalarField(omega.grid, ifft(a_hat))


def apply_qmu(mu: ScalarField, omega: ScalarField,
              bounds: ViscosityBounds | None = None) -> ScalarField:
    """b = Q_mu omega."""
    _resolve_bounds(mu, bounds)
    _require_mean_zero(omega, "omega")
    _, b_hat = rmu_qmu_hat(mu.values, fft(omega.values), omega.grid)
    return ScalarField(omega.grid, ifft(b_hat))


def _lmu_parts(mu: ScalarField, phi: ScalarField):
    g = phi.grid
    ph = fft(phi.values)
    d11 = -(g.k1**2) * ph
    d22 = -(g.k2**2) * ph
    d12 = -(g.k1_odd * g.k2_odd) * ph
    first = product_hat(mu.values, ifft(d22 - d11), g)  # mu (d22 - d11) phi
    second = product_hat(mu.values, ifft(2.0 * d12), g)  # mu (2 d12) phi
    op1 = g.k1**2 - g.k2**2  # symbol of d22 - d11
    op2 = -2.0 * g.k1_odd * g.k2_odd  # symbol of 2 d12
    return g, first, second, op1, op2


def apply_lmu(mu: ScalarField, phi: ScalarField) -> ScalarField:
    """L_mu phi = (d22 - d11) mu (d22 - d11) phi + (2 d12) mu (2 d12) phi."""
    g, first, second, op1, op2 = _lmu_parts(mu, phi)
    return ScalarField(g, ifft(op1 * first + op2 * second))


def apply_amu(mu: ScalarField, phi: ScalarField) -> ScalarField:
    """A_mu phi = (d22 - d11) mu (2 d12) phi - (2 d12) mu (d22 - d11) phi."""
    g, first, second, op1, op2 = _lmu_parts(mu, phi)
    return ScalarField(g, ifft(op1 * second - op2 * first))


def stress_divergence(mu: ScalarField, u: VectorField) -> VectorField:
    """div(mu Su) by pointwise products (dealiased) and spectral derivatives."""
    g = u.grid
    G = velocity_gradient(u.x.values, u.y.values, g)
    s11 = 2.0 * G[0, 0]
    s12 = G[0, 1] + G[1, 0]
    s22 = 2.0 * G[1, 1]
    m11 = product_hat(mu.values, s11, g)
    m12 = product_hat(mu.values, s12, g)
    m22 = product_hat(mu.values, s22, g)
    f1 = deriv_hat(m11, 0, g) + deriv_hat(m12, 1, g)
    f2 = deriv_hat(m12, 0, g) + deriv_hat(m22, 1, g)
    return VectorField.from_arrays(g, ifft(f1), ifft(f2))


def stress_decompose(mu: ScalarField, u: VectorField,
                     bounds: ViscosityBounds | None = None):
    """Split div(mu Su) = grad_perp a + grad b.

    Returns:
        (a, b, residual) where residual is the relative L2 difference between
        div(mu Su) evaluated directly and grad_perp a + grad b.

    Raises:
        ValueError: if u is not divergence-free (relative L2 > 1e-8).
    """
    _resolve_bounds(mu, bounds)
    g = u.grid
    unorm = math.sqrt(float(np.sum(u.x.values**2 + u.y.values**2)))
    div = divergence(u).values
    if unorm > 0 and math.sqrt(float(np.sum(div**2))) > 1e-8 * unorm:
        raise ValueError("stress_decompose needs a divergence-free velocity")
    omega = curl(u)
    a_hat, b_hat = rmu_qmu_hat(mu.values, fft(omega.values), g)
    direct = stress_divergence(mu, u)
    r1 = ifft(-deriv_hat(a_hat, 1, g) + deriv_hat(b_hat, 0, g))
    r2 = ifft(deriv_hat(a_hat, 0, g) + deriv_hat(b_hat, 1, g))
    num = math.sqrt(float(np.sum((direct.x.values - r1) ** 2 + (direct.y.values - r2) ** 2)))
    den = math.sqrt(float(np.sum(direct.x.values**2 + direct.y.values**2)))
    residual = 0.0 if num == 0.0 else num / max(den, np.finfo(float).tiny)
    return ScalarField(g, ifft(a_hat)), ScalarField(g, ifft(b_hat)), residual


def max_cg_iterations(bounds: ViscosityBounds, tol: float) -> int:
    """ceil(10 sqrt(mu_hi/mu_lo) ln(1/tol))."""
    return int(math.ceil(10.0 * math.sqrt(bounds.ratio) * math.log(1.0 / tol)))


def invert_rmu_hat(mu: np.ndarray, a_hat: np.ndarray, grid: Grid, tol: float,
                   max_iter: int, mu_mean: float | None = None):
    """Preconditioned CG for R_mu w = a on the resolved modes.

    Works in coefficient space; the preconditioner is division by the mean
    viscosity.  Returns (w_hat, KrylovReport).
    """
    mask = grid.resolved_mask
    rhs = np.where(mask, a_hat, 0.0)
    rhs_norm = math.sqrt(float(np.sum(np.abs(rhs) ** 2)))
    if rhs_norm == 0.0:
        return np.zeros_like(a_hat), KrylovReport(0, 0.0, True)
    inv_m = 1.0 / (float(np.mean(mu)) if mu_mean is None else mu_mean)

    def op(x):
        y, _ = rmu_qmu_hat(mu, x, grid, want_b=False)
        return np.where(mask, y, 0.0)

    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = inv_m * r
    p = z.copy()
    rz = float(np.real(np.vdot(r, z)))
    res = 1.0
    it = 0
    while it < max_iter:
        q = op(p)
        alpha = rz / float(np.real(np.vdot(p, q)))
        x = x + alpha * p
        r = r - alpha * q
        it += 1
        res = math.sqrt(float(np.sum(np.abs(r) ** 2))) / rhs_norm
        if res <= tol:
            break
        z = inv_m * r
        rz_new = float(np.real(np.vdot(r, z)))
        p = z + (rz_new / rz) * p
        rz = rz_new
    # true residual guards against drift in the recursive one
    true_res = math.sqrt(float(np.sum(np.abs(op(x) - rhs) ** 2))) / rhs_norm
    return x, KrylovReport(it, true_res, true_res <= tol)


def invert_rmu(mu: ScalarField, a: ScalarField, tol: float = 1e-10,
               bounds: ViscosityBounds | None = None, max_iter: int | None = None):
    """Solve R_mu omega = a by preconditioned conjugate gradients.

    Args:
        mu: Viscosity samples.
        a: Mean-zero right-hand side.
        tol: Relative residual target in (0, 1e-4].
        bounds: Declared viscosity bounds (default: min/max of mu).
        max_iter: Iteration cap (default ceil(10 sqrt(mu_hi/mu_lo) ln(1/tol))).

    Returns:
        (omega, KrylovReport).

    Raises:
        ConvergenceError: when the cap is reached before tol.
    """
    if not (0.0 < tol <= 1e-4):
        raise ValueError(f"tol must lie in (0, 1e-4], got {tol}")
    b = _resolve_bounds(mu, bounds)
    _require_mean_zero(a, "a")
    cap = max_cg_iterations(b, tol) if max_iter is None else max_iter
    w_hat, report = invert_rmu_hat(mu.values, fft(a.values), a.grid, tol, cap)
    if not report.converged:
        raise ConvergenceError(
            f"CG stalled at residual {report.residual:.3e} after {report.iterations} iterations",
            report,
        )
    return ScalarField(a.grid, ifft(w_hat)), report


def rayleigh_quotient(mu: ScalarField, omega: ScalarField) -> float:
    """<R_mu omega, omega> / ||omega||^2."""
    a = apply_rmu(mu, omega)
    return float(np.sum(a.values * omega.values) / np.sum(omega.values**2))


def rayleigh_bounds(mu: ScalarField, sample_count: int, seed: int = 0):
    """Min and max Rayleigh quotient over random band-limited mean-zero fields.

    Returns:
        (q_min, q_max).
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    _resolve_bounds(mu, None)
    g = mu.grid
    rng = np.random.default_rng(seed)
    qs = []
    for _ in range(sample_count):
        w = random_field(g, rng, slope=float(rng.uniform(0.0, 2.0)))
        a_hat, _ = rmu_qmu_hat(mu.values, fft(w), g, want_b=False)
        qs.append(float(np.sum(ifft(a_hat) * w) / np.sum(w**2)))
    return min(qs), max(qs)


# ---------------------------------------------------------------------------
# L^p probes


def probe_ensemble(grid: Grid, size: int, seed: int = 0,
                   hotspots: list[tuple[float, float]] | None = None) -> list[np.ndarray]:
    """Deterministic probe ensemble: half smooth random fields, half bumps.

    Bumps are mean-removed Gaussians of width 2-6 grid cells centred at
    random nodes, or at the supplied hotspots (cycled) when given.
    """
    rng = np.random.default_rng(seed)
    n_smooth = size // 2
    out = [random_field(grid, rng, slope=float(rng.uniform(1.0, 3.0))) for _ in range(n_smooth)]
    x1, x2 = grid.mesh
    l = grid.l
    for i in range(size - n_smooth):
        if hotspots:
            cx, cy = hotspots[i % len(hotspots)]
            cx += rng.uniform(-2, 2) * grid.h
            cy += rng.uniform(-2, 2) * grid.h
        else:
            cx, cy = rng.uniform(0, l, size=2)
        width = rng.uniform(2.0, 6.0) * grid.h
        dx = (x1 - cx + 0.5 * l) % l - 0.5 * l
        dy = (x2 - cy + 0.5 * l) % l - 0.5 * l
        bump = np.exp(-(dx**2 + dy**2) / (2 * width**2))
        c = np.where(grid.resolved_mask, fft(bump), 0.0)
        out.append(ifft(c))
    return out


@dataclass(frozen=True)
class ProbeSweep:
    """Result of an L^p sweep.

    Attributes:
        p_values: Exponents probed.
        estimates: Lower-bound estimates of ||R_mu^-1||_{L^p -> L^p}.
        estimate_l2: Estimate at p = 2 (normalization for relative mode).
        onset: Largest p whose (possibly normalized) estimate is at or below
            the threshold, or None when none is.
        ensemble_size: Number of random probe fields.
        relative: Whether scores are normalized by the p = 2 estimate.
    """

    p_values: tuple[float, ...]
    estimates: tuple[float, ...]
    estimate_l2: float
    onset: float | None
    ensemble_size: int
    relative: bool

    @property
    def scores(self) -> tuple[float, ...]:
        if not self.relative:
            return self.estimates
        return tuple(e / self.estimate_l2 for e in self.estimates)


def _lp(v: np.ndarray, p: float) -> float:
    a = np.abs(v)
    top = float(a.max())
    if top == 0.0:
        return 0.0
    return top * float(np.mean((a / top) ** p)) ** (1.0 / p)


class _InverseProbe:
    """R_mu^-1 restricted to resolved modes, with a solve counter."""

    def __init__(self, mu: ScalarField, tol: float):
        self.mu = mu.values
        self.grid = mu.grid
        self.tol = tol
        self.cap = max_cg_iterations(_resolve_bounds(mu, None), tol)
        self.mean = float(np.mean(mu.values))
        self.solves = 0

    def project(self, v: np.ndarray) -> np.ndarray:
        return ifft(np.where(self.grid.resolved_mask, fft(v), 0.0))

    def __call__(self, v: np.ndarray) -> np.ndarray:
        w_hat, rep = invert_rmu_hat(self.mu, fft(v), self.grid, self.tol, self.cap, self.mean)
        self.solves += 1
        if not rep.converged:
            raise ConvergenceError("probe solve failed", rep)
        return ifft(w_hat)


def _power_refine(T: _InverseProbe, g0: np.ndarray, p: float, steps: int) -> float:
    """Nonlinear power iteration for max ||T g||_p / ||g||_p from g0.

    Uses the duality map twice per step (T is self-adjoint).  Returns the
    best ratio seen, which is still a lower bound for the operator norm.
    """
    q = p / (p - 1.0)
    v = g0 / _lp(g0, p)
    best = 0.0
    for _ in range(steps):
        w = T(v)
        best = max(best, _lp(w, p) / _lp(v, p))
        w = w / np.max(np.abs(w))
        z = T(np.sign(w) * np.abs(w) ** (p - 1.0))
        z = z / np.max(np.abs(z))
        v = T.project(np.sign(z) * np.abs(z) ** (q - 1.0))
        nv = _lp(v, p)
        if nv == 0.0:
            break
        v = v / nv
    return best


def _probe_estimates(mu: ScalarField, ps, ensemble, tol: float,
                     power_steps: int, refine_keep: int) -> np.ndarray:
    T = _InverseProbe(mu, tol)
    ratios = np.zeros((len(ensemble), len(ps)))
    for i, gv in enumerate(ensemble):
        w = T(gv)
        for j, p in enumerate(ps):
            ratios[i, j] = _lp(w, p) / _lp(gv, p)
    est = ratios.max(axis=0)
    if power_steps > 0:
        for j, p in enumerate(ps):
            order = np.argsort(-ratios[:, j], kind="stable")[:refine_keep]
            for i in order:
                est[j] = max(est[j], _power_refine(T, ensemble[i], p, power_steps))
    return est


def lp_norm_probe(mu: ScalarField, p: float, ensemble_size: int, seed: int = 0,
                  tol: float = 1e-10, hotspots=None, power_steps: int = 0,
                  refine_keep: int = 2) -> float:
    """Lower-bound estimate of ||R_mu^-1||_{L^p -> L^p}.

    Returns the max over the probe ensemble of ||R_mu^-1 g||_p / ||g||_p,
    optionally improved by a few nonlinear power steps started from the best
    ensemble members.  This is a lower bound for the operator norm, never
    the norm itself.
    """
    if not (2.0 <= p <= 8.0):
        raise ValueError(f"p must lie in [2, 8], got {p}")
    if ensemble_size < 16:
        raise ValueError("ensemble_size must be >= 16")
    ens = probe_ensemble(mu.grid, ensemble_size, seed, hotspots)
    return float(_probe_estimates(mu, [p], ens, tol, power_steps, refine_keep)[0])


def epsilon_probe(mu: ScalarField, p_grid, blowup_threshold: float,
                  ensemble_size: int = 48, seed: int = 0, tol: float = 1e-10,
                  relative: bool = True, hotspots=None, power_steps: int = 12,
                  refine_keep: int = 4) -> ProbeSweep:
    """Sweep p and report the largest p whose estimate stays below threshold.

    Each probe field is solved once for all p.  Since the operator is
    self-adjoint, its L^p norm is nondecreasing in p >= 2 (interpolation
    between p and its dual exponent), so a lower bound at p is also one at
    every larger p; the reported estimates are running maxima.

    Args:
        mu: Viscosity.
        p_grid: Ascending exponents, all > 2.
        blowup_threshold: Cut-off for the score (estimate divided by the
            p = 2 estimate when ``relative``).
        ensemble_size: Random probe fields.
        relative: Normalize by the p = 2 estimate.
        hotspots: Optional bump centres (e.g. checkerboard corners).
        power_steps: Nonlinear power steps per refined candidate.
        refine_keep: Candidates refined per exponent.

    Returns:
        ProbeSweep with the full sweep and the onset value.
    """
    ps = [float(p) for p in p_grid]
    if not ps:
        raise ValueError("p_grid must not be empty")
    if any(p <= 2.0 for p in ps) or any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError("p_grid must be ascending with all entries > 2")
    if ensemble_size < 16:
        raise ValueError("ensemble_size must be >= 16")
    ens = probe_ensemble(mu.grid, ensemble_size, seed, hotspots)
    est = np.maximum.accumulate(
        _probe_estimates(mu, [2.0] + ps, ens, tol, power_steps, refine_keep))
    est2 = float(est[0])
    estimates = tuple(float(e) for e in est[1:])
    scores = [e / est2 for e in estimates] if relative else list(estimates)
    ok = [p for p, s in zip(ps, scores) if s <= blowup_threshold]
    return ProbeSweep(tuple(ps), estimates, est2, max(ok) if ok else None,
                      ensemble_size, relative)
