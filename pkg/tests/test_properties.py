"""Property tests for operator identities and serialization round trips."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from vns.cli_io import SCHEMA, decode_snapshot, encode_snapshot, parse_config_text
from vns.elliptic_ops import apply_p1, apply_p2, apply_rmu
from vns.spectral_core import (
    Grid,
    ScalarField,
    biot_savart,
    divergence,
    fft,
    ifft,
    lp_norm,
    random_field,
    riesz_pair,
    transform,
)
from vns.transport import advect_scalar

GRID = Grid(32)
seeds = st.integers(0, 2**32 - 1)
slopes = st.floats(0.0, 3.0)
SETTINGS = settings(max_examples=25, deadline=None)


def _field(seed, slope=1.0):
    return ScalarField(GRID, random_field(GRID, np.random.default_rng(seed), slope))


def _mu(seed, lo, hi):
    f = random_field(GRID, np.random.default_rng(seed), 2.0)
    f = (f - f.min()) / max(f.max() - f.min(), 1e-300)
    return ScalarField(GRID, lo + (hi - lo) * f)


@SETTINGS
@given(seeds, slopes)
def test_parseval(seed, slope):
    f = _field(seed, slope)
    plancherel = float(np.sum(np.abs(fft(f.values)) ** 2)) * GRID.l**2 / GRID.n**4
    assert math.isclose(lp_norm(f, 2) ** 2, plancherel, rel_tol=1e-12)


@SETTINGS
@given(seeds)
def test_riesz_diagonal_sum_is_identity(seed):
    f = transform(_field(seed))
    s = riesz_pair(1, 1, f).coeffs + riesz_pair(2, 2, f).coeffs
    np.testing.assert_allclose(ifft(s), ifft(f.coeffs), atol=1e-12)


@SETTINGS
@given(seeds)
def test_projection_squares_sum_to_identity(seed):
    w = _field(seed)
    back = apply_p1(apply_p1(w)).values + apply_p2(apply_p2(w)).values
    np.testing.assert_allclose(back, w.values, atol=1e-12)


@SETTINGS
@given(seeds, slopes)
def test_biot_savart_divergence_free(seed, slope):
    u = biot_savart(_field(seed, slope))
    scale = np.sqrt(np.sum(u.x.values**2 + u.y.values**2))
    assert np.linalg.norm(divergence(u).values) <= 1e-12 * max(scale, 1.0)


@SETTINGS
@given(seeds, seeds, st.floats(0.1, 1.0), st.floats(1.0, 10.0))
def test_rmu_self_adjoint_and_bracketed(s1, s2, lo, ratio):
    hi = lo * ratio
    mu = _mu(s1, lo, hi)
    f, g = _field(s2), _field(s2 + 1)
    rf = apply_rmu(mu, f).values
    lhs = float(np.sum(rf * g.values))
    rhs = float(np.sum(f.values * apply_rmu(mu, g).values))
    assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(f.values) * np.linalg.norm(g.values)
    q = float(np.sum(rf * f.values)) / float(np.sum(f.values**2))
    assert lo * (1 - 1e-12) <= q <= hi * (1 + 1e-12)


@SETTINGS
@given(seeds, seeds, st.floats(0.05, 0.95))
def test_monotone_advection_keeps_bounds(s1, s2, courant):
    mu = _mu(s1, 0.5, 2.0)
    u = biot_savart(_field(s2, 2.0))
    umax = float(np.max(u.magnitude()))
    out = advect_scalar(mu, u, courant * GRID.h / umax)
    assert out.values.min() >= 0.5 - 1e-12 and out.values.max() <= 2.0 + 1e-12


@SETTINGS
@given(st.dictionaries(st.sampled_from(["omega", "mu", "theta", "flow_1"]),
                       st.integers(0, 2**31), min_size=1),
       st.floats(0.0, 1e6, allow_nan=False), st.floats(0.1, 100.0))
def test_snapshot_roundtrip(named_seeds, t, l):
    fields = {k: np.random.default_rng(s).standard_normal((8, 8)) for k, s in named_seeds.items()}
    snap = decode_snapshot(encode_snapshot(fields, 8, l, t))
    assert (snap.n, snap.l, snap.t) == (8, l, t)
    assert list(snap.fields) == list(fields)
    for k in fields:
        assert np.array_equal(snap.fields[k], fields[k])


@SETTINGS
@given(st.floats(0.01, 100.0), st.floats(0.05, 0.95), st.integers(0, 1000), st.sampled_from([16, 32, 64]))
def test_config_roundtrip(t_end, cfl, seed, n):
    text = f"init.kind = taylor_green\ngrid.n = {n}\ntime.t_end = {t_end!r}\ntime.cfl = {cfl!r}\ninit.seed = {seed}\n"
    cfg = parse_config_text(text)
    again = parse_config_text(cfg.normalized())
    assert again.values == cfg.values
    assert set(cfg.values) == set(SCHEMA)

