import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbirthmark import (GridSpec, PropagationError, StadiumSpec, ValidationError, WavepacketSpec,
                        build_domain, canonical_launches, contrast, init_wavepacket,
                        propagate_and_accumulate, step, symmetry_error)
from qbirthmark.stadium import (DensityGrid, SplitOperator, default_dt, default_k,
                                reflection_average, wavenumbers)


def small_grid(n=128, extent=(4.8, 2.8), ny=None):
    return GridSpec(n, ny or n // 2, extent)


def test_spec_validation():
    with pytest.raises(ValidationError):
        StadiumSpec(-1.0, 1.0)
    with pytest.raises(ValidationError):
        StadiumSpec(2.0, 0.0)
    with pytest.raises(ValidationError):
        GridSpec(100, 64)
    assert StadiumSpec(0.0, 1.0).is_circle


def test_circle_mask_and_centre():
    ss = StadiumSpec(0.0, 1.0, wall_height=10.0)
    gs = GridSpec(256, 256, (2.6, 2.6))
    dom = build_domain(ss, gs)
    r = np.hypot(dom.x[None, :], dom.y[:, None])
    assert np.array_equal(dom.mask, r <= 1.0)
    assert np.all(dom.potential[~dom.mask] == 10.0) and np.all(dom.potential[dom.mask] == 0.0)


@pytest.mark.parametrize("L", [0.0, 1.0, 2.0])
def test_mask_area_matches_geometry(L):
    ss = StadiumSpec(L, 1.0, wall_height=1.0)
    gs = GridSpec(1024, 512, (L + 2.8, 2.8))
    dom = build_domain(ss, gs)
    area = dom.mask.sum() * dom.d_area
    assert abs(area - ss.area) < ss.perimeter * max(gs.dx, gs.dy)
    ny, nx = dom.shape
    assert dom.mask[ny // 2, nx // 2]


def test_domain_margin_enforced():
    ss = StadiumSpec(2.0, 1.0)
    ws = WavepacketSpec((0.0, 0.0), (0.0, 0.0), 0.09)
    with pytest.raises(ValidationError):
        build_domain(ss, GridSpec(512, 256, (4.5, 2.5)), ws)
    with pytest.raises(ValidationError):
        build_domain(ss, GridSpec(512, 256, (3.0, 2.8)), ws)
    with pytest.raises(ValidationError):
        build_domain(ss, GridSpec(512, 256, (4.8, 2.8)))  # no wall height, no packet


def test_default_domain_fits_default_packet():
    ss = StadiumSpec()
    for ws in canonical_launches(ss).values():
        dom = build_domain(ss, GridSpec(), ws)
        psi = init_wavepacket(ws, dom)
        assert np.sum(np.abs(psi) ** 2) * dom.d_area == pytest.approx(1.0)
        assert dom.wall_height == pytest.approx(30 * ws.mean_kinetic_energy)


def test_canonical_launches():
    ss = StadiumSpec()
    ls = canonical_launches(ss)
    c = ls["center_57"]
    assert c.center == (0.0, 0.0)
    k = default_k(ss)
    assert c.wavevector[0] == pytest.approx(k * math.cos(math.radians(57)))
    assert c.wavevector[1] == pytest.approx(k * math.sin(math.radians(57)))
    assert ls["offcenter_123"].center == (0.7, 0.3)
    assert 2 * math.pi / k * 40 == pytest.approx(ss.length)


def test_gaussian_without_momentum_is_real():
    ss = StadiumSpec()
    ws = WavepacketSpec((0.1, -0.2), (0.0, 0.0), 0.095)
    dom = build_domain(ss, GridSpec(), ws)
    psi = init_wavepacket(ws, dom)
    assert np.all(psi.imag == 0) and np.all(psi.real >= 0)
    assert np.sum(np.abs(psi) ** 2) * dom.d_area == pytest.approx(1.0, abs=1e-12)


def test_initial_momentum():
    ss = StadiumSpec()
    ws = canonical_launches(ss)["center_57"]
    dom = build_domain(ss, GridSpec(), ws)
    psi = init_wavepacket(ws, dom)
    phi = np.abs(np.fft.fft2(psi)) ** 2
    kx, ky = wavenumbers(dom.grid)
    mx = np.sum(phi * kx[None, :]) / phi.sum()
    my = np.sum(phi * ky[:, None]) / phi.sum()
    assert mx == pytest.approx(ws.wavevector[0], rel=0.02)
    assert my == pytest.approx(ws.wavevector[1], rel=0.02)


def test_wavepacket_preconditions():
    ss = StadiumSpec()
    gs = GridSpec()
    ws_out = WavepacketSpec((2.5, 0.0), (0.0, 0.0), 0.09)
    dom = build_domain(ss, gs, WavepacketSpec((0, 0), (0, 0), 0.09))
    with pytest.raises(ValidationError):
        init_wavepacket(ws_out, dom)
    with pytest.raises(ValidationError):
        init_wavepacket(WavepacketSpec((0, 0), (0, 0), 0.05), dom)  # 5 cells per sigma
    with pytest.raises(ValidationError):
        init_wavepacket(WavepacketSpec((0, 0), (600.0, 0.0), 0.09), dom)


def free_domain(n=256, box=24.0):
    ss = StadiumSpec(0.0, 0.45 * box, wall_height=1.0)
    dom = build_domain(ss, GridSpec(n, n, (box, box)))
    return dataclasses.replace(dom, potential=np.zeros(dom.shape), mask=np.ones(dom.shape, bool))


def test_free_gaussian_spreading():
    dom = free_domain(512, 20.0)
    sigma = 0.5
    ws = WavepacketSpec((0.0, 0.0), (0.0, 0.0), sigma)
    psi = init_wavepacket(ws, dom)
    prop = SplitOperator(dom, 0.01)
    for _ in range(150):
        psi = prop.step(psi)
    p = np.abs(psi) ** 2 * dom.d_area
    var_x = np.sum(p * dom.x[None, :] ** 2)
    t = 1.5
    expect = sigma ** 2 * (1 + (t / (2 * sigma ** 2)) ** 2)
    assert var_x == pytest.approx(expect, rel=1e-4)


def test_periodic_plane_wave_gets_global_phase():
    dom = free_domain(64, 8.0)
    kx, ky = wavenumbers(dom.grid)
    mode = np.exp(1j * (kx[3] * dom.x[None, :] + ky[5] * dom.y[:, None]))
    out = step(mode, dom, 0.07)
    ratio = out / mode
    assert np.allclose(ratio, ratio[0, 0], atol=1e-12)
    assert abs(ratio[0, 0]) == pytest.approx(1.0)


def test_norm_conserved_per_step():
    ss = StadiumSpec()
    ws = canonical_launches(ss)["offcenter_123"]
    dom = build_domain(ss, GridSpec(), ws)
    psi = init_wavepacket(ws, dom)
    prop = SplitOperator(dom, default_dt(ws))
    n0 = np.sum(np.abs(psi) ** 2)
    for _ in range(20):
        psi = prop.step(psi)
        assert abs(np.sum(np.abs(psi) ** 2) / n0 - 1) < 1e-12


def test_non_finite_aborts():
    dom = free_domain(32, 4.0)
    psi = np.zeros(dom.shape, complex)
    psi[3, 3] = np.nan
    with pytest.raises(PropagationError):
        step(psi, dom, 0.1)
    with pytest.raises(ValidationError):
        SplitOperator(dom, 0.0)


def test_short_run_invariants():
    ss = StadiumSpec()
    ws = canonical_launches(ss)["center_57"]
    run = propagate_and_accumulate(ws, ss, GridSpec(), 0.02, 0.005, record_every=5,
                                   snapshot_times=(0.0, 0.01))
    for dg in (run.density, run.density_full):
        assert dg.mass() == pytest.approx(1.0, abs=1e-6)
        assert np.all(dg.values >= 0)
        assert np.all(dg.values[~dg.mask] == 0)
    assert run.max_leakage < 1e-3
    assert run.max_norm_drift < 1e-10
    assert run.density.window[0] == pytest.approx(0.005, abs=run.dt)
    assert set(run.snapshots) == {0.0, 0.01}
    assert len(run.inverse_ipr) == len(run.participation) > 0
    assert run.inverse_ipr.times[-1] == pytest.approx(0.02)


def test_run_validation():
    ss = StadiumSpec()
    ws = canonical_launches(ss)["center_57"]
    with pytest.raises(ValidationError):
        propagate_and_accumulate(ws, ss, GridSpec(), 0.01, 0.02)
    with pytest.raises(ValidationError):
        propagate_and_accumulate(ws, ss, GridSpec(), 0.01, 0.0, snapshot_times=(0.5,))


def grid_of(values):
    v = np.asarray(values, float)
    return DensityGrid(v, np.ones(v.shape, bool), (0.0, 1.0), 1.0, 1.0, v.shape)


def test_symmetry_error_toy_cases():
    sym = np.array([[1.0, 2.0, 2.0, 1.0], [3.0, 4.0, 4.0, 3.0], [3.0, 4.0, 4.0, 3.0], [1.0, 2.0, 2.0, 1.0]])
    assert symmetry_error(grid_of(sym)) == 0.0
    spike = np.zeros((2, 2))
    spike[0, 0] = 1.0
    # group average puts 1/4 in each cell: |1 - 1/4| + 3 * 1/4 = 3/2
    assert symmetry_error(grid_of(spike)) == pytest.approx(1.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(1e-6, 1e6))
def test_symmetry_error_invariances(seed, scale):
    v = np.random.default_rng(seed).random((6, 8))
    e = symmetry_error(v)
    assert symmetry_error(v[::-1]) == pytest.approx(e)
    assert symmetry_error(v[:, ::-1]) == pytest.approx(e)
    assert symmetry_error(scale * v) == pytest.approx(e)
    assert symmetry_error(reflection_average(v)) == pytest.approx(0.0, abs=1e-12)


def test_contrast_closed_forms():
    assert contrast(grid_of(np.full((4, 5), 3.0))) == 0.0
    spike = np.zeros((4, 5))
    spike[1, 2] = 7.0
    assert contrast(grid_of(spike)) == pytest.approx(math.sqrt(19))


def test_time_unit_mapping():
    gs = GridSpec(length_unit_nm=25.0)
    # m_e (25 nm)^2 / hbar
    assert gs.time_unit_fs == pytest.approx(9.1093837e-31 * 6.25e-16 / 1.054571817e-34 * 1e15, rel=1e-6)
