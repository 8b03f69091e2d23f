"""Tests for fringe fitting, calibration and derived-quantity helpers."""

import dataclasses
import math

import numpy as np
import pytest

from pathprobe import analysis
from pathprobe import interferometer as itf
from pathprobe.optics import (
    BeamSplitterSpec,
    DephasingSpec,
    RetarderSpec,
    RotationSpec,
)

THETA0 = math.asin(math.sqrt(0.0153))
GRID = np.arange(-22.5, 203.0, 5.625)


def make_config(theta0=THETA0, r_h=0.5285, r_v=0.5285, phi1=0.0, phi2=0.0,
                v_d=1.0, grid=None, **extra):
    return itf.ExperimentConfig(
        rotation=RotationSpec(theta0=theta0),
        beamsplitter=BeamSplitterSpec(reflectivity_h=r_h, reflectivity_v=r_v),
        retarder=RetarderSpec(phi_hv_path1=phi1, phi_hv_path2=phi2),
        dephasing=DephasingSpec(v_d=v_d),
        phase_grid=grid or itf.PhaseGrid(),
        **extra,
    )


def fringe(phases_deg, amplitude, phase_offset_deg, offset):
    return offset + amplitude * np.cos(np.radians(phases_deg - phase_offset_deg))


# ---------------------------------------------------------------- fit_fringe


def test_fit_fringe_exact_roundtrip():
    probs = fringe(GRID, 0.48, 0.0, 0.5)
    fit = analysis.fit_fringe(GRID, probs)
    assert abs(fit.amplitude - 0.48) < 1e-9
    assert abs(fit.phase_offset_deg) < 1e-9
    assert abs(fit.offset - 0.5) < 1e-9
    assert abs(fit.visibility - 0.96) < 1e-9


def test_fit_fringe_random_roundtrips():
    rng = np.random.default_rng(8)
    for _ in range(30):
        amp = rng.uniform(0.05, 0.45)
        off = rng.uniform(amp + 0.02, 1.0)
        phi0 = rng.uniform(-170.0, 170.0)
        probs = fringe(GRID, amp, phi0, off)
        fit = analysis.fit_fringe(GRID, probs)
        assert abs(fit.amplitude - amp) < 1e-8 * max(1.0, amp)
        assert abs(fit.offset - off) < 1e-8
        diff = (fit.phase_offset_deg - phi0 + 180.0) % 360.0 - 180.0
        assert abs(diff) < 1e-6
        assert abs(fit.visibility - amp / off) < 1e-8


def test_fit_fringe_normalizes_amplitude_sign():
    probs = fringe(GRID, -0.3, 20.0, 0.5)
    fit = analysis.fit_fringe(GRID, probs)
    assert fit.amplitude > 0
    diff = (fit.phase_offset_deg - (-160.0) + 180.0) % 360.0 - 180.0
    assert abs(diff) < 1e-6


def test_fit_fringe_constant_data_gives_zero_visibility():
    fit = analysis.fit_fringe(GRID, np.full_like(GRID, 0.37))
    assert abs(fit.amplitude) < 1e-12
    assert abs(fit.offset - 0.37) < 1e-12
    assert abs(fit.visibility) < 1e-12


def test_fit_fringe_input_validation():
    with pytest.raises(ValueError):
        analysis.fit_fringe(GRID[:3], np.ones(3))
    with pytest.raises(ValueError):
        analysis.fit_fringe([0.0, 10.0, 20.0, 30.0], [0.5, 0.6, 0.5, 0.4])
    with pytest.raises(ValueError):
        analysis.fit_fringe(GRID, np.ones(len(GRID)), sigmas=np.zeros(len(GRID)))


def test_fit_fringe_visibility_errors_are_calibrated():
    rng = np.random.default_rng(12)
    sigma = 3e-4
    true_amp, true_off = 0.24, 0.25
    true_vis = true_amp / true_off
    pulls = []
    for _ in range(60):
        probs = fringe(GRID, true_amp, 0.0, true_off)
        noisy = probs + rng.normal(0.0, sigma, size=probs.shape)
        fit = analysis.fit_fringe(GRID, noisy, sigmas=np.full_like(probs, sigma))
        assert fit.visibility_sigma < 0.005
        pulls.append((fit.visibility - true_vis) / fit.visibility_sigma)
    pulls = np.asarray(pulls)
    assert abs(pulls.mean()) < 0.5
    assert 0.6 < pulls.std(ddof=1) < 1.4


def test_fitted_visibility_matches_dephasing_closed_form():
    # P(+) fringe visibility is v_d cos(2 theta0) for a balanced splitter
    rng = np.random.default_rng(23)
    for _ in range(10):
        theta0 = rng.uniform(0.02, 0.3)
        v_d = rng.uniform(0.3, 1.0)
        cfg = make_config(theta0=theta0, r_h=0.5, r_v=0.5, v_d=v_d)
        phases, probs = analysis.fringe_series(itf.sweep(cfg), "+")
        fit = analysis.fit_fringe(phases, probs)
        assert abs(fit.visibility - v_d * math.cos(2 * theta0)) < 1e-9


def test_ideal_sweep_visibility_value():
    cfg = make_config(theta0=0.1225, r_h=0.5, r_v=0.5, v_d=1.0)
    phases, probs = analysis.fringe_series(itf.sweep(cfg), "+")
    fit = analysis.fit_fringe(phases, probs)
    assert abs(fit.visibility - math.cos(0.245)) < 1e-6


# --------------------------------------------------------------- fit_gt_curve


def test_fit_gt_curve_malus_roundtrip():
    angles = np.linspace(-45.0, 45.0, 61)
    y = np.sin(np.radians(angles - 12.3)) ** 2
    fit = analysis.fit_gt_curve(angles, y)
    assert not fit.degenerate
    assert abs(fit.frequency - 2.0) < 1e-6
    # the fitted curve bottoms out at the injected analyzer angle
    fine = np.linspace(-45.0, 45.0, 90001)
    vals = fit.amplitude * np.cos(fit.frequency * np.radians(fine - fit.theta_gt0_deg)) + fit.offset
    assert abs(fine[np.argmin(vals)] - 12.3) < 0.001


def test_fit_gt_curve_positive_cosine():
    angles = np.linspace(-40.0, 40.0, 41)
    y = 0.2 + 0.15 * np.cos(2.0 * np.radians(angles - 3.0))
    fit = analysis.fit_gt_curve(angles, y)
    assert abs(fit.amplitude - 0.15) < 1e-8
    assert abs(fit.frequency - 2.0) < 1e-8
    assert abs(fit.theta_gt0_deg - 3.0) < 1e-6
    assert abs(fit.offset - 0.2) < 1e-8


def test_fit_gt_curve_flat_data_marked_degenerate():
    angles = np.linspace(-45.0, 45.0, 31)
    fit = analysis.fit_gt_curve(angles, np.full_like(angles, 0.25))
    assert fit.degenerate
    assert fit.frequency == 2.0
    assert abs(fit.offset - 0.25) < 1e-12
    with pytest.raises(ValueError):
        analysis.fit_gt_curve(angles[:4], np.ones(4))


# ---------------------------------------------------------- compensation_angle


def dense_compensation_oracle(cfg, port, lo=-5.0, hi=5.0):
    """Bisect the exact scan difference between the two open paths."""

    def diff(deg):
        a = itf.gt_scan(cfg, port, 1, [deg])[0]
        b = itf.gt_scan(cfg, port, 2, [deg])[0]
        return a - b

    f_lo, f_hi = diff(lo), diff(hi)
    assert f_lo * f_hi < 0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        f_mid = diff(mid)
        if f_lo * f_mid <= 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


def gt_fits_for(cfg, port):
    angles = np.linspace(-45.0, 45.0, 181)
    fits = []
    for open_path in (1, 2):
        y = itf.gt_scan(cfg, port, open_path, angles)
        fits.append(analysis.fit_gt_curve(angles, y))
    return fits


def test_compensation_angle_symmetric_config_is_zero():
    cfg = make_config()
    fit1, fit2 = gt_fits_for(cfg, "+")
    # the root search bisects down to 1e-6 degrees
    assert abs(analysis.compensation_angle(fit1, fit2)) < 2e-6
    # identical fits short-circuit to zero
    assert analysis.compensation_angle(fit1, fit1) == 0.0


def test_compensation_angle_matches_dense_oracle():
    cfg = make_config(r_v=0.50)
    for port in itf.PORTS:
        fit1, fit2 = gt_fits_for(cfg, port)
        comp = analysis.compensation_angle(fit1, fit2)
        oracle = dense_compensation_oracle(cfg, port)
        assert abs(comp - oracle) < 0.01
        # a real polarization-dependent splitter sits in a sub-degree band
        assert 0.05 < abs(comp) < 0.3


def test_compensation_angle_no_root_raises():
    angles = np.linspace(-45.0, 45.0, 61)
    up = analysis.fit_gt_curve(angles, 0.5 + 0.1 * np.cos(2 * np.radians(angles)))
    down = analysis.fit_gt_curve(angles, 0.1 + 0.02 * np.cos(2 * np.radians(angles)))
    with pytest.raises(analysis.CalibrationError):
        analysis.compensation_angle(up, down)


# -------------------------------------------------------------------- stokes


def test_stokes_rl_vanishes_without_retarder():
    rng = np.random.default_rng(3)
    for _ in range(10):
        cfg = make_config(
            theta0=rng.uniform(0.02, 0.3),
            r_h=rng.uniform(0.3, 0.7),
            r_v=rng.uniform(0.3, 0.7),
            v_d=rng.uniform(0.2, 1.0),
        )
        for path in (1, 2):
            for port in itf.PORTS:
                assert abs(analysis.stokes_rl(cfg, path, port).s_rl) < 1e-12


def test_stokes_rl_closed_form():
    cfg = make_config(phi1=0.304, phi2=0.0)
    rec = analysis.stokes_rl(cfg, 1, "+")
    assert rec.path == 1 and rec.port == "+"
    want = math.sin(2 * THETA0) * math.sin(0.304)
    assert abs(rec.s_rl - want) < 1e-12
    assert abs(rec.s_rl - 0.07348373835422359) < 1e-12
    # the same retardance on path 2 carries the opposite sign
    cfg2 = make_config(phi1=0.0, phi2=0.304)
    rec2 = analysis.stokes_rl(cfg2, 2, "+")
    assert abs(rec2.s_rl + want) < 1e-12
    # with a balanced splitter the port choice cannot matter
    rec2m = analysis.stokes_rl(cfg2, 2, "-")
    assert abs(rec2.s_rl - rec2m.s_rl) < 1e-12


def test_stokes_rl_flips_with_probe_sign():
    cfg = make_config(phi1=0.2, phi2=-0.1)
    flipped = dataclasses.replace(cfg, rotation=RotationSpec(theta0=-THETA0))
    for path in (1, 2):
        a = analysis.stokes_rl(cfg, path, "+").s_rl
        b = analysis.stokes_rl(flipped, path, "+").s_rl
        assert abs(a + b) < 1e-12
    with pytest.raises(ValueError):
        analysis.stokes_rl(cfg, 3, "+")


def test_phase_offset_from_srl():
    assert analysis.phase_offset_from_srl(0.0, 0.1261) == 0.0
    a = analysis.phase_offset_from_srl(0.0155, 0.1261)
    assert abs(a - 3.52) < 0.005
    assert abs(a - 3.521350445887296) < 1e-12
    b = analysis.phase_offset_from_srl(-0.0003, 0.1261)
    assert abs(b - (-0.07)) < 0.005
    with pytest.raises(ValueError):
        analysis.phase_offset_from_srl(0.01, 0.0)
    with pytest.raises(ValueError):
        analysis.phase_offset_from_srl(0.01, -0.1)


# ------------------------------------------------------------ crossing_point


def exact_crossing(cfg, port, lo=60.0, hi=120.0):
    """Bisect the exact flip-rate curve against the blocked reference."""
    ref = itf.reference_flip_probability(cfg)

    def diff(phase):
        probs = itf.run_once(cfg, phase)
        return itf.conditional_flip_probability(probs, port) - ref

    f_lo = diff(lo)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f_lo * diff(mid) <= 0:
            hi = mid
        else:
            lo, f_lo = mid, f_lo
        if f_lo * diff(lo) > 0:
            f_lo = diff(lo)
    return 0.5 * (lo + hi)


def test_crossing_point_ideal_is_quadrature():
    result = itf.sweep(make_config(v_d=0.9997702900867688))
    for port in itf.PORTS:
        assert abs(analysis.crossing_point(result, port) - 90.0) < 1e-9


def test_crossing_point_shifted_by_differential_retarder():
    delta = math.radians(7.04)
    grid = itf.PhaseGrid(start_deg=-22.5, stop_deg=202.5, steps=226)
    cfg = make_config(phi2=delta, v_d=0.9997702900867688, grid=grid)
    # the crossing moves to 90 + delta/2 for either port
    for port in itf.PORTS:
        got = analysis.crossing_point(itf.sweep(cfg), port)
        oracle = exact_crossing(cfg, port)
        assert abs(oracle - 93.52) < 1e-6
        assert abs(got - oracle) < 0.1


def test_crossing_point_common_mode_retarder_is_inert():
    common = math.radians(5.0)
    cfg = make_config(phi1=common, phi2=common, v_d=0.99)
    for port in itf.PORTS:
        assert abs(analysis.crossing_point(itf.sweep(cfg), port) - 90.0) < 1e-9


def test_crossing_point_requires_probe():
    result = itf.sweep(make_config(theta0=0.0))
    with pytest.raises(analysis.CalibrationError):
        analysis.crossing_point(result, "+")


def test_fringe_series_matches_records():
    result = itf.sweep(make_config())
    phases, probs = analysis.fringe_series(result, "-")
    assert len(phases) == len(result.records)
    for phase, p, rec in zip(phases, probs, result.records):
        assert phase == rec.phase_deg
        assert p == rec.p_minus
    with pytest.raises(ValueError):
        analysis.fringe_series(result, "x")


# ------------------------------------------------- dephasing_for_visibility


def test_dephasing_for_visibility_roundtrip():
    base = make_config(v_d=1.0)
    for port, target in (("-", 0.93), ("+", 0.90)):
        v_d = analysis.dephasing_for_visibility(base, port, target)
        assert 0.0 < v_d <= 1.0
        tuned = dataclasses.replace(base, dephasing=DephasingSpec(v_d=v_d))
        phases, probs = analysis.fringe_series(itf.sweep(tuned), port)
        fit = analysis.fit_fringe(phases, probs)
        assert abs(fit.visibility - target) < 1e-9


def test_dephasing_for_visibility_unreachable_target():
    base = make_config(v_d=1.0)
    # the probe rotation and splitter imbalance cap the visibility below 1
    with pytest.raises(analysis.CalibrationError):
        analysis.dephasing_for_visibility(base, "-", 0.97)
    with pytest.raises(ValueError):
        analysis.dephasing_for_visibility(base, "-", 0.0)
    with pytest.raises(ValueError):
        analysis.dephasing_for_visibility(base, "-", 1.5)
