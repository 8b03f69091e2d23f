"""Tests for the optical element constructors."""

import numpy as np
import pytest

from pathprobe import optics, qstate


def test_rotation_matrix_columns():
    theta = 0.3
    r = optics.rotation_matrix(theta)
    c, s = np.cos(theta), np.sin(theta)
    # H maps to cos|H> + sin|V>, V maps to -sin|H> + cos|V>
    assert np.allclose(r @ np.array([1.0, 0.0]), [c, s])
    assert np.allclose(r @ np.array([0.0, 1.0]), [-s, c])
    assert qstate.is_unitary(r)


def test_beam_splitter_unitary_structure():
    spec = optics.BeamSplitterSpec(reflectivity_h=0.6, reflectivity_v=0.4)
    u = optics.beam_splitter_unitary(spec)
    assert qstate.is_unitary(u)
    th, rh = np.sqrt(0.4), np.sqrt(0.6)
    # H sector: rows/cols 0 and 2
    assert np.isclose(u[0, 0], th)
    assert np.isclose(u[0, 2], 1j * rh)
    assert np.isclose(u[2, 0], 1j * rh)
    assert np.isclose(u[2, 2], th)
    # no polarization mixing
    assert u[0, 1] == 0 and u[0, 3] == 0 and u[2, 1] == 0 and u[2, 3] == 0


def test_balanced_beam_splitter_splits_evenly():
    u = optics.beam_splitter_unitary(optics.BeamSplitterSpec())
    psi = u @ qstate.basis_ket(4, qstate.joint_index(1, qstate.V))
    probs = np.abs(psi) ** 2
    assert np.allclose(probs, [0.0, 0.5, 0.0, 0.5])


@pytest.mark.parametrize("field,value", [
    ("reflectivity_h", 0.0),
    ("reflectivity_h", 1.0),
    ("reflectivity_v", -0.1),
    ("reflectivity_v", 1.2),
])
def test_beam_splitter_rejects_out_of_range(field, value):
    with pytest.raises(ValueError, match=f"{field} out of range"):
        optics.BeamSplitterSpec(**{field: value})


def test_rotation_spec_range():
    optics.RotationSpec(theta0=1.5)
    with pytest.raises(ValueError, match="theta0 out of range"):
        optics.RotationSpec(theta0=np.pi / 2)


def test_dephasing_spec_range():
    optics.DephasingSpec(v_d=0.0)
    optics.DephasingSpec(v_d=1.0)
    with pytest.raises(ValueError, match="v_d out of range"):
        optics.DephasingSpec(v_d=1.01)
    with pytest.raises(ValueError, match="v_d out of range"):
        optics.DephasingSpec(v_d=-0.01)


def test_phase_shifter_acts_on_path2_only():
    phi = 0.8
    u = optics.phase_shifter_unitary(phi)
    assert qstate.is_unitary(u)
    expected = np.diag([1.0, 1.0, np.exp(-1j * phi), np.exp(-1j * phi)])
    assert np.allclose(u, expected)


def test_hwp_rotation_unitary_signs():
    theta0 = 0.2
    u = optics.hwp_rotation_unitary(optics.RotationSpec(theta0=theta0))
    assert qstate.is_unitary(u)
    r_plus = optics.rotation_matrix(theta0)
    r_minus = optics.rotation_matrix(-theta0)
    assert np.allclose(u[0:2, 0:2], r_plus)
    assert np.allclose(u[2:4, 2:4], r_minus)
    assert np.allclose(u[0:2, 2:4], 0.0)


def test_elliptical_retarder_unitary():
    spec = optics.RetarderSpec(phi_hv_path1=0.3, phi_hv_path2=-0.5)
    u = optics.elliptical_retarder_unitary(spec)
    assert qstate.is_unitary(u)
    expected = np.diag([1.0, np.exp(0.3j), 1.0, np.exp(-0.5j)])
    assert np.allclose(u, expected)


def test_dephasing_kraus_completeness_and_action():
    for v_d in (0.0, 0.37, 1.0):
        ops = optics.dephasing_kraus(optics.DephasingSpec(v_d=v_d))
        total = sum(k.conj().T @ k for k in ops)
        assert np.allclose(total, np.eye(4), atol=1e-12)
        rho = np.full((4, 4), 0.25, dtype=complex)
        out = qstate.evolve_channel(rho, ops)
        # path-diagonal blocks untouched, cross-path coherence scaled by v_d
        assert np.isclose(out[0, 0], 0.25)
        assert np.isclose(out[0, 2], 0.25 * v_d)
        assert np.isclose(out[1, 3], 0.25 * v_d)


def test_analyzer_axis_vectors():
    h_axis = optics.analyzer_axis(np.radians(10.0), "H")
    v_axis = optics.analyzer_axis(np.radians(10.0), "V")
    assert np.isclose(np.vdot(h_axis, v_axis), 0.0)
    assert np.allclose(h_axis, [np.cos(np.radians(10)), np.sin(np.radians(10))])
    assert np.allclose(v_axis, [-np.sin(np.radians(10)), np.cos(np.radians(10))])
    with pytest.raises(ValueError):
        optics.analyzer_axis(0.0, "D")


def test_polarizer_projector_is_projector():
    for axis in ("H", "V"):
        proj = optics.polarizer_projector(optics.PolarizerSpec(theta_gt=0.25, axis=axis))
        assert proj.shape == (4, 4)
        assert qstate.is_projector(proj)
    p_h = optics.polarizer_projector(optics.PolarizerSpec(theta_gt=0.0, axis="H"))
    p_v = optics.polarizer_projector(optics.PolarizerSpec(theta_gt=0.0, axis="V"))
    assert np.allclose(p_h + p_v, np.eye(4))


def test_blocker_projector_semantics():
    # argument names the blocked path; the projector keeps the other one
    b1 = optics.blocker_projector(1)
    assert np.allclose(b1, np.diag([0.0, 0.0, 1.0, 1.0]))
    b2 = optics.blocker_projector(2)
    assert np.allclose(b2, np.diag([1.0, 1.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        optics.blocker_projector(3)


def test_random_rotations_compose():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.uniform(-1.0, 1.0, size=2)
        left = optics.rotation_matrix(a) @ optics.rotation_matrix(b)
        assert np.allclose(left, optics.rotation_matrix(a + b), atol=1e-12)
