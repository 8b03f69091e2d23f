"""Circuit assembly and exact output probabilities for the two-path probe.

The simulated experiment: a V-polarized photon enters one input port of the
entry beam splitter, the two paths apply small opposite polarization
rotations (+theta0 / -theta0), optional residual retarder phases and a
relative phase phi, path coherence is optionally reduced by a dephasing
channel, and the paths recombine on the exit beam splitter.  Each output
port carries an analyzer separating the (compensated) H and V directions.

Port naming: output path 2 is the "+" port (bright fringe at phi = 0) and
output path 1 is the "-" port.  Element order per run:

    entry BS -> blocker -> rotations -> retarders -> phase -> dephasing
    -> exit BS -> analyzers

``blocked`` arguments name the path that is *blocked* ("path1" blocks
path 1, leaving only path 2 open).  Counting datasets elsewhere label runs
by the *open* path instead; ``montecarlo`` documents the mapping.

A photon detected H at a port has had its polarization flipped by the path
rotations; the ratio of that conditional flip probability to the single-path
reference level (the mean of the four blocked-run flip probabilities) is the
squared path weight reported as ``a2_plus`` / ``a2_minus``.  Values above 1
mean the flip probability exceeds what a fully localized photon would show.

Interfaces use degrees for the interferometer phase and analyzer settings;
``optics`` specs keep their radian fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import optics, qstate
from .optics import (
    BeamSplitterSpec,
    DephasingSpec,
    PolarizerSpec,
    RetarderSpec,
    RotationSpec,
)

PORT_PLUS = "+"
PORT_MINUS = "-"
PORTS = (PORT_PLUS, PORT_MINUS)

BLOCK_LABELS = ("none", "path1", "path2")

# Output path index per port in the fixed basis ordering (path 1, path 2).
_PORT_PATH = {PORT_MINUS: 1, PORT_PLUS: 2}

_A2_PORT_FLOOR = 1e-9


class UndefinedConditionalError(ValueError):
    """A conditional quantity was requested where its condition has zero weight."""


@dataclass(frozen=True)
class PhaseGrid:
    """Evenly spaced interferometer phases in degrees, endpoints included."""

    start_deg: float = -22.5
    stop_deg: float = 202.5
    steps: int = 41

    def __post_init__(self):
        if not (isinstance(self.steps, int) and self.steps >= 2):
            raise ValueError(f"steps out of range: {self.steps!r} (need an int >= 2)")
        if not (math.isfinite(self.start_deg) and math.isfinite(self.stop_deg)):
            raise ValueError("phase grid endpoints must be finite")
        if self.stop_deg <= self.start_deg:
            raise ValueError(f"stop_deg {self.stop_deg} must exceed start_deg {self.start_deg}")

    def phases_deg(self) -> tuple[float, ...]:
        step = (self.stop_deg - self.start_deg) / (self.steps - 1)
        return tuple(self.start_deg + i * step for i in range(self.steps))


@dataclass(frozen=True)
class ExperimentConfig:
    """Physical model plus counting protocol for one experiment.

    ``gt_compensation_plus`` / ``gt_compensation_minus`` are the analyzer
    offset angles per output port, in degrees.  ``photon_rate`` and the dark
    rates are per second, ``duration`` is the length of one counting window
    in seconds.
    """

    rotation: RotationSpec = field(default_factory=RotationSpec)
    beamsplitter: BeamSplitterSpec = field(default_factory=BeamSplitterSpec)
    retarder: RetarderSpec = field(default_factory=RetarderSpec)
    dephasing: DephasingSpec = field(default_factory=DephasingSpec)
    gt_compensation_plus: float = 0.0
    gt_compensation_minus: float = 0.0
    photon_rate: float = 110000.0
    dark_rate_plus: float = 400.0
    dark_rate_minus: float = 800.0
    duration: float = 100.0
    phase_grid: PhaseGrid = field(default_factory=PhaseGrid)
    seed: int = 1

    def __post_init__(self):
        for key in ("gt_compensation_plus", "gt_compensation_minus"):
            value = getattr(self, key)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValueError(f"{key} out of range: {value!r}")
        if not (isinstance(self.photon_rate, (int, float)) and self.photon_rate > 0):
            raise ValueError(f"photon_rate out of range: {self.photon_rate!r} (must be > 0)")
        for key in ("dark_rate_plus", "dark_rate_minus"):
            value = getattr(self, key)
            if not (isinstance(value, (int, float)) and value >= 0):
                raise ValueError(f"{key} out of range: {value!r} (must be >= 0)")
        if not (isinstance(self.duration, (int, float)) and self.duration > 0):
            raise ValueError(f"duration out of range: {self.duration!r} (must be > 0)")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValueError(f"seed out of range: {self.seed!r} (must be an int)")

    def dark_rate(self, port: str) -> float:
        _check_port(port)
        return self.dark_rate_plus if port == PORT_PLUS else self.dark_rate_minus

    def gt_compensation(self, port: str) -> float:
        _check_port(port)
        return self.gt_compensation_plus if port == PORT_PLUS else self.gt_compensation_minus


@dataclass(frozen=True)
class OutcomeProbabilities:
    """Joint port/analyzer outcome probabilities for one run.

    The four probabilities sum to ``survival`` (1 unless a path is blocked);
    conditional quantities divide by the port probability.
    """

    p_plus_h: float
    p_plus_v: float
    p_minus_h: float
    p_minus_v: float
    survival: float

    def port_probability(self, port: str) -> float:
        _check_port(port)
        if port == PORT_PLUS:
            return self.p_plus_h + self.p_plus_v
        return self.p_minus_h + self.p_minus_v


@dataclass(frozen=True)
class DelocalizationRecord:
    """One phase point of a sweep; sigmas are zero for exact-model sweeps.

    ``p_h_given_*`` and ``a2_*`` are None where the conditional quantity is
    undefined (port probability below 1e-9, or a zero reference for a2).
    """

    phase_deg: float
    p_plus: float
    p_minus: float
    p_h_given_plus: float | None
    p_h_given_minus: float | None
    a2_plus: float | None
    a2_minus: float | None
    sigma_p_plus: float = 0.0
    sigma_p_minus: float = 0.0
    sigma_ph_plus: float = 0.0
    sigma_ph_minus: float = 0.0
    sigma_a2_plus: float = 0.0
    sigma_a2_minus: float = 0.0


@dataclass(frozen=True)
class SweepResult:
    """Records in grid order plus the single-path reference used for a2."""

    records: tuple[DelocalizationRecord, ...]
    reference_flip_prob: float
    reference_sigma: float = 0.0

    def __post_init__(self):
        phases = [r.phase_deg for r in self.records]
        if any(b <= a for a, b in zip(phases, phases[1:])):
            raise ValueError("record phases must be strictly increasing")

    def phases_deg(self) -> tuple[float, ...]:
        return tuple(r.phase_deg for r in self.records)


def _check_port(port: str) -> None:
    if port not in PORTS:
        raise ValueError(f"port must be '+' or '-', got {port!r}")


def _check_blocked(blocked: str) -> None:
    if blocked not in BLOCK_LABELS:
        raise ValueError(f"blocked must be one of {BLOCK_LABELS}, got {blocked!r}")


def final_state(config: ExperimentConfig, phase_deg: float, blocked: str = "none") -> np.ndarray:
    """Density operator just after the exit beam splitter.

    Subnormalized when a path is blocked; its trace is the survival
    probability.
    """
    _check_blocked(blocked)
    if not (isinstance(phase_deg, (int, float)) and math.isfinite(phase_deg)):
        raise ValueError(f"phase_deg out of range: {phase_deg!r}")
    bs = optics.beam_splitter_unitary(config.beamsplitter)
    rho = qstate.pure_density(qstate.basis_ket(4, qstate.joint_index(1, qstate.V)))
    rho = qstate.evolve_unitary(rho, bs)
    if blocked != "none":
        rho = qstate.apply_projector(rho, optics.blocker_projector(int(blocked[-1])))
    rho = qstate.evolve_unitary(rho, optics.hwp_rotation_unitary(config.rotation))
    rho = qstate.evolve_unitary(rho, optics.elliptical_retarder_unitary(config.retarder))
    rho = qstate.evolve_unitary(rho, optics.phase_shifter_unitary(math.radians(phase_deg)))
    rho = qstate.evolve_channel(rho, optics.dephasing_kraus(config.dephasing))
    rho = qstate.evolve_unitary(rho, bs)
    return rho


def port_projector(port: str, analyzer_deg: float, axis: str) -> np.ndarray:
    """Projector onto (output path of ``port``) x (analyzer axis)."""
    _check_port(port)
    path = _PORT_PATH[port]
    keep = np.zeros((2, 2), dtype=complex)
    keep[path - 1, path - 1] = 1.0
    spec = PolarizerSpec(theta_gt=math.radians(analyzer_deg), axis=axis)
    a = optics.analyzer_axis(spec.theta_gt, spec.axis)
    return qstate.tensor_product(keep, np.outer(a, a.conj()))


def run_once(
    config: ExperimentConfig,
    phase_deg: float,
    blocked: str = "none",
    analyzer_plus_deg: float | None = None,
    analyzer_minus_deg: float | None = None,
) -> OutcomeProbabilities:
    """Exact outcome probabilities of one run at one phase.

    Analyzer angles default to the per-port compensation angles of the
    config; passing explicit values supports analyzer-angle scans.
    """
    rho = final_state(config, phase_deg, blocked)
    d_plus = config.gt_compensation_plus if analyzer_plus_deg is None else analyzer_plus_deg
    d_minus = config.gt_compensation_minus if analyzer_minus_deg is None else analyzer_minus_deg
    probs = {}
    for port, delta in ((PORT_PLUS, d_plus), (PORT_MINUS, d_minus)):
        for axis in ("H", "V"):
            probs[(port, axis)] = qstate.outcome_probability(rho, port_projector(port, delta, axis))
    return OutcomeProbabilities(
        p_plus_h=probs[(PORT_PLUS, "H")],
        p_plus_v=probs[(PORT_PLUS, "V")],
        p_minus_h=probs[(PORT_MINUS, "H")],
        p_minus_v=probs[(PORT_MINUS, "V")],
        survival=float(np.trace(rho).real),
    )


def conditional_flip_probability(probs: OutcomeProbabilities, port: str) -> float:
    """P(H | port): probability that a photon at the port was flipped to H."""
    _check_port(port)
    total = probs.port_probability(port)
    if total <= 0.0:
        raise UndefinedConditionalError(f"port {port} has zero probability")
    p_h = probs.p_plus_h if port == PORT_PLUS else probs.p_minus_h
    return p_h / total


def reference_flip_probability(config: ExperimentConfig) -> float:
    """Mean of the four blocked-run conditional flip probabilities.

    Blocked runs are phase independent, so the mean is over
    (open path in {1, 2}) x (port in {+, -}) at phi = 0.  Equals
    sin^2(theta0) exactly for a polarization-independent beam splitter with
    zero compensation angles.
    """
    values = []
    for blocked in ("path1", "path2"):
        probs = run_once(config, 0.0, blocked)
        for port in PORTS:
            values.append(conditional_flip_probability(probs, port))
    return sum(values) / len(values)


def a_squared_from_flip(p_h_given: float, reference: float) -> float:
    """Conditional flip probability over the single-path reference level.

    1 means the flip rate of a fully localized photon; 0 means the probed
    path carried no weight; values above 1 exceed the localized level.
    """
    if not (isinstance(p_h_given, (int, float)) and 0.0 <= p_h_given <= 1.0):
        raise ValueError(f"p_h_given out of range: {p_h_given!r}")
    if not (isinstance(reference, (int, float)) and reference > 0.0):
        raise ValueError(f"reference out of range: {reference!r} (must be > 0)")
    return p_h_given / reference


def normalization_residual(a2_plus: float, p_plus: float, a2_minus: float, p_minus: float) -> float:
    """a2(+)*P(+) + a2(-)*P(-) - 1; zero when the port-weighted ratios close."""
    for name, value in (("p_plus", p_plus), ("p_minus", p_minus)):
        if not (isinstance(value, (int, float)) and -qstate.ATOL <= value <= 1.0 + qstate.ATOL):
            raise ValueError(f"{name} out of range: {value!r}")
    for name, value in (("a2_plus", a2_plus), ("a2_minus", a2_minus)):
        if not (isinstance(value, (int, float)) and value >= 0.0):
            raise ValueError(f"{name} out of range: {value!r}")
    return a2_plus * p_plus + a2_minus * p_minus - 1.0


def path_sign_operator() -> np.ndarray:
    """diag(1, -1) on the path space: +1 for path 1, -1 for path 2."""
    return np.diag([1.0, -1.0]).astype(complex)


def weak_a_squared(path_state, projector) -> float:
    """Squared path-sign value conditioned on a post-selected outcome.

    Tr(E S rho S) / Tr(E rho) with S = diag(1, -1) on the 2-dim path space
    and E the post-selection projector.
    """
    rho = qstate.validate_density(path_state)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 path state, got shape {rho.shape}")
    e = np.asarray(projector, dtype=complex)
    if e.shape != (2, 2) or not qstate.is_projector(e):
        raise ValueError("post-selection operator must be a 2x2 projector")
    weight = float(np.trace(e @ rho).real)
    if weight <= 0.0:
        raise UndefinedConditionalError("post-selected outcome has zero probability")
    s = path_sign_operator()
    return float(np.trace(e @ s @ rho @ s).real) / weight


def counterfactual_ratio(p: float) -> float:
    """(1 - p) / p for an outcome probability p in (0, 1]."""
    if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
        raise ValueError(f"p out of range: {p!r} (must be in [0, 1])")
    if p == 0.0:
        raise UndefinedConditionalError("outcome probability 0 leaves the ratio undefined")
    return (1.0 - p) / p


def _record(
    phase_deg: float, probs: OutcomeProbabilities, reference: float
) -> DelocalizationRecord:
    fields: dict[str, float | None] = {}
    for port, key in ((PORT_PLUS, "plus"), (PORT_MINUS, "minus")):
        total = probs.port_probability(port)
        if total < _A2_PORT_FLOOR:
            fields[f"p_h_given_{key}"] = None
            fields[f"a2_{key}"] = None
            continue
        p_h = conditional_flip_probability(probs, port)
        fields[f"p_h_given_{key}"] = p_h
        fields[f"a2_{key}"] = p_h / reference if reference > 0.0 else None
    return DelocalizationRecord(
        phase_deg=phase_deg,
        p_plus=probs.port_probability(PORT_PLUS),
        p_minus=probs.port_probability(PORT_MINUS),
        **fields,
    )


def sweep(config: ExperimentConfig) -> SweepResult:
    """Exact-model sweep over the config's phase grid, in grid order."""
    reference = reference_flip_probability(config)
    records = tuple(
        _record(phase, run_once(config, phase), reference)
        for phase in config.phase_grid.phases_deg()
    )
    return SweepResult(records=records, reference_flip_prob=reference)


def gt_scan(
    config: ExperimentConfig, port: str, open_path: int, analyzer_degs
) -> np.ndarray:
    """Blocked-run detection probability along a scanned analyzer axis.

    Returns P(transmitted | port) for each analyzer angle (degrees) with only
    ``open_path`` open.  The denominator is the port probability, so the
    curve is the Malus-type response the port's analyzer calibration uses.
    """
    _check_port(port)
    if open_path not in (1, 2):
        raise ValueError(f"open_path must be 1 or 2, got {open_path!r}")
    blocked = "path2" if open_path == 1 else "path1"
    rho = final_state(config, 0.0, blocked)
    path = _PORT_PATH[port]
    keep = np.zeros((2, 2), dtype=complex)
    keep[path - 1, path - 1] = 1.0
    port_total = float(np.trace(qstate.tensor_product(keep, np.eye(2)) @ rho).real)
    if port_total <= 0.0:
        raise UndefinedConditionalError(f"port {port} has zero probability")
    out = []
    for deg in np.asarray(analyzer_degs, dtype=float):
        p = qstate.outcome_probability(rho, port_projector(port, float(deg), "H"))
        out.append(p / port_total)
    return np.asarray(out)
