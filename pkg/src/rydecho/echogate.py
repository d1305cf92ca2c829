"""Five-pulse spin-echo controlled-phase gate and the traditional 2pi-pulse gate.

Two atoms: the control (atom 0) with levels ``0, 1, rc`` and the target
(atom 1) with levels ``0, 1, r0, r1``. The pair shifts are ``C6(rc r0)/L^6``
on ``|rc r0>`` and ``C6(rc r1)/L^6`` on ``|rc r1>``; with ``C6(rc r1) < 0``
the latter is the ``-V1`` term with ``V1 > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import atan2, isfinite, pi, sqrt
from typing import Mapping

import numpy as np

from .hilbert import (
    LevelScheme,
    ProductBasis,
    StateVector,
    basis_state,
    build_product_basis,
)
from .pulsemodel import (
    GeometryState,
    InteractionSpec,
    PulseSpec,
    RunResult,
    Sequence,
    Stage,
    WaitSpec,
    pair_interaction,
    run_sequence,
)
from .units import TWO_PI, angular

__all__ = [
    "AnalyticBlockade",
    "CONTROL",
    "COMPUTATIONAL",
    "DerivedFrequencies",
    "GateMatrix",
    "GateParams",
    "SPIN_ECHO_LABELS",
    "TARGET",
    "TRADITIONAL_LABELS",
    "analytic_blockade",
    "build_sequence",
    "build_spin_echo_sequence",
    "build_traditional_sequence",
    "derive_frequencies",
    "gate_basis",
    "ideal_gate",
    "phase_frame",
    "pulse2_block",
    "pulse4_block",
    "pulse4_phase",
    "computational_state",
    "effective_phase",
    "run_input",
    "simulate_gate",
]

CONTROL = 0
TARGET = 1
COMPUTATIONAL = ("00", "01", "10", "11")

SPIN_ECHO_LABELS = ("pulse1", "pulse2", "gap", "pulse3", "wait", "pulse4", "pulse5")
TRADITIONAL_LABELS = ("pulse1", "pulse2pi", "pulse5")


@dataclass(frozen=True)
class GateParams:
    """User-facing gate inputs.

    C6 values are C6/2pi in THz um^6, ``L`` in um, ``omega_c`` is Omega_c/2pi
    in MHz, ``t_gap`` in us, phases in rad. ``wait_branch`` selects
    ``V1 T = phi + 2 pi * wait_branch``.
    """

    c6_rc_r0: float = 56.2
    c6_rc_r1: float = -25.6
    L: float = 8.0
    eta: float = 18.0
    omega_c: float = 10.0
    phi: float = pi
    t_gap: float = 0.0
    phi2: float = 0.0
    phi3: float = 0.0
    wait_branch: int = 0

    def __post_init__(self) -> None:
        for name in ("c6_rc_r0", "c6_rc_r1", "L", "eta", "omega_c", "phi", "t_gap", "phi2", "phi3"):
            if not isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.eta > 1:
            raise ValueError(f"eta must exceed 1, got {self.eta}")
        if not self.c6_rc_r0 > 0:
            raise ValueError(f"c6_rc_r0 must be positive, got {self.c6_rc_r0}")
        if not self.c6_rc_r1 < 0:
            raise ValueError(f"c6_rc_r1 must be negative, got {self.c6_rc_r1}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.omega_c > 0:
            raise ValueError(f"omega_c must be positive, got {self.omega_c}")
        if self.t_gap < 0:
            raise ValueError(f"t_gap must be non-negative, got {self.t_gap}")
        if int(self.wait_branch) != self.wait_branch or self.wait_branch < 0:
            raise ValueError(f"wait_branch must be a non-negative integer, got {self.wait_branch}")


@dataclass(frozen=True)
class DerivedFrequencies:
    """Closed-form frequencies (rad/us) and durations (us) for one gate point."""

    V0: float
    V1: float
    Vplus: float
    omega_c: float
    omega_t2: float
    omega_t3: float
    omega_t4: float
    kappa_ratio: float
    T_wait: float
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t_gap: float
    phi: float
    phi4: float
    blockade_ratio_t2: float
    blockade_ratio_t3: float

    @property
    def rydberg_time(self) -> float:
        """Pulses 2 to 4 including the wait and any gap."""
        return self.t2 + self.t_gap + self.t3 + self.T_wait + self.t4


def pulse4_phase(phi: float, phi2: float, phi3: float, V0: float, t_gap: float) -> float:
    """Laser phase of pulse 4, ``phi + phi2 + phi3 - V0 t_gap`` wrapped to (-pi, pi]."""
    raw = phi + phi2 + phi3 - V0 * t_gap
    wrapped = raw - TWO_PI * np.floor(raw / TWO_PI)
    if wrapped > pi:
        wrapped -= TWO_PI
    return float(wrapped)


def derive_frequencies(p: GateParams) -> DerivedFrequencies:
    V0 = pair_interaction(p.c6_rc_r0, p.L)
    V1 = -pair_interaction(p.c6_rc_r1, p.L)
    Vplus = V0 + V1
    kappa = p.c6_rc_r1 / p.c6_rc_r0
    omega_t2 = Vplus / p.eta
    omega_t3 = Vplus * p.eta
    omega_t4 = abs(kappa) * omega_t2
    omega_c = angular(p.omega_c)
    T_wait = (p.phi + TWO_PI * p.wait_branch) / V1
    if not T_wait > 0:
        raise ValueError(f"wait duration (phi + 2 pi n)/V1 = {T_wait} is not positive")
    return DerivedFrequencies(
        V0=V0,
        V1=V1,
        Vplus=Vplus,
        omega_c=omega_c,
        omega_t2=omega_t2,
        omega_t3=omega_t3,
        omega_t4=omega_t4,
        kappa_ratio=kappa,
        T_wait=T_wait,
        t1=pi / omega_c,
        t2=pi / omega_t2,
        t3=pi / omega_t3,
        t4=pi / omega_t4,
        t5=pi / omega_c,
        t_gap=p.t_gap,
        phi=p.phi,
        phi4=pulse4_phase(p.phi, p.phi2, p.phi3, V0, p.t_gap),
        blockade_ratio_t2=omega_t2 / min(V0, V1),
        blockade_ratio_t3=Vplus / omega_t3,
    )


@dataclass(frozen=True)
class AnalyticBlockade:
    """Eigen-system of the pulse-2 blockade block and the leakage estimates.

    ``v_plus``/``v_minus`` are expressed on ``(|rc 0>, |rc r0>)``. ``alpha`` is
    defined by ``-i|rc 0> = i (sin(alpha) v_plus + cos(alpha) v_minus)``.
    """

    omega_bar_t2: float
    omega_bar_t3: float
    eps_plus: float
    eps_minus: float
    v_plus: np.ndarray = field(repr=False)
    v_minus: np.ndarray = field(repr=False)
    norm_plus: float
    norm_minus: float
    kappa2: float
    kappa3: float
    eps1: float
    eps2: float
    alpha: float

    def tilde_vectors(self, V1T: float) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvectors after the wait, on ``(|rc 0>, |rc r1>)``."""
        half = self.v_plus[0] * self.norm_plus
        phase = -1j * np.exp(1j * V1T)
        vp = np.array([half, phase * self.eps_plus]) / self.norm_plus
        vm = np.array([half, phase * self.eps_minus]) / self.norm_minus
        return vp, vm


def analytic_blockade(d: DerivedFrequencies) -> AnalyticBlockade:
    for name in ("V0", "Vplus", "omega_t2", "omega_t3"):
        if not isfinite(getattr(d, name)):
            raise ValueError(f"{name} must be finite")
    W2, V0 = d.omega_t2, d.V0
    bar2 = sqrt(W2 * W2 + V0 * V0)
    ep = 0.5 * (V0 + bar2)
    em = 0.5 * (V0 - bar2)
    Np = sqrt(W2 * W2 / 4 + ep * ep)
    Nm = sqrt(W2 * W2 / 4 + em * em)
    vp = np.array([W2 / 2, ep], dtype=complex) / Np
    vm = np.array([W2 / 2, em], dtype=complex) / Nm
    kappa2 = W2 / bar2
    bar3 = sqrt(d.omega_t3**2 + d.Vplus**2)
    kappa3 = d.omega_t3 / bar3
    # |rc0> = -(sin a v+ + cos a v-)
    alpha = atan2(-(W2 / 2) / Np, -(W2 / 2) / Nm)
    return AnalyticBlockade(
        omega_bar_t2=bar2,
        omega_bar_t3=bar3,
        eps_plus=ep,
        eps_minus=em,
        v_plus=vp,
        v_minus=vm,
        norm_plus=Np,
        norm_minus=Nm,
        kappa2=kappa2,
        kappa3=kappa3,
        eps1=kappa2**2 * np.sin(pi / (2 * kappa2)) ** 2,
        eps2=1.0 - kappa3**2 * np.sin(pi / (2 * kappa3)) ** 2,
        alpha=alpha,
    )


def pulse2_block(d: DerivedFrequencies, phi2: float = 0.0) -> np.ndarray:
    """Pulse-2 Hamiltonian restricted to ``(|rc 0>, |rc r0>)``."""
    c = 0.5 * d.omega_t2 * np.exp(1j * phi2)
    return np.array([[0.0, np.conj(c)], [c, d.V0]], dtype=complex)


def pulse4_block(d: DerivedFrequencies) -> np.ndarray:
    """Pulse-4 Hamiltonian restricted to ``(|rc 0>, |rc r1>)``."""
    c = 0.5j * d.omega_t4 * np.exp(1j * d.phi4)
    return np.array([[0.0, np.conj(c)], [c, -d.V1]], dtype=complex)


def gate_basis() -> ProductBasis:
    return build_product_basis(
        [LevelScheme(CONTROL, ("0", "1", "rc")), LevelScheme(TARGET, ("0", "1", "r0", "r1"))]
    )


def _interactions(p: GateParams) -> tuple[InteractionSpec, ...]:
    return (
        InteractionSpec((CONTROL, TARGET), p.c6_rc_r0, ("rc", "r0")),
        InteractionSpec((CONTROL, TARGET), p.c6_rc_r1, ("rc", "r1")),
    )


def _geometry(label: str, p: GateParams, spacings: Mapping[str, float] | None) -> GeometryState:
    L = p.L if spacings is None else spacings.get(label, p.L)
    return GeometryState((((CONTROL, TARGET), L),))


def build_spin_echo_sequence(
    p: GateParams,
    d: DerivedFrequencies | None = None,
    spacings: Mapping[str, float] | None = None,
) -> Sequence:
    """Pulses 1-5 with the wait between pulses 3 and 4.

    ``spacings`` optionally overrides the control-target spacing per stage
    label (see ``SPIN_ECHO_LABELS``); the drive frequencies always come from
    ``d``, i.e. from the nominal spacing. The ``gap`` stage is only present
    when ``p.t_gap > 0``.
    """
    d = derive_frequencies(p) if d is None else d
    specs: list[PulseSpec | WaitSpec] = [
        PulseSpec(CONTROL, ("0", "rc"), d.omega_c, d.t1, label="pulse1"),
        PulseSpec(TARGET, ("0", "r0"), d.omega_t2 * np.exp(1j * p.phi2), d.t2, label="pulse2"),
    ]
    if p.t_gap > 0:
        specs.append(WaitSpec(p.t_gap, label="gap"))
    specs += [
        PulseSpec(TARGET, ("r0", "r1"), d.omega_t3 * np.exp(1j * p.phi3), d.t3, label="pulse3"),
        WaitSpec(d.T_wait, label="wait"),
        PulseSpec(TARGET, ("0", "r1"), 1j * d.omega_t4 * np.exp(1j * d.phi4), d.t4, label="pulse4"),
        PulseSpec(CONTROL, ("0", "rc"), d.omega_c, d.t5, label="pulse5"),
    ]
    stages = tuple(Stage(s, _geometry(s.label, p, spacings)) for s in specs)
    return Sequence(gate_basis(), stages, _interactions(p))


def build_traditional_sequence(
    p: GateParams,
    d: DerivedFrequencies | None = None,
    spacings: Mapping[str, float] | None = None,
) -> Sequence:
    """Pulse 1, a 2pi pulse on ``|0>_t <-> |r0>_t`` at Omega_t2, pulse 5."""
    d = derive_frequencies(p) if d is None else d
    specs = [
        PulseSpec(CONTROL, ("0", "rc"), d.omega_c, d.t1, label="pulse1"),
        PulseSpec(TARGET, ("0", "r0"), d.omega_t2, 2 * pi / d.omega_t2, label="pulse2pi"),
        PulseSpec(CONTROL, ("0", "rc"), d.omega_c, d.t5, label="pulse5"),
    ]
    stages = tuple(Stage(s, _geometry(s.label, p, spacings)) for s in specs)
    return Sequence(gate_basis(), stages, _interactions(p))


def build_sequence(
    protocol: str,
    p: GateParams,
    d: DerivedFrequencies | None = None,
    spacings: Mapping[str, float] | None = None,
) -> Sequence:
    if protocol == "spin_echo":
        return build_spin_echo_sequence(p, d, spacings)
    if protocol == "traditional":
        return build_traditional_sequence(p, d, spacings)
    raise ValueError(f"unknown protocol {protocol!r}")


@dataclass(frozen=True, eq=False)
class GateMatrix:
    """4x4 matrix on ``|00>, |01>, |10>, |11>`` (control first).

    ``fidelity`` is the ``|00>``-channel fidelity ``|<00|U_ideal^dag U|00>|^2``
    and ``frobenius`` is ``||U - U_ideal||_F``; both are None for ideal gates.
    """

    matrix: np.ndarray
    fidelity: float | None = None
    frobenius: float | None = None
    leakage: np.ndarray | None = None

    def channel_fidelity(self, ideal: GateMatrix, k: int) -> float:
        return float(abs(np.vdot(ideal.matrix[:, k], self.matrix[:, k])) ** 2)


def ideal_gate(phi: float) -> GateMatrix:
    return GateMatrix(np.diag([-1.0, -1.0, np.exp(-1j * phi), 1.0]).astype(complex))


def phase_frame(g: GateMatrix) -> GateMatrix:
    """Shift the phase of control ``|0>`` by pi (rows ``|00>``, ``|01>`` negated).

    ``ideal_gate(phi)`` becomes ``diag(1, 1, exp(-i phi), 1)``, a controlled
    phase on target ``|0>`` conditioned on control ``|1>``.
    """
    m = g.matrix.copy()
    m[:2, :] *= -1
    return GateMatrix(m, g.fidelity, g.frobenius, g.leakage)


def computational_state(basis: ProductBasis, bits: str) -> StateVector:
    return basis_state(basis, (bits[0], bits[1]))


def simulate_gate(seq: Sequence, phi_ideal: float = pi) -> GateMatrix:
    """Run the four computational inputs and project onto the qubit subspace.

    The effective ideal phase for a sequence built with a gap and laser
    phases is ``phi - V0 t_gap`` (see ``effective_phase``).
    """
    basis = seq.basis
    idx = [basis.index((b[0], b[1])) for b in COMPUTATIONAL]
    cols = []
    leak = []
    for bits in COMPUTATIONAL:
        final = run_sequence(seq, computational_state(basis, bits)).final.amplitudes
        cols.append(final[idx])
        leak.append(1.0 - float(np.sum(np.abs(final[idx]) ** 2)))
    U = np.array(cols).T
    ideal = ideal_gate(phi_ideal).matrix
    fid = float(abs(np.vdot(ideal[:, 0], U[:, 0])) ** 2)
    frob = float(np.linalg.norm(U - ideal))
    return GateMatrix(U, fid, frob, np.array(leak))


def effective_phase(p: GateParams, d: DerivedFrequencies | None = None) -> float:
    """Conditional phase imprinted on ``|10>``: ``phi4 - phi2 - phi3``."""
    d = derive_frequencies(p) if d is None else d
    return d.phi4 - p.phi2 - p.phi3


def run_input(seq: Sequence, bits: str, substeps: int | None = None) -> RunResult:
    return run_sequence(seq, computational_state(seq.basis, bits), substeps)
