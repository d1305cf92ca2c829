"""Time-reversed dynamics of Rydberg-dressed atoms in a 1D lattice.

Each atom carries levels ``0, 1, r0, r1``. The forward generator dresses
``|1> <-> |r0>``; after a microwave transfer ``r0 -> r1`` the backward
generator dresses ``|1> <-> |r1>`` with ``(Omega, Delta) * kappa`` and the
``C6(r1 r1)`` interaction. Since ``kappa < 0`` the backward generator is
``-|kappa|`` times the relabelled forward one, so evolving for
``t0/|kappa|`` undoes the forward evolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import pi
from typing import Mapping

import numpy as np

from .hilbert import (
    HermitianOperator,
    LevelScheme,
    ProductBasis,
    StateVector,
    build_product_basis,
    embed_operator,
    evolve,
    evolve_samples,
    overlap_fidelity,
)
from .pulsemodel import pair_interaction
from .units import angular

__all__ = [
    "DRESSING",
    "DressingParams",
    "EchoResult",
    "EchoSchedule",
    "LEVELS",
    "LatticeConfig",
    "NEAR_RESONANT",
    "ONE",
    "UP",
    "ObservableSeries",
    "dressing_hamiltonian",
    "echo_residual",
    "lattice_basis",
    "magnetization",
    "microwave_swap",
    "population_one",
    "regime",
    "run_echo",
    "swap_matrix",
    "swap_hamiltonian",
    "uniform_product_state",
]

LEVELS = ("0", "1", "r0", "r1")
MAX_ATOMS = 4
SWAP_RATIO_WARN = 5.0
UP = np.array([1.0, 1.0, 0.0, 0.0], dtype=complex) / np.sqrt(2.0)
ONE = np.array([0.0, 1.0, 0.0, 0.0], dtype=complex)


@dataclass(frozen=True)
class LatticeConfig:
    """``N`` atoms at positions ``k * lattice_constant`` (um)."""

    N: int = 4
    lattice_constant: float = 10.0
    max_atoms: int = MAX_ATOMS

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.N > self.max_atoms:
            raise ValueError(f"N = {self.N} exceeds the cap of {self.max_atoms} atoms")
        if not self.lattice_constant > 0:
            raise ValueError("lattice_constant must be positive")

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.N) * self.lattice_constant

    def spacing(self, j: int, k: int) -> float:
        return abs(j - k) * self.lattice_constant


@dataclass(frozen=True)
class DressingParams:
    """Omega/2pi and Delta/2pi in MHz, C6/2pi in THz um^6."""

    omega: float = 5.0
    delta: float = 50.0
    c6_00: float = 56.2
    c6_11: float = -52.6

    def __post_init__(self) -> None:
        if not self.kappa < 0:
            raise ValueError(f"need C6(r1r1)/C6(r0r0) < 0, got {self.kappa}")

    @property
    def kappa(self) -> float:
        return self.c6_11 / self.c6_00


@dataclass(frozen=True)
class EchoSchedule:
    """Forward duration ``t0`` (us) and how ``r0 -> r1`` is performed.

    ``swap="ideal"`` relabels instantly; ``swap="finite"`` applies a
    microwave pi pulse with Omega_mu/2pi = ``omega_mu`` MHz.
    """

    t0: float
    swap: str = "ideal"
    omega_mu: float | None = None

    def __post_init__(self) -> None:
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if self.swap not in ("ideal", "finite"):
            raise ValueError(f"unknown swap mode {self.swap!r}")
        if self.swap == "finite" and not (self.omega_mu and self.omega_mu > 0):
            raise ValueError("finite swap needs a positive omega_mu")

    def backward_duration(self, kappa: float) -> float:
        return self.t0 / abs(kappa)

    @property
    def swap_duration(self) -> float:
        if self.swap == "ideal":
            return 0.0
        return pi / angular(self.omega_mu)


DRESSING = (LatticeConfig(4, 10.0), DressingParams(omega=5.0, delta=50.0))
NEAR_RESONANT = (LatticeConfig(4, 16.0), DressingParams(omega=5.0, delta=2.5))


def regime(name: str) -> tuple[LatticeConfig, DressingParams]:
    if name == "dressing":
        return DRESSING
    if name == "near_resonant":
        return NEAR_RESONANT
    raise ValueError(f"unknown regime {name!r}")


def lattice_basis(lattice: LatticeConfig) -> ProductBasis:
    return build_product_basis(LevelScheme(k, LEVELS) for k in range(lattice.N))


def uniform_product_state(basis: ProductBasis, local: np.ndarray) -> StateVector:
    vec = np.ones(1, dtype=complex)
    for _ in basis.schemes:
        vec = np.kron(vec, local)
    return StateVector(basis, vec).normalized()


def _single(level_up: str, level_down: str) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    m[LEVELS.index(level_up), LEVELS.index(level_down)] = 1.0
    return m


def _interaction_diag(basis: ProductBasis, lattice: LatticeConfig, c6: float, level: str) -> np.ndarray:
    diag = np.zeros(basis.dim)
    masks = [basis.level_mask(k, level) for k in range(lattice.N)]
    for j in range(lattice.N):
        for k in range(j + 1, lattice.N):
            V = pair_interaction(c6, lattice.spacing(j, k))
            diag += V * (masks[j] & masks[k])
    return diag


def dressing_hamiltonian(
    lattice: LatticeConfig, dressing: DressingParams, level: str = "r0"
) -> HermitianOperator:
    """Dressing of ``|1> <-> |level>`` on every atom plus all-pairs vdW shifts."""
    if level == "r0":
        scale, c6 = 1.0, dressing.c6_00
    elif level == "r1":
        scale, c6 = dressing.kappa, dressing.c6_11
    else:
        raise ValueError(f"dressing level must be 'r0' or 'r1', got {level!r}")
    basis = lattice_basis(lattice)
    omega = angular(dressing.omega) * scale
    delta = angular(dressing.delta) * scale
    local = 0.5 * omega * (_single(level, "1") + _single("1", level)) + delta * _single(level, level)
    H = np.diag(_interaction_diag(basis, lattice, c6, level)).astype(complex)
    for k in range(lattice.N):
        H += embed_operator(basis, [k], local, hermitian=False)
    return HermitianOperator(basis, H)


def swap_matrix(basis: ProductBasis) -> np.ndarray:
    """Permutation exchanging ``r0`` and ``r1`` on every atom (unit phases)."""
    local = np.eye(4)
    i0, i1 = LEVELS.index("r0"), LEVELS.index("r1")
    local[[i0, i1]] = local[[i1, i0]]
    S = np.ones((1, 1))
    for _ in basis.schemes:
        S = np.kron(S, local)
    return S


def swap_hamiltonian(lattice: LatticeConfig, dressing: DressingParams, omega_mu: float) -> HermitianOperator:
    """``sum_k (i Omega_mu |r1><r0| + h.c.)/2`` plus both Rydberg interactions."""
    basis = lattice_basis(lattice)
    w = angular(omega_mu)
    local = 0.5j * w * _single("r1", "r0")
    local = local + local.conj().T
    H = np.diag(
        _interaction_diag(basis, lattice, dressing.c6_00, "r0")
        + _interaction_diag(basis, lattice, dressing.c6_11, "r1")
    ).astype(complex)
    for k in range(lattice.N):
        H += embed_operator(basis, [k], local, hermitian=False)
    return HermitianOperator(basis, H)


def microwave_swap(
    state: StateVector,
    mode: str = "ideal",
    *,
    lattice: LatticeConfig | None = None,
    dressing: DressingParams | None = None,
    omega_mu: float | None = None,
) -> StateVector:
    """Transfer ``r0 -> r1`` on every atom.

    The finite mode applies the ``i Omega_mu`` pi pulse (``|r0> -> |r1>`` with
    unit phase) and warns when Omega_mu is below ``SWAP_RATIO_WARN`` times the
    largest pair shift.
    """
    levels = state.basis.schemes[0].levels
    if "r0" not in levels or "r1" not in levels:
        raise ValueError("basis needs both r0 and r1")
    if mode == "ideal":
        return StateVector(state.basis, swap_matrix(state.basis) @ state.amplitudes)
    if mode != "finite":
        raise ValueError(f"unknown swap mode {mode!r}")
    if lattice is None or dressing is None or not omega_mu:
        raise ValueError("finite swap needs lattice, dressing and omega_mu")
    if lattice.N > 1:
        vmax = max(abs(pair_interaction(c, lattice.lattice_constant)) for c in (dressing.c6_00, dressing.c6_11))
        ratio = angular(omega_mu) / vmax
        if ratio < SWAP_RATIO_WARN:
            warnings.warn(f"Omega_mu / max pair shift = {ratio:.3g} is not >> 1", stacklevel=2)
    H = swap_hamiltonian(lattice, dressing, omega_mu)
    return evolve(state, H, pi / angular(omega_mu))


def _local_projection(state: StateVector, bra: np.ndarray) -> float:
    n = len(state.basis.schemes)
    psi = state.amplitudes.reshape((4,) * n)
    total = 0.0
    for k in range(n):
        amp = np.tensordot(bra.conj(), psi, axes=([0], [k]))
        total += float(np.sum(np.abs(amp) ** 2))
    return total / n


def _check_levels(state: StateVector) -> None:
    for s in state.basis.schemes:
        if s.levels != LEVELS:
            raise ValueError(f"atom {s.atom_id} must carry levels {LEVELS}")


def magnetization(state: StateVector) -> float:
    """Mean over atoms of the probability of ``(|0> + |1>)/sqrt(2)``."""
    _check_levels(state)
    return _local_projection(state, UP)


def population_one(state: StateVector) -> float:
    """Mean over atoms of the population of ``|1>``."""
    _check_levels(state)
    return _local_projection(state, ONE)


def echo_residual(initial: StateVector, final: StateVector) -> float:
    return 1.0 - overlap_fidelity(initial, final)


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    times: np.ndarray
    magnetization: np.ndarray
    population_one: np.ndarray
    metadata: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class EchoResult:
    series: ObservableSeries
    final: StateVector
    turn: StateVector
    states: np.ndarray | None = None


def run_echo(
    lattice: LatticeConfig,
    dressing: DressingParams,
    initial: StateVector,
    schedule: EchoSchedule,
    substeps: int = 200,
    *,
    backward_duration: float | None = None,
    keep_states: bool = False,
) -> EchoResult:
    """Forward dressing for ``t0``, swap, backward dressing for ``t0/|kappa|``.

    ``backward_duration`` overrides the matched duration (negative controls).
    The series holds ``substeps`` samples per segment plus ``t = 0``; with an
    ideal swap the turning point appears once at ``t0``.
    """
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    H_fwd = dressing_hamiltonian(lattice, dressing, "r0")
    H_back = dressing_hamiltonian(lattice, dressing, "r1")
    if initial.basis != H_fwd.basis:
        raise ValueError("initial state is not on the lattice basis")
    t0 = schedule.t0
    t_back = schedule.backward_duration(dressing.kappa) if backward_duration is None else backward_duration

    grid_f = np.linspace(0.0, t0, substeps + 1)
    amps_f = evolve_samples(initial, H_fwd, grid_f)
    turn = StateVector(initial.basis, amps_f[-1])
    swapped = microwave_swap(
        turn, schedule.swap, lattice=lattice, dressing=dressing, omega_mu=schedule.omega_mu
    )
    t_mu = schedule.swap_duration
    grid_b = np.linspace(0.0, t_back, substeps + 1)[1:]
    amps_b = evolve_samples(swapped, H_back, grid_b)
    final = StateVector(initial.basis, amps_b[-1])

    times = [grid_f]
    amps = [amps_f]
    if t_mu > 0:
        times.append(np.array([t0 + t_mu]))
        amps.append(swapped.amplitudes[None, :])
    times.append(t0 + t_mu + grid_b)
    amps.append(amps_b)
    times_all = np.concatenate(times)
    amps_all = np.concatenate(amps)
    basis = initial.basis
    M = np.array([magnetization(StateVector(basis, a)) for a in amps_all])
    P = np.array([population_one(StateVector(basis, a)) for a in amps_all])
    series = ObservableSeries(
        times=times_all,
        magnetization=M,
        population_one=P,
        metadata={
            "N": lattice.N,
            "lattice_constant_um": lattice.lattice_constant,
            "omega_MHz": dressing.omega,
            "delta_MHz": dressing.delta,
            "kappa": dressing.kappa,
            "t0_us": t0,
            "t_back_us": t_back,
            "swap": schedule.swap,
        },
    )
    return EchoResult(series, final, turn, amps_all if keep_states else None)
