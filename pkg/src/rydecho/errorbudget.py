"""Gate error budget: Rydberg decay, thermal spacing spread and drift, Doppler dephasing."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence as SequenceT

import numpy as np
from scipy import constants as sc
from scipy.special import ndtr, ndtri

from .echogate import (
    COMPUTATIONAL,
    CONTROL,
    TARGET,
    DerivedFrequencies,
    GateParams,
    build_sequence,
    derive_frequencies,
    run_input,
)
from .pulsemodel import DEFAULT_SUBSTEPS, Sequence, run_sequence_batch
from .units import TWO_PI

__all__ = [
    "DecayModel",
    "DriftScenario",
    "ErrorReport",
    "K_EFF_TWO_PHOTON",
    "K_EFF_UV",
    "MASS_RB87",
    "ThermalModel",
    "decay_error",
    "doppler_error",
    "frozen_channel_error",
    "doppler_time",
    "gate_dwell",
    "gate_report",
    "rotation_error",
    "rotation_error_at",
    "rydberg_dwell",
    "sweep_temperature",
    "thread_count",
]

MASS_RB87 = 86.909180527 * sc.physical_constants["atomic mass constant"][0]
# counterpropagating 480 nm + 780 nm two-photon excitation, rad/um
K_EFF_TWO_PHOTON = TWO_PI * (1 / 0.480 - 1 / 0.780)
# single-photon 297 nm excitation of an np state
K_EFF_UV = TWO_PI / 0.297

RYDBERG_LEVELS = {CONTROL: ("rc",), TARGET: ("r0", "r1")}
TRUNCATION = 4.0


@dataclass(frozen=True)
class DecayModel:
    """Rydberg lifetimes in us, keyed by level label."""

    lifetimes: Mapping[str, float] = field(
        default_factory=lambda: {"rc": 1200.0, "r0": 1200.0, "r1": 1200.0}
    )

    def __post_init__(self) -> None:
        for k, tau in self.lifetimes.items():
            if not tau > 0:
                raise ValueError(f"lifetime of {k!r} must be positive, got {tau}")


@dataclass(frozen=True)
class ThermalModel:
    """Harmonic approximation of a Gaussian-beam tweezer.

    ``Ta`` and ``trap_depth`` are temperatures in K, ``waist`` in um. The
    per-atom axial spread is ``(waist/2) sqrt(Ta/U)`` and the spacing of two
    independent atoms spreads by sqrt(2) times that.
    """

    Ta: float = 0.0
    trap_depth: float = 20e-3
    waist: float = 1.0
    mass: float = MASS_RB87

    def __post_init__(self) -> None:
        if self.Ta < 0:
            raise ValueError(f"Ta must be non-negative, got {self.Ta}")
        if not self.trap_depth > 0:
            raise ValueError("trap_depth must be positive")
        if not self.waist > 0:
            raise ValueError("waist must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if self.Ta > self.trap_depth / 10:
            warnings.warn(
                f"Ta = {self.Ta:g} K exceeds U/10 = {self.trap_depth / 10:g} K; "
                "harmonic trap approximation is doubtful",
                stacklevel=2,
            )

    def at(self, Ta: float) -> ThermalModel:
        return replace(self, Ta=Ta)

    @property
    def sigma_axis(self) -> float:
        return 0.5 * self.waist * math.sqrt(self.Ta / self.trap_depth)

    @property
    def sigma_L(self) -> float:
        return math.sqrt(2.0) * self.sigma_axis

    @property
    def v_z(self) -> float:
        """r.m.s. axial speed in um/us (equal to m/s)."""
        return math.sqrt(sc.k * self.Ta / self.mass)


@dataclass(frozen=True)
class DriftScenario:
    """Worst-case axial drift ``beta = +1`` (apart) or ``-1`` (together).

    ``t_T`` runs from mid pulse 2 to mid wait and ``t_p4`` to mid pulse 4.
    """

    beta: int
    t_T: float
    t_p4: float

    @classmethod
    def from_derived(cls, d: DerivedFrequencies, beta: int) -> DriftScenario:
        if beta not in (1, -1):
            raise ValueError("beta must be +1 or -1")
        t_T = math.pi * (1 / (2 * d.omega_t2) + 1 / d.omega_t3 + d.T_wait / (2 * math.pi))
        t_p4 = t_T + math.pi / (2 * d.omega_t4) + d.T_wait / 2
        return cls(beta, t_T, t_p4)

    def spacings(self, L_prime: float, v_z: float, protocol: str = "spin_echo") -> dict[str, float]:
        """Stage-label -> spacing for a pulse-2 spacing ``L_prime``."""
        if protocol == "traditional":
            return {"pulse1": L_prime, "pulse2pi": L_prime, "pulse5": L_prime}
        L_wait = L_prime + 2 * self.beta * v_z * self.t_T
        L_p4 = L_prime + 2 * self.beta * v_z * self.t_p4
        return {
            "pulse1": L_prime,
            "pulse2": L_prime,
            "gap": L_prime,
            "pulse3": L_prime,
            "wait": L_wait,
            "pulse4": L_p4,
            "pulse5": L_p4,
        }


@dataclass(frozen=True)
class ErrorReport:
    """One parameter point. ``total`` is E_de + E_ro; E_Do is kept separate."""

    Ta: float
    E_de: float
    E_ro: float
    E_Do: float
    dwell: Mapping[str, float]
    protocol: str = "spin_echo"

    @property
    def total(self) -> float:
        return self.E_de + self.E_ro

    def total_with_doppler(self) -> float:
        return self.E_de + self.E_ro + self.E_Do


def thread_count(default: int | None = None) -> int:
    env = os.environ.get("ECHOGATE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"ECHOGATE_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return default or min(8, os.cpu_count() or 1)


def rydberg_dwell(trajectories: Mapping[str, object], window: tuple[str, str] | None = None) -> dict[str, float]:
    """Mean over inputs of the time-integrated population of each Rydberg level.

    ``trajectories`` maps an input label to a :class:`~rydecho.pulsemodel.Trajectory`.
    ``window`` restricts the integral to stages ``(first, last)``.
    """
    if not trajectories:
        raise ValueError("no trajectories given")
    totals: dict[str, float] = {}
    for name, traj in trajectories.items():
        if traj is None:
            raise ValueError(f"input {name!r} has no trace data")
        mask = traj.window(*window) if window else None
        for atom, levels in RYDBERG_LEVELS.items():
            for lvl in levels:
                pop = traj.level_population(atom, lvl)
                totals[lvl] = totals.get(lvl, 0.0) + traj.integrate(pop, mask)
    n = len(trajectories)
    return {k: v / n for k, v in totals.items()}


def gate_dwell(
    p: GateParams, protocol: str = "spin_echo", substeps: int = DEFAULT_SUBSTEPS
) -> dict[str, float]:
    seq = build_sequence(protocol, p)
    trajs = {b: run_input(seq, b, substeps).trajectory for b in COMPUTATIONAL}
    return rydberg_dwell(trajs)


def decay_error(dwell: Mapping[str, float], decay: DecayModel) -> float:
    terms = []
    for lvl, t in dwell.items():
        if t == 0:
            continue
        if lvl not in decay.lifetimes:
            raise KeyError(f"no lifetime for populated Rydberg level {lvl!r}")
        terms.append(t / decay.lifetimes[lvl])
    return math.fsum(terms)


def doppler_error(Ta: float, k_eff: float = K_EFF_TWO_PHOTON, t: float = 0.097, mass: float = MASS_RB87) -> float:
    """``[1 - exp(-kB Ta (k t)^2 / 2m)] / 2`` with k in rad/um and t in us."""
    if Ta < 0 or k_eff < 0 or t < 0:
        raise ValueError("Doppler inputs must be non-negative")
    v2 = sc.k * Ta / mass  # (um/us)^2
    return 0.5 * -math.expm1(-v2 * (k_eff * t) ** 2 / 2)


def _channel_errors(seqs: list[Sequence]) -> np.ndarray:
    if not seqs:
        return np.zeros(0)
    basis = seqs[0].basis
    idx = basis.index(("0", "0"))
    init = np.zeros(basis.dim, dtype=complex)
    init[idx] = 1.0
    finals = run_sequence_batch(seqs, init)
    # ideal |00> -> -|00>; the fidelity only needs |<00|psi>|^2
    return 1.0 - np.abs(finals[:, idx]) ** 2


def frozen_channel_error(p: GateParams, protocol: str = "spin_echo") -> float:
    """``1 - |<00|U_ideal^dag U|00>|^2`` at the nominal spacing."""
    return float(_channel_errors([build_sequence(protocol, p)])[0])


def _standard_normals(n: int, seed: int, stream: int) -> np.ndarray:
    """``n`` standard normals truncated at +-4, from a counter-based generator."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))
    lo, hi = ndtr(-TRUNCATION), ndtr(TRUNCATION)
    u = lo + (hi - lo) * rng.random(n)
    return ndtri(u)


def rotation_error_at(
    p: GateParams,
    sigma_L: float,
    v_z: float,
    *,
    protocol: str = "spin_echo",
    samples: int = 2000,
    seed: int = 0,
    stream: int = 0,
    method: str = "mc",
    betas: SequenceT[int] = (1, -1),
) -> float:
    """E_ro for a given spacing spread and drift speed.

    For each pulse-2 spacing ``L'`` and each ``beta`` the full sequence is run
    on ``|00>``; E_ro is the mean over ``L'`` of ``sum_beta (1 - F)/8``.
    ``method="quadrature"`` replaces sampling by 40-node Gauss-Hermite.
    """
    if sigma_L < 0 or v_z < 0:
        raise ValueError("sigma_L and v_z must be non-negative")
    d = derive_frequencies(p)
    if sigma_L == 0:
        z = np.zeros(1)
        weights = np.ones(1)
    elif method == "mc":
        if samples < 1:
            raise ValueError("need at least one sample")
        z = _standard_normals(samples, seed, stream)
        weights = np.full(samples, 1.0 / samples)
    elif method == "quadrature":
        z, w = np.polynomial.hermite_e.hermegauss(40)
        weights = w / w.sum()
    else:
        raise ValueError(f"unknown method {method!r}")
    L_samples = p.L + sigma_L * z
    if np.any(L_samples <= 0):
        raise ValueError("sampled spacing is non-positive; sigma_L too large for L")
    per_sample = np.zeros(len(L_samples))
    for beta in betas:
        drift = DriftScenario.from_derived(d, beta)
        seqs = [
            build_sequence(protocol, p, d, drift.spacings(float(Lp), v_z, protocol))
            for Lp in L_samples
        ]
        per_sample = per_sample + _channel_errors(seqs) / 8.0
    return math.fsum(weights * per_sample)


def rotation_error(
    p: GateParams,
    thermal: ThermalModel,
    *,
    protocol: str = "spin_echo",
    samples: int = 2000,
    seed: int = 0,
    stream: int = 0,
    method: str = "mc",
) -> float:
    return rotation_error_at(
        p,
        thermal.sigma_L,
        thermal.v_z,
        protocol=protocol,
        samples=samples,
        seed=seed,
        stream=stream,
        method=method,
    )


def doppler_time(p: GateParams, protocol: str = "spin_echo") -> float:
    """Time the control spends in ``rc`` between its two pi pulses (us)."""
    d = derive_frequencies(p)
    if protocol == "traditional":
        return 2 * math.pi / d.omega_t2
    return d.rydberg_time


def gate_report(
    p: GateParams,
    thermal: ThermalModel,
    decay: DecayModel,
    *,
    protocol: str = "spin_echo",
    samples: int = 2000,
    seed: int = 0,
    stream: int = 0,
    k_eff: float = K_EFF_TWO_PHOTON,
    dwell: Mapping[str, float] | None = None,
) -> ErrorReport:
    dwell = gate_dwell(p, protocol) if dwell is None else dwell
    return ErrorReport(
        Ta=thermal.Ta,
        E_de=decay_error(dwell, decay),
        E_ro=rotation_error(p, thermal, protocol=protocol, samples=samples, seed=seed, stream=stream),
        E_Do=doppler_error(thermal.Ta, k_eff, doppler_time(p, protocol), thermal.mass),
        dwell=dict(dwell),
        protocol=protocol,
    )


def sweep_temperature(
    p: GateParams,
    Ta_grid: Iterable[float],
    thermal: ThermalModel | None = None,
    decay: DecayModel | None = None,
    *,
    protocol: str = "spin_echo",
    samples: int = 2000,
    seed: int = 0,
    k_eff: float = K_EFF_TWO_PHOTON,
    threads: int | None = None,
) -> list[ErrorReport]:
    """One :class:`ErrorReport` per temperature (K).

    Grid point ``i`` draws from its own stream ``(seed, i)``, so results do
    not depend on the thread count.
    """
    grid = [float(t) for t in Ta_grid]
    if not grid:
        raise ValueError("temperature grid is empty")
    thermal = ThermalModel() if thermal is None else thermal
    decay = DecayModel() if decay is None else decay
    dwell = gate_dwell(p, protocol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        models = [thermal.at(Ta) for Ta in grid]

    def one(i: int) -> ErrorReport:
        return gate_report(
            p,
            models[i],
            decay,
            protocol=protocol,
            samples=samples,
            seed=seed,
            stream=i,
            k_eff=k_eff,
            dwell=dwell,
        )

    n = min(thread_count(threads), len(grid))
    if n == 1:
        return [one(i) for i in range(len(grid))]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, range(len(grid))))
