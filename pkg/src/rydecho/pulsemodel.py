"""Square pulses, waits, van der Waals geometry and whole-sequence propagation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence as SequenceT

import numpy as np
from scipy.integrate import trapezoid

from .hilbert import (
    HermitianOperator,
    LevelScheme,
    NumericalError,
    ProductBasis,
    StateVector,
    _check_norm,
    build_product_basis,
    embed_operator,
    evolve,
    evolve_samples,
)
from .units import THZ_TO_MHZ, TWO_PI

__all__ = [
    "DEFAULT_SUBSTEPS",
    "GeometryState",
    "InteractionSpec",
    "PulseSpec",
    "RunResult",
    "Sequence",
    "Stage",
    "Trajectory",
    "WaitSpec",
    "pair_interaction",
    "run_sequence",
    "run_sequence_batch",
    "stage_hamiltonian",
]

DEFAULT_SUBSTEPS = 200


def pair_interaction(c6: float, spacing: float) -> float:
    """Pair shift C6/L^6 in rad/us for C6/2pi in THz um^6 and L in um."""
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    return TWO_PI * c6 * THZ_TO_MHZ / spacing**6


@dataclass(frozen=True)
class PulseSpec:
    """Resonant (or detuned) square pulse on one atom.

    ``rabi`` is the complex Rabi frequency in rad/us: the stage Hamiltonian
    gets ``rabi/2 |upper><lower| + h.c.`` plus ``detuning |upper><upper|``.
    """

    actor: int
    transition: tuple[str, str]
    rabi: complex
    duration: float
    detuning: float = 0.0
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "rabi", complex(self.rabi))
        object.__setattr__(self, "transition", tuple(self.transition))
        if not self.duration > 0:
            raise ValueError(f"pulse {self.label!r}: duration must be positive")
        if abs(self.rabi) == 0:
            raise ValueError(f"pulse {self.label!r}: Rabi frequency must be nonzero")


@dataclass(frozen=True)
class WaitSpec:
    duration: float
    label: str = ""

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError(f"wait {self.label!r}: negative duration")


@dataclass(frozen=True)
class InteractionSpec:
    """Diagonal shift ``C6/L^6`` when ``pair`` occupies ``levels``.

    The sign of ``c6`` is used as given; a negative coefficient produces a
    negative pair energy.
    """

    pair: tuple[int, int]
    c6: float
    levels: tuple[str, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "pair", tuple(self.pair))
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.pair[0] == self.pair[1]:
            raise ValueError("interaction pair must name two different atoms")
        if not np.isfinite(self.c6) or self.c6 == 0:
            raise ValueError(f"c6 must be finite and nonzero, got {self.c6}")


def _pair_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class GeometryState:
    """Interatomic spacings (um), keyed by unordered atom pair."""

    spacings: tuple[tuple[tuple[int, int], float], ...] = ()

    def __post_init__(self) -> None:
        norm = []
        for (a, b), s in self.spacings:
            if not s > 0:
                raise ValueError(f"spacing for pair {(a, b)} must be positive, got {s}")
            norm.append((_pair_key(a, b), float(s)))
        object.__setattr__(self, "spacings", tuple(sorted(norm)))

    @classmethod
    def of(cls, mapping: Mapping[tuple[int, int], float]) -> GeometryState:
        return cls(tuple(mapping.items()))

    def spacing(self, a: int, b: int) -> float:
        key = _pair_key(a, b)
        for k, s in self.spacings:
            if k == key:
                return s
        raise KeyError(f"no spacing for pair {key}")


@dataclass(frozen=True)
class Stage:
    spec: PulseSpec | WaitSpec
    geometry: GeometryState

    @property
    def duration(self) -> float:
        return self.spec.duration

    @property
    def label(self) -> str:
        return self.spec.label


@dataclass(frozen=True)
class Sequence:
    """Ordered, contiguous stages acting on one basis with fixed interactions."""

    basis: ProductBasis
    stages: tuple[Stage, ...] = ()
    interactions: tuple[InteractionSpec, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "interactions", tuple(self.interactions))
        for st in self.stages:
            if st.geometry is None:
                raise ValueError(f"stage {st.label!r} has no geometry snapshot")

    @property
    def duration(self) -> float:
        return float(sum(st.duration for st in self.stages))

    @property
    def boundaries(self) -> np.ndarray:
        """Start time of every stage followed by the end time."""
        return np.concatenate([[0.0], np.cumsum([st.duration for st in self.stages])])

    def stage(self, label: str) -> Stage:
        for st in self.stages:
            if st.label == label:
                return st
        raise KeyError(f"no stage labelled {label!r}")

    def labels(self) -> list[str]:
        return [st.label for st in self.stages]

    def with_spacings(self, spacings: Mapping[str, float], pair: tuple[int, int]) -> Sequence:
        """Copy with the spacing of ``pair`` replaced per stage label."""
        stages = []
        for st in self.stages:
            if st.label in spacings:
                geo = dict(st.geometry.spacings)
                geo[_pair_key(*pair)] = spacings[st.label]
                st = Stage(st.spec, GeometryState.of(geo))
            stages.append(st)
        return Sequence(self.basis, tuple(stages), self.interactions)

    def to_dict(self) -> dict:
        """JSON-ready description (complex numbers as ``[re, im]``)."""
        out_stages = []
        for st in self.stages:
            geo = [[list(k), s] for k, s in st.geometry.spacings]
            if isinstance(st.spec, PulseSpec):
                p = st.spec
                body = {
                    "kind": "pulse",
                    "label": p.label,
                    "actor": p.actor,
                    "transition": list(p.transition),
                    "rabi": [p.rabi.real, p.rabi.imag],
                    "detuning": p.detuning,
                    "duration_us": p.duration,
                }
            else:
                body = {"kind": "wait", "label": st.spec.label, "duration_us": st.spec.duration}
            body["spacings_um"] = geo
            out_stages.append(body)
        return {
            "atoms": [
                {"atom_id": s.atom_id, "levels": list(s.levels)} for s in self.basis.schemes
            ],
            "interactions": [
                {"pair": list(i.pair), "c6": i.c6, "levels": list(i.levels)}
                for i in self.interactions
            ],
            "stages": out_stages,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> Sequence:
        basis = build_product_basis(
            LevelScheme(a["atom_id"], tuple(a["levels"])) for a in data["atoms"]
        )
        inter = tuple(
            InteractionSpec(tuple(i["pair"]), float(i["c6"]), tuple(i["levels"]))
            for i in data.get("interactions", ())
        )
        stages = []
        for s in data.get("stages", ()):
            geo = GeometryState(tuple((tuple(k), float(v)) for k, v in s.get("spacings_um", ())))
            if s["kind"] == "pulse":
                spec: PulseSpec | WaitSpec = PulseSpec(
                    actor=int(s["actor"]),
                    transition=tuple(s["transition"]),
                    rabi=complex(*s["rabi"]),
                    duration=float(s["duration_us"]),
                    detuning=float(s.get("detuning", 0.0)),
                    label=s.get("label", ""),
                )
            elif s["kind"] == "wait":
                spec = WaitSpec(float(s["duration_us"]), s.get("label", ""))
            else:
                raise ValueError(f"unknown stage kind {s['kind']!r}")
            stages.append(Stage(spec, geo))
        return cls(basis, tuple(stages), inter)


@lru_cache(maxsize=256)
def _transition_matrix(basis: ProductBasis, actor: int, lower: str, upper: str) -> np.ndarray:
    scheme = basis.scheme(actor)
    local = np.zeros((scheme.size, scheme.size), dtype=complex)
    local[scheme.index(upper), scheme.index(lower)] = 1.0
    m = embed_operator(basis, [actor], local, hermitian=False)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=256)
def _pair_projector_diag(basis: ProductBasis, a: int, b: int, la: str, lb: str) -> np.ndarray:
    mask = basis.level_mask(a, la) & basis.level_mask(b, lb)
    d = mask.astype(float)
    d.setflags(write=False)
    return d


def _stage_matrix(
    stage: Stage, basis: ProductBasis, interactions: Iterable[InteractionSpec]
) -> np.ndarray:
    diag = np.zeros(basis.dim)
    for inter in interactions:
        a, b = inter.pair
        try:
            spacing = stage.geometry.spacing(a, b)
        except KeyError:
            raise KeyError(
                f"stage {stage.label!r}: missing spacing for interacting pair {inter.pair}"
            ) from None
        diag = diag + pair_interaction(inter.c6, spacing) * _pair_projector_diag(
            basis, a, b, *inter.levels
        )
    H = np.diag(diag).astype(complex)
    spec = stage.spec
    if isinstance(spec, PulseSpec):
        lower, upper = spec.transition
        up = _transition_matrix(basis, spec.actor, lower, upper)
        H += 0.5 * spec.rabi * up + 0.5 * np.conj(spec.rabi) * up.conj().T
        if spec.detuning:
            H += spec.detuning * np.diag(np.real(np.diag(up @ up.conj().T)))
    return H


def stage_hamiltonian(
    stage: Stage, basis: ProductBasis, interactions: Iterable[InteractionSpec]
) -> HermitianOperator:
    """Drive terms of a pulse plus every pair shift at the stage geometry."""
    return HermitianOperator(basis, _stage_matrix(stage, basis, interactions))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled amplitudes along a sequence.

    ``times[i]`` and ``amplitudes[i]`` are aligned; ``stage_index[i]`` is the
    stage that produced sample ``i`` (-1 for the initial sample).
    """

    basis: ProductBasis
    times: np.ndarray
    amplitudes: np.ndarray
    stage_index: np.ndarray
    boundaries: np.ndarray
    stage_labels: tuple[str, ...]

    def population(self, config) -> np.ndarray:
        return np.abs(self.amplitudes[:, self.basis.index(config)]) ** 2

    def argument(self, config) -> np.ndarray:
        return np.angle(self.amplitudes[:, self.basis.index(config)])

    def level_population(self, atom_id: int, level: str) -> np.ndarray:
        mask = self.basis.level_mask(atom_id, level)
        return np.sum(np.abs(self.amplitudes[:, mask]) ** 2, axis=1)

    def window(self, first: str, last: str | None = None) -> np.ndarray:
        """Boolean sample mask covering stages ``first`` .. ``last`` inclusive.

        The sample at the start boundary (end of the preceding stage) is
        included so integrals over the window start at its left edge.
        """
        last = first if last is None else last
        i0 = self.stage_labels.index(first)
        i1 = self.stage_labels.index(last)
        mask = (self.stage_index >= i0) & (self.stage_index <= i1)
        before = np.nonzero(self.stage_index < i0)[0]
        if before.size:
            mask[before[-1]] = True
        return mask

    def integrate(self, values: np.ndarray, mask: np.ndarray | None = None) -> float:
        """Trapezoidal time integral of ``values`` (optionally on a window)."""
        t = self.times
        if mask is not None:
            t, values = t[mask], values[mask]
        return float(trapezoid(values, t))


@dataclass(frozen=True, eq=False)
class RunResult:
    final: StateVector
    stage_states: tuple[StateVector, ...]
    trajectory: Trajectory | None = None

    def after(self, seq: Sequence, label: str) -> StateVector:
        return self.stage_states[seq.labels().index(label)]


def run_sequence(
    seq: Sequence, initial: StateVector, substeps: int | None = None
) -> RunResult:
    """Apply the stage propagators in order.

    With ``substeps`` set, every stage is additionally sampled at that many
    uniform points (sharing the stage's eigendecomposition) to build a
    :class:`Trajectory`; the final state is the same either way.
    """
    if initial.basis != seq.basis:
        raise ValueError("initial state is not on the sequence basis")
    state = initial
    stage_states = []
    times = [np.zeros(1)]
    samples = [initial.amplitudes[None, :]]
    owners = [np.array([-1])]
    t_start = 0.0
    for k, st in enumerate(seq.stages):
        H = stage_hamiltonian(st, seq.basis, seq.interactions)
        if substeps:
            grid = np.linspace(0.0, st.duration, substeps + 1)[1:]
            amps = evolve_samples(state, H, grid)
            _check_norm(state.amplitudes, amps[-1])
            times.append(t_start + grid)
            samples.append(amps)
            owners.append(np.full(grid.shape, k))
            state = StateVector(seq.basis, amps[-1])
        else:
            state = evolve(state, H, st.duration)
        stage_states.append(state)
        t_start += st.duration
    traj = None
    if substeps:
        traj = Trajectory(
            basis=seq.basis,
            times=np.concatenate(times),
            amplitudes=np.concatenate(samples),
            stage_index=np.concatenate(owners),
            boundaries=seq.boundaries,
            stage_labels=tuple(seq.labels()),
        )
    return RunResult(state, tuple(stage_states), traj)


def run_sequence_batch(seqs: SequenceT[Sequence], initial: np.ndarray) -> np.ndarray:
    """Final amplitudes (one row per sequence) from a common initial vector.

    The sequences must share basis, interactions and stage specs; only the
    geometry snapshots may differ. Each stage is diagonalized for all
    sequences at once with a stacked ``eigh``.
    """
    if not seqs:
        return np.zeros((0, len(initial)), dtype=complex)
    ref = seqs[0]
    for s in seqs[1:]:
        if s.basis != ref.basis or s.interactions != ref.interactions:
            raise ValueError("batched sequences must share basis and interactions")
        if [st.spec for st in s.stages] != [st.spec for st in ref.stages]:
            raise ValueError("batched sequences must share stage specs")
    n = len(seqs)
    psi = np.tile(np.asarray(initial, dtype=complex), (n, 1))
    norm0 = np.linalg.norm(psi, axis=1)
    for k, st in enumerate(ref.stages):
        if st.duration == 0:
            continue
        Hs = np.stack([_stage_matrix(s.stages[k], s.basis, s.interactions) for s in seqs])
        try:
            w, v = np.linalg.eigh(Hs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"stage {st.label!r}: eigendecomposition failed: {exc}") from exc
        c = np.einsum("nji,nj->ni", v.conj(), psi)
        c *= np.exp(-1j * w * st.duration)
        psi = np.einsum("nij,nj->ni", v, c)
    drift = np.max(np.abs(np.linalg.norm(psi, axis=1) - norm0))
    if not np.isfinite(drift) or drift > 1e-10 * max(1.0, float(norm0.max())):
        raise NumericalError(f"batched propagation lost norm ({drift:.3e})")
    return psi
