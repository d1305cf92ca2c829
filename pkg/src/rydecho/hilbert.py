"""Product Hilbert spaces of few-level atoms and exact piecewise-constant evolution.

Every Hamiltonian in this package is a dense Hermitian matrix in angular
frequency units (rad/us), times are in microseconds, so ``exp(-i H t)`` needs
no extra factors of 2*pi or hbar.

The basis ordering is atom-major: the first atom is the most significant
digit of the flat index, which makes ``embed_operator`` agree with a plain
``np.kron`` chain taken in atom order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import prod
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DEFAULT_DIM_CAP",
    "HermitianOperator",
    "LevelScheme",
    "NumericalError",
    "ProductBasis",
    "StateVector",
    "basis_state",
    "build_product_basis",
    "embed_operator",
    "evolve",
    "evolve_samples",
    "overlap_fidelity",
    "population",
    "product_state",
]

DEFAULT_DIM_CAP = 4096
HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10


class NumericalError(RuntimeError):
    """Raised when a linear-algebra step fails or breaks unitarity."""


@dataclass(frozen=True)
class LevelScheme:
    """Ordered level labels of a single atom, e.g. ``("0", "1", "rc")``."""

    atom_id: int
    levels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(str(l) for l in self.levels))
        if len(self.levels) < 2:
            raise ValueError(f"atom {self.atom_id}: need at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"atom {self.atom_id}: duplicate level labels {self.levels}")

    @property
    def size(self) -> int:
        return len(self.levels)

    def index(self, label: str) -> int:
        try:
            return self.levels.index(label)
        except ValueError:
            raise KeyError(f"atom {self.atom_id} has no level {label!r}") from None


@dataclass(frozen=True)
class ProductBasis:
    """Tensor product of per-atom level schemes with a flat index map."""

    schemes: tuple[LevelScheme, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.size for s in self.schemes)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    @property
    def atom_ids(self) -> tuple[int, ...]:
        return tuple(s.atom_id for s in self.schemes)

    @cached_property
    def _position(self) -> dict[int, int]:
        return {s.atom_id: k for k, s in enumerate(self.schemes)}

    @cached_property
    def configurations(self) -> tuple[tuple[str, ...], ...]:
        return tuple(itertools.product(*(s.levels for s in self.schemes)))

    @cached_property
    def _index(self) -> dict[tuple[str, ...], int]:
        return {cfg: i for i, cfg in enumerate(self.configurations)}

    def position(self, atom_id: int) -> int:
        try:
            return self._position[atom_id]
        except KeyError:
            raise KeyError(f"atom {atom_id} is not part of this basis") from None

    def scheme(self, atom_id: int) -> LevelScheme:
        return self.schemes[self.position(atom_id)]

    def index(self, config: str | Sequence[str]) -> int:
        """Flat index of a configuration such as ``("rc", "0")`` or ``"rc,0"``."""
        key = _as_config(config)
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"unknown configuration {key!r}") from None

    def label(self, index: int) -> tuple[str, ...]:
        return self.configurations[index]

    def level_mask(self, atom_id: int, level: str) -> np.ndarray:
        """Boolean mask over the flat basis selecting ``atom_id`` in ``level``."""
        pos = self.position(atom_id)
        k = self.schemes[pos].index(level)
        shape = self.dims
        grid = np.zeros(shape, dtype=bool)
        sl: list[slice | int] = [slice(None)] * len(shape)
        sl[pos] = k
        grid[tuple(sl)] = True
        return grid.reshape(-1)


def _as_config(config: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(config, str):
        return tuple(part.strip() for part in config.split(","))
    return tuple(str(c) for c in config)


def build_product_basis(
    schemes: Iterable[LevelScheme], cap: int = DEFAULT_DIM_CAP
) -> ProductBasis:
    schemes = tuple(schemes)
    if not schemes:
        raise ValueError("need at least one atom")
    ids = [s.atom_id for s in schemes]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate atom_id in {ids}")
    dim = prod(s.size for s in schemes)
    if dim > cap:
        raise ValueError(f"basis dimension {dim} exceeds cap {cap}")
    return ProductBasis(schemes)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: ProductBasis
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.basis.dim:
            raise ValueError(
                f"state has {amps.shape[0]} amplitudes, basis dim is {self.basis.dim}"
            )
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitude(self, config: str | Sequence[str]) -> complex:
        return complex(self.amplitudes[self.basis.index(config)])

    def normalized(self) -> StateVector:
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amplitudes / n)

    def __mul__(self, scalar: complex) -> StateVector:
        return StateVector(self.basis, self.amplitudes * scalar)

    __rmul__ = __mul__


def basis_state(basis: ProductBasis, config: str | Sequence[str]) -> StateVector:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(config)] = 1.0
    return StateVector(basis, amps)


def product_state(
    basis: ProductBasis, local: Mapping[int, Mapping[str, complex] | np.ndarray]
) -> StateVector:
    """Normalized product state from per-atom amplitudes.

    ``local`` maps atom id to either a vector over that atom's levels or a
    ``{level: amplitude}`` dict. Every atom in the basis must be given.
    """
    vec = np.ones(1, dtype=complex)
    for scheme in basis.schemes:
        spec = local[scheme.atom_id]
        if isinstance(spec, Mapping):
            v = np.zeros(scheme.size, dtype=complex)
            for lvl, amp in spec.items():
                v[scheme.index(lvl)] = amp
        else:
            v = np.asarray(spec, dtype=complex).reshape(-1)
            if v.shape[0] != scheme.size:
                raise ValueError(f"atom {scheme.atom_id}: expected {scheme.size} amplitudes")
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError(f"atom {scheme.atom_id}: zero local state")
        vec = np.kron(vec, v / n)
    return StateVector(basis, vec)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense Hermitian matrix on a product basis, in rad/us."""

    basis: ProductBasis
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)
        d = self.basis.dim
        if m.shape != (d, d):
            raise ValueError(f"operator shape {m.shape} does not match basis dim {d}")
        if not np.all(np.isfinite(m)):
            raise NumericalError("operator has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
            raise ValueError("operator is not Hermitian")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def zero(cls, basis: ProductBasis) -> HermitianOperator:
        return cls(basis, np.zeros((basis.dim, basis.dim), dtype=complex))

    @cached_property
    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        try:
            w, v = np.linalg.eigh(self.matrix)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition failed: {exc}") from exc
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
            raise NumericalError("eigendecomposition produced non-finite values")
        return _frozen(w), _frozen(v)

    def _check(self, other: HermitianOperator) -> None:
        if other.basis != self.basis:
            raise ValueError("operators live on different bases")

    def __add__(self, other: HermitianOperator) -> HermitianOperator:
        self._check(other)
        return HermitianOperator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other: HermitianOperator) -> HermitianOperator:
        self._check(other)
        return HermitianOperator(self.basis, self.matrix - other.matrix)

    def __mul__(self, scalar: float) -> HermitianOperator:
        if np.iscomplexobj(scalar) and np.imag(scalar) != 0:
            raise TypeError("Hermitian operators only scale by real numbers")
        return HermitianOperator(self.basis, self.matrix * float(np.real(scalar)))

    __rmul__ = __mul__

    def __neg__(self) -> HermitianOperator:
        return HermitianOperator(self.basis, -self.matrix)

    def expectation(self, state: StateVector) -> float:
        if state.basis != self.basis:
            raise ValueError("state and operator live on different bases")
        a = state.amplitudes
        return float(np.real(np.vdot(a, self.matrix @ a)))


def embed_operator(
    basis: ProductBasis,
    atoms: Sequence[int],
    local: np.ndarray,
    *,
    add_hc: bool = False,
    hermitian: bool = True,
) -> HermitianOperator | np.ndarray:
    """Lift ``local`` (acting on ``atoms``, in the given order) to the full space.

    The local matrix is indexed by the product of the named atoms' levels,
    first-named atom most significant. With ``add_hc`` the conjugate transpose
    is added after embedding. With ``hermitian=False`` the raw ndarray is
    returned instead of a :class:`HermitianOperator`.
    """
    atoms = list(atoms)
    if len(set(atoms)) != len(atoms):
        raise ValueError(f"repeated atom in {atoms}")
    positions = [basis.position(a) for a in atoms]
    dims = basis.dims
    local = np.asarray(local, dtype=complex)
    ldim = prod(dims[p] for p in positions)
    if local.shape != (ldim, ldim):
        raise ValueError(
            f"local operator shape {local.shape} does not match atoms {atoms} (dim {ldim})"
        )
    rest = [p for p in range(len(dims)) if p not in positions]
    full = np.kron(local, np.eye(prod(dims[p] for p in rest), dtype=complex))
    order = positions + rest
    n = len(dims)
    tensor = full.reshape([dims[p] for p in order] * 2)
    inv = np.argsort(order)
    tensor = tensor.transpose(list(inv) + [n + i for i in inv])
    out = tensor.reshape(basis.dim, basis.dim)
    if add_hc:
        out = out + out.conj().T
    if not hermitian:
        return out
    return HermitianOperator(basis, out)


def _propagate(H: HermitianOperator, amps: np.ndarray, times: np.ndarray) -> np.ndarray:
    w, v = H.eigensystem
    coeff = v.conj().T @ amps
    phases = np.exp(-1j * np.outer(times, w))
    return (phases * coeff) @ v.T


def evolve(state: StateVector, H: HermitianOperator, t: float) -> StateVector:
    """Return ``exp(-i H t) |state>`` using the eigendecomposition of ``H``."""
    if state.basis != H.basis:
        raise ValueError("state and Hamiltonian live on different bases")
    if t < 0:
        raise ValueError(f"negative duration {t}")
    if t == 0:
        return state
    out = _propagate(H, state.amplitudes, np.array([float(t)]))[0]
    _check_norm(state.amplitudes, out)
    return StateVector(state.basis, out)


def evolve_samples(state: StateVector, H: HermitianOperator, times: np.ndarray) -> np.ndarray:
    """Amplitudes at each of ``times`` (rows), sharing one eigendecomposition."""
    if state.basis != H.basis:
        raise ValueError("state and Hamiltonian live on different bases")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("negative sample time")
    return _propagate(H, state.amplitudes, times)


def _check_norm(before: np.ndarray, after: np.ndarray) -> None:
    n0 = np.linalg.norm(before)
    n1 = np.linalg.norm(after)
    if not np.isfinite(n1) or abs(n1 - n0) > NORM_TOL * max(1.0, n0):
        raise NumericalError(f"norm drifted from {n0!r} to {n1!r}")


def population(
    state: StateVector,
    which: str | Sequence[str] | Mapping[int, str] | HermitianOperator | np.ndarray,
) -> float:
    """Population of a configuration, of a partial assignment, or ``<P>``.

    ``which`` may be a full configuration label, a ``{atom_id: level}`` mapping
    (the remaining atoms are summed over), or a projector.
    """
    amps = state.amplitudes
    if isinstance(which, HermitianOperator):
        return which.expectation(state)
    if isinstance(which, np.ndarray):
        return float(np.real(np.vdot(amps, which @ amps)))
    if isinstance(which, Mapping):
        mask = np.ones(state.basis.dim, dtype=bool)
        for atom_id, level in which.items():
            mask &= state.basis.level_mask(atom_id, level)
        return float(np.sum(np.abs(amps[mask]) ** 2))
    return float(abs(amps[state.basis.index(which)]) ** 2)


def overlap_fidelity(a: StateVector, b: StateVector) -> float:
    if a.basis != b.basis:
        raise ValueError("states live on different bases")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
