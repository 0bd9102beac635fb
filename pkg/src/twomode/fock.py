"""Truncated Hilbert space of two bosonic modes and one qubit.

Basis labels are (n1, n2, q) with q = 0 (ground) or 1 (excited); the flat
index runs qubit-slowest, so a dimension-d operator splits into four
(d/2 x d/2) blocks ordered [[gg, ge], [eg, ee]].  All operators are dense
complex matrices; the spaces used here stay small enough (a few hundred)
that sparsity would only add complexity.

Ladder truncation corrupts matrix elements near the top Fock level, so
unitarity and accuracy statements are made on an interior subspace that
excludes a guard band below each cutoff.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from .couplings import SystemParams

GROUND, EXCITED = 0, 1


@dataclass(frozen=True)
class SpaceDescriptor:
    """Two cutoffs plus the induced bijective (n1, n2, q) <-> flat index map."""

    cutoff1: int
    cutoff2: int

    def __post_init__(self):
        if self.cutoff1 < 0 or self.cutoff2 < 0:
            raise ValueError("Fock cutoffs must be non-negative")

    @property
    def dim1(self) -> int:
        return self.cutoff1 + 1

    @property
    def dim2(self) -> int:
        return self.cutoff2 + 1

    @property
    def modes_dim(self) -> int:
        return self.dim1 * self.dim2

    @property
    def dimension(self) -> int:
        return 2 * self.dim1 * self.dim2

    def index(self, n1: int, n2: int, q: int) -> int:
        if not (0 <= n1 <= self.cutoff1):
            raise ValueError(f"n1={n1} outside [0, {self.cutoff1}]")
        if not (0 <= n2 <= self.cutoff2):
            raise ValueError(f"n2={n2} outside [0, {self.cutoff2}]")
        if q not in (GROUND, EXCITED):
            raise ValueError("q must be 0 (ground) or 1 (excited)")
        return q * self.modes_dim + n1 * self.dim2 + n2

    def label(self, index: int) -> tuple[int, int, int]:
        if not (0 <= index < self.dimension):
            raise ValueError("index out of range")
        q, rest = divmod(index, self.modes_dim)
        n1, n2 = divmod(rest, self.dim2)
        return n1, n2, q

    @cached_property
    def n1_of_index(self) -> np.ndarray:
        reps = np.repeat(np.arange(self.dim1), self.dim2)
        return np.tile(reps, 2)

    @cached_property
    def n2_of_index(self) -> np.ndarray:
        reps = np.tile(np.arange(self.dim2), self.dim1)
        return np.tile(reps, 2)

    @cached_property
    def q_of_index(self) -> np.ndarray:
        return np.repeat(np.array([GROUND, EXCITED]), self.modes_dim)

    def interior_mask(self, guard_band: int = 2) -> np.ndarray:
        """True on labels at least guard_band levels below both cutoffs."""
        return ((self.n1_of_index <= self.cutoff1 - guard_band)
                & (self.n2_of_index <= self.cutoff2 - guard_band))

    def edge_mask(self) -> np.ndarray:
        """True on labels sitting at either truncation edge."""
        return ((self.n1_of_index == self.cutoff1)
                | (self.n2_of_index == self.cutoff2))


def build_space(cutoff1: int, cutoff2: int) -> SpaceDescriptor:
    """Create a space with inclusive per-mode photon cutoffs."""
    return SpaceDescriptor(int(cutoff1), int(cutoff2))


@dataclass
class StateVector:
    """Pure state: complex amplitude per basis label of `space`."""

    space: SpaceDescriptor
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.space.dimension,):
            raise ValueError(f"amplitudes must have shape ({self.space.dimension},)")
        self.amplitudes = amps

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / n)

    def overlap(self, other: "StateVector") -> complex:
        if other.space != self.space:
            raise ValueError("states live on different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def population(self, n1: int, n2: int, q: int) -> float:
        return float(abs(self.amplitudes[self.space.index(n1, n2, q)]) ** 2)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.space, self.amplitudes.copy())


@dataclass
class DensityMatrix:
    """Mixed state: complex matrix over the basis of `space`."""

    space: SpaceDescriptor
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.dimension
        if m.shape != (d, d):
            raise ValueError(f"matrix must have shape ({d}, {d})")
        self.matrix = m

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        return cls(state.space, np.outer(state.amplitudes, state.amplitudes.conj()))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_deviation(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        sym = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(sym)[0])

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.space, self.matrix.copy())


def basis_state(space: SpaceDescriptor, n1: int, n2: int, q: int) -> StateVector:
    amps = np.zeros(space.dimension, dtype=complex)
    amps[space.index(n1, n2, q)] = 1.0
    return StateVector(space, amps)


def vacuum_state(space: SpaceDescriptor) -> StateVector:
    """|0, 0>|g>, the initial state of every compiled sequence."""
    return basis_state(space, 0, 0, GROUND)


def _single_mode_annihilate(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def _embed_mode(space: SpaceDescriptor, op: np.ndarray, mode: int) -> np.ndarray:
    eye_q = np.eye(2, dtype=complex)
    if mode == 1:
        joint = np.kron(op, np.eye(space.dim2, dtype=complex))
    elif mode == 2:
        joint = np.kron(np.eye(space.dim1, dtype=complex), op)
    else:
        raise ValueError("mode must be 1 or 2")
    return np.kron(eye_q, joint)


def mode_operator(space: SpaceDescriptor, mode: int, kind: str) -> np.ndarray:
    """Ladder operator of one mode embedded in the full space.

    kind is one of 'annihilate', 'create', 'number'; matrix elements carry
    the standard sqrt(n) weights on the truncated Fock ladder.
    """
    dim = space.dim1 if mode == 1 else space.dim2
    a = _single_mode_annihilate(dim)
    if kind == "annihilate":
        op = a
    elif kind == "create":
        op = a.conj().T
    elif kind == "number":
        op = np.diag(np.arange(dim, dtype=float)).astype(complex)
    else:
        raise ValueError(f"unknown mode operator kind {kind!r}")
    return _embed_mode(space, op, mode)


_QUBIT_OPS = {
    "sx": np.array([[0, 1], [1, 0]], dtype=complex),
    "sz": np.array([[-1, 0], [0, 1]], dtype=complex),        # sz|e> = +|e>
    "s+": np.array([[0, 0], [1, 0]], dtype=complex),         # |e><g|
    "s-": np.array([[0, 1], [0, 0]], dtype=complex),         # |g><e|
    "pg": np.array([[1, 0], [0, 0]], dtype=complex),
    "pe": np.array([[0, 0], [0, 1]], dtype=complex),
}


def qubit_operator(space: SpaceDescriptor, kind: str) -> np.ndarray:
    """Pauli-algebra operator on the qubit factor, identity on the modes.

    kind in {'sx', 'sz', 's+', 's-', 'pg', 'pe'}; basis ordering is
    (ground, excited).
    """
    try:
        q = _QUBIT_OPS[kind]
    except KeyError:
        raise ValueError(f"unknown qubit operator kind {kind!r}") from None
    return np.kron(q, np.eye(space.modes_dim, dtype=complex))


def _coherent_tail(alpha: float, cutoff: int) -> float:
    # probability of a coherent state |alpha| exceeding the cutoff
    x = alpha * alpha
    term, acc = 1.0, 1.0
    for n in range(1, cutoff + 1):
        term *= x / n
        acc += term
    return max(0.0, 1.0 - math.exp(-x) * acc)


def displacement_unitary(space: SpaceDescriptor, eta1: float, eta2: float,
                         tail_tolerance: float = 1e-9) -> np.ndarray:
    """Qubit-conditioned displacement exp[sum_l eta_l (sz/2)(a_l^dag - a_l)].

    Exactly unitary on the truncated space (the generator is anti-Hermitian
    after truncation), but its matrix elements are only faithful on the
    interior subspace.  Warns when the coherent-state tail beyond either
    cutoff exceeds tail_tolerance.
    """
    if not (math.isfinite(eta1) and math.isfinite(eta2)):
        raise ValueError("displacement parameters must be finite")
    for eta, cutoff, mode in ((eta1, space.cutoff1, 1), (eta2, space.cutoff2, 2)):
        tail = _coherent_tail(abs(eta) / 2.0, cutoff)
        if tail > tail_tolerance:
            warnings.warn(
                f"displacement on mode {mode} populates levels beyond the "
                f"cutoff {cutoff} with probability {tail:.2e}; raise the cutoff",
                stacklevel=2)
    blocks = []
    for half_sign in (-0.5, +0.5):                      # ground, excited
        a1 = _single_mode_annihilate(space.dim1)
        a2 = _single_mode_annihilate(space.dim2)
        d1 = expm(half_sign * eta1 * (a1.conj().T - a1))
        d2 = expm(half_sign * eta2 * (a2.conj().T - a2))
        blocks.append(np.kron(d1, d2))
    out = np.zeros((space.dimension, space.dimension), dtype=complex)
    m = space.modes_dim
    out[:m, :m] = blocks[0]
    out[m:, m:] = blocks[1]
    return out


def free_rotation_phases(space: SpaceDescriptor, params: SystemParams, t: float) -> np.ndarray:
    """Phase exponents theta with exp[+i(omega_z sz/2 + sum_l omega_l n_l) t] = diag(e^{i theta})."""
    sz = np.where(space.q_of_index == EXCITED, 1.0, -1.0)
    return (0.5 * params.omega_z * sz
            + params.omega_1 * space.n1_of_index
            + params.omega_2 * space.n2_of_index) * t


def free_rotation(space: SpaceDescriptor, params: SystemParams, t: float) -> np.ndarray:
    """Diagonal unitary exp[+i(omega_z sz/2 + sum_l omega_l a_l^dag a_l) t]."""
    if t < 0.0:
        raise ValueError("t must be non-negative")
    return np.diag(np.exp(1j * free_rotation_phases(space, params, t)))


def drive_frame_phases(space: SpaceDescriptor, x: float, omega_drive: float,
                       phi: float, t: float) -> np.ndarray:
    """Phase exponents of the drive-frame factor exp[+i x (sz/2) sin(omega t + phi)]."""
    sz = np.where(space.q_of_index == EXCITED, 1.0, -1.0)
    return 0.5 * x * math.sin(omega_drive * t + phi) * sz


def drive_frame_unitary(space: SpaceDescriptor, x: float, omega_drive: float,
                        phi: float, t: float) -> np.ndarray:
    """Diagonal unitary exp[+i x (sz/2) sin(omega_drive t + phi)]."""
    return np.diag(np.exp(1j * drive_frame_phases(space, x, omega_drive, phi, t)))
