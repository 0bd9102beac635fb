"""Pulse-sequence compiler for arbitrary two-mode photon superpositions.

The compiler runs the state-reduction recursion backwards: starting from
the requested superposition over |n1, n2>|g> with n1 + n2 <= N_max, it
peels population off one anti-diagonal at a time, alternating photon-
subtracting sidebands to sweep each diagonal into a corner and
exchange/carrier pulses to collapse the corner, until only the vacuum
remains.  Each reduction step fixes one pulse: its transition type and
resonant drive frequency come from the plan, its duration from the
moduli of the two amplitudes being merged, and its drive phase from a
scalar transcendental relation.  Replaying the recorded pulses forward
then builds the target from |0,0>|g> exactly (under the ideal sideband
propagators), with every intermediate state confined to the working
space -- the algorithm's defining no-leakage property.

Step counts are quadratic in N_max in general (2 N^2 - N + 2) and linear
(4 N - 1) for N00N-type targets, which never need the exchange pulse.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass

import numpy as np

from . import evolve
from .couplings import (CARRIER, EXCHANGE, SIDEBAND_1, SIDEBAND_2, DriveConfig,
                        SystemParams, TransitionType, ghz_from_angular,
                        angular_from_ghz, ns_from_seconds, seconds_from_ns,
                        rabi_amplitude, resonant_drive_frequency)
from .fock import GROUND, EXCITED, SpaceDescriptor, StateVector, build_space
from .fock import drive_frame_phases, free_rotation_phases

TWO_PI = 2.0 * math.pi

G_TO_E = "g->e"
E_TO_G = "e->g"


class SynthesisError(RuntimeError):
    """Raised when a target cannot be compiled with the given parameters."""


@dataclass(frozen=True)
class PlanStep:
    """One reduction move: which transition acts on which Fock pair.

    pair_g is the ground-side label (n1, n2); the excited-side partner is
    (n1 + k1, n2 + k2).  direction names the side being emptied during
    reduction (the paper arrows' direction of population transfer).
    """

    transition: TransitionType
    direction: str
    pair_g: tuple[int, int]

    def __post_init__(self):
        if self.direction not in (G_TO_E, E_TO_G):
            raise ValueError("direction must be 'g->e' or 'e->g'")

    @property
    def pair_e(self) -> tuple[int, int]:
        return (self.pair_g[0] + self.transition.k1,
                self.pair_g[1] + self.transition.k2)


def plan_procedures(n_max: int) -> list[PlanStep]:
    """Reduction plan for a full-triangle target, in reduction order.

    2*n_max procedures: odd ones zigzag a diagonal of constant photon sum
    into a corner with the two one-photon sidebands; even ones collapse
    that corner onto the axis with exchange/carrier pairs.  Length is
    2*n_max**2 - n_max + 2.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    steps: list[PlanStep] = []
    for j in range(n_max):                       # sweep the top diagonal
        steps.append(PlanStep(SIDEBAND_2, G_TO_E, (j, n_max - j)))
        if j < n_max - 1:
            steps.append(PlanStep(SIDEBAND_1, E_TO_G, (j + 1, n_max - 1 - j)))
    steps.append(PlanStep(SIDEBAND_1, G_TO_E, (n_max, 0)))
    for mu in range(1, n_max):
        m = n_max - mu
        for j in range(m):                       # roll diagonal m onto the axis
            steps.append(PlanStep(EXCHANGE, G_TO_E, (j, m - j)))
            steps.append(PlanStep(CARRIER, E_TO_G, (j + 1, m - j - 1)))
        for j in range(m - 1):                   # sweep diagonal m-1 of the excited sheet
            steps.append(PlanStep(SIDEBAND_1, E_TO_G, (j + 1, m - 1 - j)))
            steps.append(PlanStep(SIDEBAND_2, G_TO_E, (j + 1, m - 1 - j)))
        steps.append(PlanStep(SIDEBAND_1, G_TO_E, (m, 0)))
    steps.append(PlanStep(CARRIER, E_TO_G, (0, 0)))
    return steps


def plan_noon(n_max: int) -> list[PlanStep]:
    """Reduction plan specialized to (|N,0> + |0,N>)/sqrt(2) targets.

    The diagonal sweep is followed by a straight descent down the n1 axis
    with alternating carrier and sideband pulses; the exchange transition,
    weakest of the four, is never needed.  Length is 4*n_max - 1.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    steps: list[PlanStep] = []
    for j in range(n_max):
        steps.append(PlanStep(SIDEBAND_2, G_TO_E, (j, n_max - j)))
        if j < n_max - 1:
            steps.append(PlanStep(SIDEBAND_1, E_TO_G, (j + 1, n_max - 1 - j)))
    steps.append(PlanStep(SIDEBAND_1, G_TO_E, (n_max, 0)))
    for m in range(n_max - 1, -1, -1):
        steps.append(PlanStep(CARRIER, E_TO_G, (m, 0)))
        if m > 0:
            steps.append(PlanStep(SIDEBAND_1, G_TO_E, (m, 0)))
    return steps


def step_count(n_max: int, kind: str = "general") -> int:
    """Closed-form sequence length: 2N^2 - N + 2 (general) or 4N - 1 (noon)."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if kind == "general":
        return 2 * n_max * n_max - n_max + 2
    if kind == "noon":
        return 4 * n_max - 1
    raise ValueError("kind must be 'general' or 'noon'")


@dataclass(frozen=True)
class TargetState:
    """Normalized amplitude map over the triangle n1 + n2 <= n_max, qubit ground.

    amplitudes maps (n1, n2) to a complex coefficient; entries outside the
    triangle are rejected and the squared moduli must sum to one.
    """

    n_max: int
    amplitudes: dict

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        amps = {}
        total = 0.0
        for (n1, n2), c in self.amplitudes.items():
            if n1 < 0 or n2 < 0 or n1 + n2 > self.n_max:
                raise ValueError(f"amplitude at {(n1, n2)} outside the triangle")
            c = complex(c)
            if c != 0:
                amps[(int(n1), int(n2))] = c
                total += abs(c) ** 2
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"amplitudes are not normalized: sum |C|^2 = {total!r}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, n_max: int, amplitudes: dict) -> "TargetState":
        """Build after rescaling the given map to unit norm."""
        total = math.sqrt(sum(abs(complex(c)) ** 2 for c in amplitudes.values()))
        if total == 0.0:
            raise ValueError("cannot normalize an all-zero amplitude map")
        return cls(n_max, {k: complex(c) / total for k, c in amplitudes.items()})

    @classmethod
    def even(cls, n_max: int) -> "TargetState":
        """Equal-weight superposition of every |n1, n2> with n1 + n2 <= n_max."""
        pairs = [(n1, n2) for n1 in range(n_max + 1) for n2 in range(n_max + 1)
                 if n1 + n2 <= n_max]
        c = 1.0 / math.sqrt(len(pairs))
        return cls(n_max, {p: c for p in pairs})

    @classmethod
    def noon(cls, n_max: int) -> "TargetState":
        """(|N, 0> + |0, N>)/sqrt(2)."""
        c = 1.0 / math.sqrt(2.0)
        return cls(n_max, {(n_max, 0): c, (0, n_max): c})

    def state_vector(self, space: SpaceDescriptor) -> StateVector:
        if space.cutoff1 < self.n_max or space.cutoff2 < self.n_max:
            raise ValueError("space cutoffs are below the target photon number")
        amps = np.zeros(space.dimension, dtype=complex)
        for (n1, n2), c in self.amplitudes.items():
            amps[space.index(n1, n2, GROUND)] = c
        return StateVector(space, amps)


@dataclass(frozen=True)
class PulseStep:
    """One compiled pulse: resonant frequency, duration and phase for a
    transition acting on a specific Fock pair."""

    nu: int
    transition: TransitionType
    direction: str
    pair_g: tuple[int, int]
    omega_drive: float
    duration: float
    phase: float

    def __post_init__(self):
        if self.direction not in (G_TO_E, E_TO_G):
            raise ValueError("direction must be 'g->e' or 'e->g'")
        if self.duration < 0.0:
            raise ValueError("duration must be non-negative")
        object.__setattr__(self, "phase", self.phase % TWO_PI)


@dataclass(frozen=True)
class PulseSequence:
    """Compiled drive program, steps ordered for forward generation (nu = 1..f)."""

    steps: tuple
    params: SystemParams
    x: float

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.steps))

    def to_json_dict(self) -> dict:
        return {
            "params": self.params.to_ghz_dict(),
            "x": self.x,
            "steps": [
                {
                    "nu": s.nu,
                    "k1": s.transition.k1,
                    "k2": s.transition.k2,
                    "direction": s.direction,
                    "pair_g": list(s.pair_g),
                    "omega_drive_ghz": ghz_from_angular(s.omega_drive),
                    "duration_ns": ns_from_seconds(s.duration),
                    "phase_rad": s.phase,
                }
                for s in self.steps
            ],
            "total_ns": ns_from_seconds(self.total_duration),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PulseSequence":
        steps = tuple(
            PulseStep(
                nu=int(s["nu"]),
                transition=TransitionType(int(s["k1"]), int(s["k2"])),
                direction=s["direction"],
                pair_g=tuple(s["pair_g"]),
                omega_drive=angular_from_ghz(s["omega_drive_ghz"]),
                duration=seconds_from_ns(s["duration_ns"]),
                phase=float(s["phase_rad"]),
            )
            for s in d["steps"]
        )
        return cls(steps=steps, params=SystemParams.from_ghz_dict(d["params"]),
                   x=float(d["x"]))


def save_sequence(sequence: PulseSequence, path) -> None:
    with open(path, "w") as f:
        json.dump(sequence.to_json_dict(), f, indent=2)


def load_sequence(path) -> PulseSequence:
    with open(path) as f:
        return PulseSequence.from_json_dict(json.load(f))


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % TWO_PI - math.pi


def solve_phase(rhs_angle: float, x: float, omega_t: float,
                sign_offset: float, arg_sign: int) -> float:
    """Solve the drive-phase relation of one pulse for phi in [0, 2pi).

    Finds phi with

        rhs_angle = x sin(omega_t + phi) + omega_t - (-phi + arg_sign*pi)
                    + sign_offset   (mod 2pi),

    i.e. the condition that the emptied amplitude interferes to zero.  In
    terms of the total drive phase u = omega_t + phi the relation reads
    u + x sin(u) = const (mod 2pi), whose left side covers a full period
    for any x, so a root always exists.  For x > 1 several roots can be
    equally valid; the principal branch is taken: the smallest total
    phase u in [0, 2pi).  This tie-break is part of the compiled output's
    definition and is kept stable.  The residual of the returned root is
    at most 1e-10 rad.
    """

    def residual(phi: float) -> float:
        return _wrap_angle(x * math.sin(omega_t + phi) + omega_t + phi
                           - arg_sign * math.pi + sign_offset - rhs_angle)

    n_grid = 4096
    grid = np.linspace(0.0, TWO_PI, n_grid + 1)
    raw = (x * np.sin(omega_t + grid) + omega_t + grid
           - arg_sign * math.pi + sign_offset - rhs_angle)
    vals = np.mod(raw + math.pi, TWO_PI) - math.pi
    # sign changes across a wrap jump are not roots
    bracket = (vals[:-1] * vals[1:] < 0.0) & (np.abs(np.diff(vals)) < math.pi)
    roots = list(grid[:-1][vals[:-1] == 0.0])
    for i in np.nonzero(bracket)[0]:
        lo, hi = grid[i], grid[i + 1]
        flo = vals[i]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = residual(mid)
            if flo * fm <= 0.0:
                hi = mid
            else:
                lo, flo = mid, fm
        roots.append(0.5 * (lo + hi))
    roots = [r % TWO_PI for r in roots if abs(residual(r)) <= 1e-10]
    if not roots:
        raise SynthesisError("phase relation has no root on the scan grid")
    u_principal = min((omega_t + r) % TWO_PI for r in roots)
    return (u_principal - omega_t) % TWO_PI


def _reduction_unitary(space, params, x, k1, k2, omega, phi, t):
    """Inverse of one ideal forward step: frame(0)^dag U^dag frame(t)."""
    u = evolve.ideal_propagator(space, params, x, k1, k2, phi, t)
    in_phases = drive_frame_phases(space, x, omega, phi, 0.0)
    out_phases = (free_rotation_phases(space, params, t)
                  + drive_frame_phases(space, x, omega, phi, t))

    def apply(psi):
        psi = np.exp(1j * out_phases) * psi
        psi = u.conj().T @ psi
        return np.exp(-1j * in_phases) * psi

    return apply


def synthesize(target: TargetState, params: SystemParams, x: float,
               plan: list[PlanStep] | None = None,
               prune_tol: float = 1e-13) -> PulseSequence:
    """Compile a target state into a pulse sequence.

    Runs the reduction recursion with exact ideal propagators, so every
    side oscillation the pulses cause on non-targeted pairs is accounted
    for.  Steps whose source component is already empty are recorded with
    zero duration (keeping the bookkeeping aligned with the closed-form
    step counts).  Raises SynthesisError if a needed transition has zero
    amplitude or the recursion fails to terminate on the vacuum.
    """
    if x <= 0.0:
        raise SynthesisError("reduced drive strength x must be positive")
    if plan is None:
        plan = plan_procedures(max(1, target.n_max))
    space = build_space(max(1, target.n_max), max(1, target.n_max))
    psi = target.state_vector(space).amplitudes.copy()

    recorded: list[PulseStep] = []
    nu = len(plan)
    for move in plan:
        k1, k2 = move.transition.k1, move.transition.k2
        n1, n2 = move.pair_g
        m1, m2 = move.pair_e
        omega = resonant_drive_frequency(params, k1, k2)
        z1, z2 = min(n1, m1), min(n2, m2)
        drive = DriveConfig(x=x, omega_drive=omega, phi=0.0)
        amp0 = rabi_amplitude(params, drive, -1, k1, k2, z1, z2)
        c_amp = psi[space.index(n1, n2, GROUND)]
        d_amp = psi[space.index(m1, m2, EXCITED)]
        source = c_amp if move.direction == G_TO_E else d_amp
        if abs(source) <= prune_tol:
            duration, phi = 0.0, 0.0
        else:
            if abs(amp0) == 0.0:
                raise SynthesisError(
                    f"step {nu}: transition {move.transition} on pair "
                    f"{move.pair_g} has zero amplitude; increase eta")
            other = d_amp if move.direction == G_TO_E else c_amp
            if abs(other) == 0.0:
                angle = 0.5 * math.pi
            elif move.direction == G_TO_E:
                angle = math.atan(abs(c_amp) / abs(d_amp))
            else:
                angle = math.atan(abs(d_amp) / abs(c_amp))
            duration = angle / abs(amp0)
            # arg convention: the angle of a zero amplitude is taken as 0
            rhs = (cmath.phase(c_amp) if c_amp != 0 else 0.0) \
                - (cmath.phase(d_amp) if d_amp != 0 else 0.0)
            arg_sign = 0 if (amp0.real > 0) else 1    # amp0 is real at phi = 0
            sign_offset = -0.5 * math.pi if move.direction == G_TO_E else 0.5 * math.pi
            phi = solve_phase(rhs, x, omega * duration, sign_offset, arg_sign)
            psi = _reduction_unitary(space, params, x, k1, k2, omega, phi, duration)(psi)
            emptied = space.index(n1, n2, GROUND) if move.direction == G_TO_E \
                else space.index(m1, m2, EXCITED)
            if abs(psi[emptied]) > 1e-9:
                raise SynthesisError(
                    f"step {nu}: residual {abs(psi[emptied]):.2e} left on the "
                    f"emptied component (phase solution inconsistent)")
        recorded.append(PulseStep(nu=nu, transition=move.transition,
                                  direction=move.direction, pair_g=move.pair_g,
                                  omega_drive=omega, duration=duration, phase=phi))
        nu -= 1

    vac = abs(psi[space.index(0, 0, GROUND)])
    if abs(vac - 1.0) > 1e-9:
        raise SynthesisError(
            f"reduction did not terminate on the vacuum (|<0,0,g|psi>| = {vac:.12f})")
    return PulseSequence(steps=tuple(reversed(recorded)), params=params, x=x)
