"""Dynamics engines and fidelity metrics.

Three levels of realism for replaying a compiled pulse sequence:

* ideal sideband propagators -- the closed-form Rabi blocks each pulse is
  designed against, stitched together with the per-step frame factors;
* full time-dependent Schroedinger evolution -- integrates the complete
  coupled dynamics, including every off-resonant term the compiler
  neglects, in one of three unitarily equivalent frames;
* Lindblad master-equation evolution -- adds qubit relaxation/dephasing
  (in the qubit eigenbasis) and cavity decay.

Frames.  The default 'displaced' frame removes the longitudinal drive
exactly, leaving a smooth bounded coupling with drive factor
exp[i x sin(omega t + phi)]; 'displaced-explicit' keeps the oscillating
longitudinal drive term explicitly; 'lab' integrates the untransformed
Hamiltonian starting from the conditionally displaced vacuum and undoes
the displacement before any fidelity is taken.  All three agree up to
Fock-truncation effects and serve as mutual cross-checks.

Integration uses a fourth-order commutator-free scheme with two Gauss
nodes per micro-step, applied in the interaction picture of the static
diagonal part so micro-steps only need to resolve the drive and detuning
beats, not the absolute energies.  Dissipators are applied in whichever
frame is simulated without transforming the jump operators; the neglected
corrections are second order in eta and in the decay rates.
"""

from __future__ import annotations

import cmath
import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import fock
from .couplings import (DriveConfig, SystemParams, TransitionType,
                        ns_from_seconds, rabi_amplitude,
                        resonant_drive_frequency)
from .fock import (EXCITED, GROUND, DensityMatrix, SpaceDescriptor, StateVector,
                   drive_frame_phases, free_rotation_phases)

_SQRT3 = math.sqrt(3.0)
_CF4_NODES = (0.5 - _SQRT3 / 6.0, 0.5 + _SQRT3 / 6.0)
_CF4_WEIGHTS = (0.25 + _SQRT3 / 6.0, 0.25 - _SQRT3 / 6.0)

EDGE_POPULATION_TOLERANCE = 1e-6


class IntegrationError(RuntimeError):
    """Raised when a propagation run cannot meet its accuracy contract."""


@dataclass(frozen=True)
class DecayRates:
    """Lindblad channel rates (angular, rad/s): qubit relaxation, two
    pure-dephasing channels, and one decay rate per cavity."""

    gamma_eg: float = 0.0
    gamma_ee: float = 0.0
    gamma_gg: float = 0.0
    kappa_1: float = 0.0
    kappa_2: float = 0.0

    def __post_init__(self):
        for name in ("gamma_eg", "gamma_ee", "gamma_gg", "kappa_1", "kappa_2"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_mhz(cls, gamma_eg_mhz=0.0, gamma_ee_mhz=0.0, gamma_gg_mhz=0.0,
                 kappa_1_mhz=0.0, kappa_2_mhz=0.0) -> "DecayRates":
        from .couplings import angular_from_mhz
        return cls(angular_from_mhz(gamma_eg_mhz), angular_from_mhz(gamma_ee_mhz),
                   angular_from_mhz(gamma_gg_mhz), angular_from_mhz(kappa_1_mhz),
                   angular_from_mhz(kappa_2_mhz))


@dataclass(frozen=True)
class IntegratorOptions:
    """Knobs for the full and dissipative engines.

    max_step caps the micro-step (seconds); the default cap is one
    fiftieth of the fastest beat period (qubit + drive frequency), and
    tightening rtol shrinks it further.  fock_cutoff and guard_band are
    consumed by callers that build simulation spaces.
    """

    max_step: float | None = None
    rtol: float = 1e-6
    atol: float = 1e-9
    frame: str = "displaced"
    guard_band: int = 2
    fock_cutoff: int | tuple[int, int] = 7

    def __post_init__(self):
        if self.frame not in ("displaced", "displaced-explicit", "lab"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_step is not None and self.max_step <= 0.0:
            raise ValueError("max_step must be positive")

    def cutoffs(self) -> tuple[int, int]:
        c = self.fock_cutoff
        return (c, c) if isinstance(c, int) else (int(c[0]), int(c[1]))


def _iter_pairs(space: SpaceDescriptor, k1: int, k2: int):
    """Yield (g_index, e_index, zeta1, zeta2) for every coupled pair that
    fits inside the truncated space; unpaired edge labels are left alone."""
    for n1 in range(space.dim1):
        m1 = n1 + k1
        if m1 < 0 or m1 > space.cutoff1:
            continue
        for n2 in range(space.dim2):
            m2 = n2 + k2
            if m2 < 0 or m2 > space.cutoff2:
                continue
            yield (space.index(n1, n2, GROUND), space.index(m1, m2, EXCITED),
                   min(n1, m1), min(n2, m2))


def sideband_hamiltonian(space: SpaceDescriptor, params: SystemParams, x: float,
                         k1: int, k2: int, phi: float = 0.0) -> np.ndarray:
    """Effective resonant Hamiltonian of one switched-on transition type.

    Couples every pair |n1,n2>|g> <-> |n1+k1,n2+k2>|e> with its own
    amplitude; the result is exactly Hermitian by construction.
    """
    TransitionType(k1, k2)
    drive = DriveConfig(x=x, omega_drive=params.omega_z, phi=phi)
    h = np.zeros((space.dimension, space.dimension), dtype=complex)
    for g_idx, e_idx, z1, z2 in _iter_pairs(space, k1, k2):
        amp = rabi_amplitude(params, drive, -1, k1, k2, z1, z2)
        h[e_idx, g_idx] = amp
        h[g_idx, e_idx] = np.conj(amp)
    return h


def ideal_propagator(space: SpaceDescriptor, params: SystemParams, x: float,
                     k1: int, k2: int, phi: float, t: float) -> np.ndarray:
    """Closed-form time evolution of :func:`sideband_hamiltonian`.

    Each coupled pair is a 2x2 Rabi block with cos/sin entries; basis
    labels without a partner inside the truncation act as identity.
    """
    if t < 0.0:
        raise ValueError("t must be non-negative")
    TransitionType(k1, k2)
    drive = DriveConfig(x=x, omega_drive=params.omega_z, phi=phi)
    u = np.eye(space.dimension, dtype=complex)
    for g_idx, e_idx, z1, z2 in _iter_pairs(space, k1, k2):
        amp = rabi_amplitude(params, drive, -1, k1, k2, z1, z2)
        c = math.cos(abs(amp) * t)
        s = _sin_with_phase(amp, t)
        u[g_idx, g_idx] = c
        u[e_idx, e_idx] = c
        u[e_idx, g_idx] = -1j * s
        u[g_idx, e_idx] = -1j * np.conj(s)
    return u


def _sin_with_phase(amp: complex, t: float) -> complex:
    """sin(|amp| t) carrying the phase of amp (0 when amp vanishes)."""
    mag = abs(amp)
    if mag == 0.0:
        return 0.0
    return (amp / mag) * math.sin(mag * t)


def ideal_replay(sequence, initial: StateVector, record: bool = False):
    """Apply the compiled sequence with ideal propagators in forward order.

    Each step contributes frame-out * rabi-block * frame-in exactly as the
    compiler assumed.  With record=True, returns (final, [state after each
    step]) for support tracking.
    """
    space = initial.space
    params = sequence.params
    psi = initial.amplitudes.copy()
    states = []
    for step in sequence.steps:
        k1, k2 = step.transition.k1, step.transition.k2
        omega, phi, t = step.omega_drive, step.phase, step.duration
        psi = np.exp(1j * drive_frame_phases(space, sequence.x, omega, phi, 0.0)) * psi
        u = ideal_propagator(space, params, sequence.x, k1, k2, phi, t)
        psi = u @ psi
        out_phase = (free_rotation_phases(space, params, t)
                     + drive_frame_phases(space, sequence.x, omega, phi, t))
        psi = np.exp(-1j * out_phase) * psi
        if record:
            states.append(StateVector(space, psi.copy()))
    final = StateVector(space, psi)
    drift = abs(final.norm() - initial.norm())
    if drift > 1e-9:
        raise IntegrationError(f"ideal replay norm drift {drift:.2e}")
    return (final, states) if record else final


# ---------------------------------------------------------------------------
# full time-dependent engines


def _micro_step(options: IntegratorOptions, params: SystemParams,
                omega_drive: float, duration: float) -> float:
    fastest = params.omega_z + omega_drive          # dominant beat, rad/s
    h = 2.0 * math.pi / (50.0 * fastest)
    h *= min(1.0, (options.rtol / 1e-6) ** 0.25)    # rtol only tightens
    if options.max_step is not None:
        h = min(h, options.max_step)
    return min(h, duration)


def _expm_apply(apply_h, psi: np.ndarray, scale: complex, atol: float) -> np.ndarray:
    """exp(scale * H) @ psi by Taylor series; safe because |scale|*||H|| << 1."""
    out = psi.copy()
    term = psi
    for k in range(1, 40):
        term = apply_h(term) * (scale / k)
        out += term
        if np.max(np.abs(term)) <= atol:
            return out
    raise IntegrationError("matrix-exponential series did not converge")


def _expm_taylor(a: np.ndarray, atol: float) -> np.ndarray:
    out = np.eye(a.shape[0], dtype=complex)
    term = out.copy()
    scratch = np.empty_like(a)
    for k in range(1, 40):
        np.matmul(term, a, out=scratch)
        scratch /= k
        term, scratch = scratch, term
        out += term
        if np.max(np.abs(term)) <= atol:
            return out
    raise IntegrationError("matrix-exponential series did not converge")


class _BlockCombo:
    """Hermitian generator with flip-block w and optional +/- diagonal."""

    __slots__ = ("w", "w_dag", "diag", "m")

    def __init__(self, w: np.ndarray, diag: float | None):
        self.w = w
        self.w_dag = w.conj().T.copy()
        self.diag = diag
        self.m = w.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        m = self.m
        out = np.empty_like(v)
        out[:m] = self.w_dag @ v[m:]
        out[m:] = self.w @ v[:m]
        if self.diag is not None:
            out[:m] -= self.diag * v[:m]
            out[m:] += self.diag * v[m:]
        return out

    def matrix(self) -> np.ndarray:
        m = self.m
        h = np.zeros((2 * m, 2 * m), dtype=complex)
        h[m:, :m] = self.w
        h[:m, m:] = self.w_dag
        if self.diag is not None:
            idx = np.arange(m)
            h[idx, idx] -= self.diag
            h[m + idx, m + idx] += self.diag
        return h


class _DenseCombo:
    __slots__ = ("h",)

    def __init__(self, h: np.ndarray):
        self.h = h

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.h @ v

    def matrix(self) -> np.ndarray:
        return self.h


class _DisplacedEngine:
    """Interaction-picture propagation in the displaced frame.

    resummed=True folds the longitudinal drive into the phase factor
    exp[i x sin(omega t + phi)] on the flip operator (no other drive term
    remains); resummed=False keeps the explicit oscillating drive on the
    qubit energy instead.
    """

    needs_displacement = False

    def __init__(self, space: SpaceDescriptor, params: SystemParams, x: float,
                 resummed: bool = True):
        self.space, self.params, self.x = space, params, x
        self.resummed = resummed
        a1 = np.diag(np.sqrt(np.arange(1, space.dim1, dtype=float)), 1)
        a2 = np.diag(np.sqrt(np.arange(1, space.dim2, dtype=float)), 1)
        e1 = expm(params.eta_1 * (a1.T - a1))
        e2 = expm(params.eta_2 * (a2.T - a2))
        self.block = 0.5 * params.omega_x * np.kron(e1, e2).astype(complex)
        n1 = np.repeat(np.arange(space.dim1), space.dim2).astype(float)
        n2 = np.tile(np.arange(space.dim2), space.dim1).astype(float)
        self.delta = (params.omega_z
                      + np.subtract.outer(n1, n1) * params.omega_1
                      + np.subtract.outer(n2, n2) * params.omega_2)
        self.h0 = free_rotation_phases(space, params, 1.0)   # energies, rad/s
        self.m = space.modes_dim

    def iter_combos(self, omega, phi, duration, h):
        """Yield (t0, dt, [combo, combo]) per micro-step.

        The detuning phase matrix exp(i*delta*t0) is accumulated by one
        complex multiply per micro-step (and refreshed periodically), so
        no per-node matrix exponentials are needed.
        """
        amp_drive = None if self.resummed else 0.5 * self.x * omega
        nsteps = max(1, math.ceil(duration / h))
        dt = duration / nsteps
        c1, c2 = _CF4_NODES
        a1, a2 = _CF4_WEIGHTS
        node1 = self.block * np.exp(1j * self.delta * (c1 * dt))
        node2 = self.block * np.exp(1j * self.delta * (c2 * dt))
        roll = np.exp(1j * self.delta * dt)
        acc = np.ones_like(self.delta, dtype=complex)
        for i in range(nsteps):
            t0 = i * dt
            if i % 4096 == 0:
                acc = np.exp(1j * self.delta * t0)
            f1 = f2 = 1.0
            if self.resummed:
                f1 = cmath.exp(1j * self.x * math.sin(omega * (t0 + c1 * dt) + phi))
                f2 = cmath.exp(1j * self.x * math.sin(omega * (t0 + c2 * dt) + phi))
            w1 = (node1 * acc) * f1
            w2 = (node2 * acc) * f2
            if amp_drive is None:
                d1 = d2 = None
                combos = [_BlockCombo(a1 * w1 + a2 * w2, None),
                          _BlockCombo(a2 * w1 + a1 * w2, None)]
            else:
                d1 = amp_drive * math.cos(omega * (t0 + c1 * dt) + phi)
                d2 = amp_drive * math.cos(omega * (t0 + c2 * dt) + phi)
                combos = [_BlockCombo(a1 * w1 + a2 * w2, a1 * d1 + a2 * d2),
                          _BlockCombo(a2 * w1 + a1 * w2, a2 * d1 + a1 * d2)]
            yield t0, dt, combos
            acc = acc * roll

    def evolve_step(self, psi: np.ndarray, omega: float, phi: float,
                    duration: float, h: float, series_atol: float) -> np.ndarray:
        if duration <= 0.0:
            return psi
        if self.resummed:
            psi = np.exp(1j * drive_frame_phases(self.space, self.x, omega, phi, 0.0)) * psi
        for _t0, dt, combos in self.iter_combos(omega, phi, duration, h):
            for combo in combos:
                psi = _expm_apply(combo.apply, psi, -1j * dt, series_atol)
        psi = np.exp(-1j * self.h0 * duration) * psi
        if self.resummed:
            psi = np.exp(-1j * drive_frame_phases(self.space, self.x, omega, phi, duration)) * psi
        return psi

    def frame_in_phases(self, omega, phi):
        if self.resummed:
            return drive_frame_phases(self.space, self.x, omega, phi, 0.0)
        return None

    def frame_out_phases(self, omega, phi, duration):
        out = self.h0 * duration
        if self.resummed:
            out = out + drive_frame_phases(self.space, self.x, omega, phi, duration)
        return out


class _LabEngine:
    """Interaction-picture propagation of the untransformed Hamiltonian."""

    needs_displacement = True

    def __init__(self, space: SpaceDescriptor, params: SystemParams, x: float):
        self.space, self.params, self.x = space, params, x
        self.resummed = False
        self.flip = 0.5 * params.omega_x * fock.qubit_operator(space, "s+")
        sz = fock.qubit_operator(space, "sz")
        self.mode_up = (params.g_1 * sz @ fock.mode_operator(space, 1, "create"),
                        params.g_2 * sz @ fock.mode_operator(space, 2, "create"))
        self.sz = sz
        self.h0 = free_rotation_phases(space, params, 1.0)

    def _hmatrix(self, tau, omega, phi, amp_drive):
        h = self.flip * cmath.exp(1j * self.params.omega_z * tau)
        h = h + self.mode_up[0] * cmath.exp(1j * self.params.omega_1 * tau)
        h = h + self.mode_up[1] * cmath.exp(1j * self.params.omega_2 * tau)
        h = h + h.conj().T
        h = h + (amp_drive * math.cos(omega * tau + phi)) * self.sz
        return h

    def iter_combos(self, omega, phi, duration, h):
        amp_drive = 0.5 * self.x * omega
        nsteps = max(1, math.ceil(duration / h))
        dt = duration / nsteps
        c1, c2 = _CF4_NODES
        a1, a2 = _CF4_WEIGHTS
        for i in range(nsteps):
            t0 = i * dt
            h1 = self._hmatrix(t0 + c1 * dt, omega, phi, amp_drive)
            h2 = self._hmatrix(t0 + c2 * dt, omega, phi, amp_drive)
            yield t0, dt, [_DenseCombo(a1 * h1 + a2 * h2),
                           _DenseCombo(a2 * h1 + a1 * h2)]

    def evolve_step(self, psi, omega, phi, duration, h, series_atol):
        if duration <= 0.0:
            return psi
        for _t0, dt, combos in self.iter_combos(omega, phi, duration, h):
            for combo in combos:
                psi = _expm_apply(combo.apply, psi, -1j * dt, series_atol)
        return np.exp(-1j * self.h0 * duration) * psi

    def frame_in_phases(self, omega, phi):
        return None

    def frame_out_phases(self, omega, phi, duration):
        return self.h0 * duration


def _make_engine(space, params, x, frame):
    if frame == "displaced":
        return _DisplacedEngine(space, params, x, resummed=True)
    if frame == "displaced-explicit":
        return _DisplacedEngine(space, params, x, resummed=False)
    if frame == "lab":
        return _LabEngine(space, params, x)
    raise ValueError(f"unknown frame {frame!r}")


class _TrajectoryWriter:
    def __init__(self, path, space: SpaceDescriptor, weight_name: str):
        self.file = open(path, "w", newline="")
        self.writer = csv.writer(self.file)
        labels = [f"p_{'ge'[q]}_{n1}_{n2}"
                  for q in (GROUND, EXCITED)
                  for n1 in range(space.dim1) for n2 in range(space.dim2)]
        self.writer.writerow(["time_ns", *labels, weight_name])

    def record(self, t: float, populations: np.ndarray, weight: float):
        self.writer.writerow([f"{ns_from_seconds(t):.6f}",
                              *(f"{p:.9e}" for p in populations),
                              f"{weight:.12f}"])

    def close(self):
        self.file.close()


def _series_atol(psi_scale: float, options: IntegratorOptions) -> float:
    return max(1e-18, min(1e-15, options.atol * 1e-6)) * max(1.0, psi_scale)


def schrodinger_evolve(initial: StateVector, sequence, params: SystemParams | None = None,
                       options: IntegratorOptions | None = None,
                       trajectory=None) -> StateVector:
    """Integrate the full time-dependent dynamics over a pulse sequence.

    The drive is a square-windowed sinusoid per step, with each step's
    phase clock starting at zero.  Returns the final state in the
    displaced picture regardless of the integration frame, so it can be
    compared directly against the compiler's target.
    """
    params = params or sequence.params
    options = options or IntegratorOptions()
    space = initial.space
    engine = _make_engine(space, params, sequence.x, options.frame)
    psi = initial.amplitudes.copy()
    if engine.needs_displacement:
        dop = fock.displacement_unitary(space, params.eta_1, params.eta_2)
        psi = dop.conj().T @ psi
    writer = _TrajectoryWriter(trajectory, space, "norm") if trajectory else None
    edge = space.edge_mask()
    warned = False
    t_global = 0.0
    atol = _series_atol(1.0, options)
    try:
        if writer:
            writer.record(0.0, np.abs(psi) ** 2, float(np.linalg.norm(psi)))
        for step in sequence.steps:
            if step.duration <= 0.0:
                continue
            h = _micro_step(options, params, step.omega_drive, step.duration)
            psi = engine.evolve_step(psi, step.omega_drive, step.phase,
                                     step.duration, h, atol)
            t_global += step.duration
            if writer:
                writer.record(t_global, np.abs(psi) ** 2, float(np.linalg.norm(psi)))
            if not warned:
                edge_pop = float(np.sum(np.abs(psi[edge]) ** 2))
                if edge_pop > EDGE_POPULATION_TOLERANCE:
                    warnings.warn(
                        f"population {edge_pop:.2e} reached the Fock cutoff edge; "
                        f"results may be truncation-limited", stacklevel=2)
                    warned = True
    finally:
        if writer:
            writer.close()
    if engine.needs_displacement:
        psi = dop @ psi
    final = StateVector(space, psi)
    drift = abs(final.norm() - initial.norm())
    if drift > 1e-7:
        raise IntegrationError(f"norm drift {drift:.2e} exceeds 1e-7")
    return final


# ---------------------------------------------------------------------------
# Lindblad channel machinery


def _qubit_basis_rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, s], [-s, c]], dtype=complex)   # maps |g>,|e| to eigenbasis


def _qubit_jumps(params: SystemParams, rates: DecayRates):
    """2x2 jump operators sqrt(rate) * sigma~ in the (g, e) basis.

    The dissipation acts in the qubit eigenbasis, rotated from the
    longitudinal-coupling basis by theta = atan(omega_x / omega_z).
    """
    r = _qubit_basis_rotation(params.theta)
    sigma_ge = np.array([[0, 1], [0, 0]], dtype=complex)
    sigma_ee = np.array([[0, 0], [0, 1]], dtype=complex)
    sigma_gg = np.array([[1, 0], [0, 0]], dtype=complex)
    out = []
    for rate, op in ((rates.gamma_eg, sigma_ge), (rates.gamma_ee, sigma_ee),
                     (rates.gamma_gg, sigma_gg)):
        if rate > 0.0:
            out.append(math.sqrt(rate) * (r @ op @ r.conj().T))
    return out


class _Dissipator:
    """Applies the five Lindblad channels to a density matrix in the
    interaction picture of the static diagonal part."""

    def __init__(self, space: SpaceDescriptor, params: SystemParams, rates: DecayRates):
        self.space = space
        self.omega_z = params.omega_z
        self.qubit_jumps = _qubit_jumps(params, rates)
        self.kappas = (rates.kappa_1, rates.kappa_2)
        d1, d2 = space.dim1, space.dim2
        self.shape6 = (2, d1, d2, 2, d1, d2)
        n1 = np.arange(d1, dtype=float)
        n2 = np.arange(d2, dtype=float)
        self.loss1 = 0.5 * (n1.reshape(1, d1, 1, 1, 1, 1) + n1.reshape(1, 1, 1, 1, d1, 1))
        self.loss2 = 0.5 * (n2.reshape(1, 1, d2, 1, 1, 1) + n2.reshape(1, 1, 1, 1, 1, d2))
        self.w1 = np.sqrt(np.outer(n1[1:], n1[1:])).reshape(1, d1 - 1, 1, 1, d1 - 1, 1)
        self.w2 = np.sqrt(np.outer(n2[1:], n2[1:])).reshape(1, 1, d2 - 1, 1, 1, d2 - 1)
        self._gain = np.zeros(self.shape6, dtype=complex)

    def _dressed(self, q: np.ndarray, tau: float) -> np.ndarray:
        out = q.copy()
        out[0, 1] *= cmath.exp(-1j * self.omega_z * tau)
        out[1, 0] *= cmath.exp(+1j * self.omega_z * tau)
        return out

    def _qubit_kernel(self, tau: float) -> np.ndarray:
        """Block superoperator K[a,b,i,j] collecting every qubit channel,
        so D_qubit(rho)[a,b] = sum_ij K[a,b,i,j] rho[i,j] blockwise."""
        kernel = np.zeros((2, 2, 2, 2), dtype=complex)
        eye = np.eye(2)
        for q0 in self.qubit_jumps:
            q = self._dressed(q0, tau)
            n = q.conj().T @ q
            kernel += np.einsum("ai,bj->abij", q, q.conj())
            kernel -= 0.5 * np.einsum("ai,bj->abij", n, eye)
            kernel -= 0.5 * np.einsum("ai,jb->abij", eye, n)
        return kernel

    def apply(self, rho: np.ndarray, tau: float) -> np.ndarray:
        """Return sum_c [c rho c^dag - (c^dag c rho + rho c^dag c)/2]."""
        m = self.space.modes_dim
        out = np.zeros_like(rho)
        if self.qubit_jumps:
            kernel = self._qubit_kernel(tau)
            rho4 = rho.reshape(2, m, 2, m)
            out += np.einsum("abij,ixjy->axby", kernel, rho4).reshape(rho.shape)
        r6 = rho.reshape(self.shape6)
        for mode, kappa in enumerate(self.kappas, start=1):
            if kappa == 0.0:
                continue
            gain = self._gain
            gain[...] = 0.0
            if mode == 1:
                gain[:, :-1, :, :, :-1, :] = r6[:, 1:, :, :, 1:, :] * self.w1
                gain -= r6 * self.loss1
            else:
                gain[:, :, :-1, :, :, :-1] = r6[:, :, 1:, :, :, 1:] * self.w2
                gain -= r6 * self.loss2
            out += kappa * gain.reshape(rho.shape)
        return out


def lindblad_evolve(initial: DensityMatrix, sequence, params: SystemParams | None = None,
                    rates: DecayRates | None = None,
                    options: IntegratorOptions | None = None,
                    trajectory=None) -> DensityMatrix:
    """Integrate the master equation over a pulse sequence.

    The coherent part reuses the frame machinery of
    :func:`schrodinger_evolve`; qubit relaxation and dephasing act in the
    qubit eigenbasis and cavity decay on each mode, all applied in the
    simulated frame without transforming the jump operators.  Trace is
    preserved to machine precision; a warning is issued if the final state
    develops eigenvalues below -1e-6.
    """
    params = params or sequence.params
    rates = rates or DecayRates()
    options = options or IntegratorOptions()
    space = initial.space
    engine = _make_engine(space, params, sequence.x, options.frame)
    dissipator = _Dissipator(space, params, rates)
    rho = initial.matrix.copy()
    if engine.needs_displacement:
        dop = fock.displacement_unitary(space, params.eta_1, params.eta_2)
        rho = dop.conj().T @ rho @ dop
    writer = _TrajectoryWriter(trajectory, space, "trace") if trajectory else None
    atol = _series_atol(1.0, options)
    t_global = 0.0
    try:
        if writer:
            writer.record(0.0, np.real(np.diag(rho)), float(np.real(np.trace(rho))))
        for step in sequence.steps:
            if step.duration <= 0.0:
                continue
            omega, phi, duration = step.omega_drive, step.phase, step.duration
            h = _micro_step(options, params, omega, duration)
            phases_in = engine.frame_in_phases(omega, phi)
            if phases_in is not None:
                u_in = np.exp(1j * phases_in)
                rho = (u_in[:, None] * rho) * u_in.conj()[None, :]
            for i, (t0, dt, combos) in enumerate(engine.iter_combos(omega, phi, duration, h)):
                rho = rho + (0.5 * dt) * dissipator.apply(rho, t0 + 0.25 * dt)
                for combo in combos:
                    u = _expm_taylor(-1j * dt * combo.matrix(), atol)
                    rho = u @ rho @ u.conj().T
                rho = rho + (0.5 * dt) * dissipator.apply(rho, t0 + 0.75 * dt)
                if i % 128 == 0:
                    rho = 0.5 * (rho + rho.conj().T)
            phases_out = engine.frame_out_phases(omega, phi, duration)
            u_out = np.exp(-1j * phases_out)
            rho = (u_out[:, None] * rho) * u_out.conj()[None, :]
            t_global += duration
            if writer:
                writer.record(t_global, np.real(np.diag(rho)), float(np.real(np.trace(rho))))
    finally:
        if writer:
            writer.close()
    if engine.needs_displacement:
        rho = dop @ rho @ dop.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    final = DensityMatrix(space, rho)
    drift = abs(final.trace().real - initial.trace().real)
    if drift > 1e-6:
        raise IntegrationError(f"trace drift {drift:.2e} exceeds 1e-6")
    min_eig = final.min_eigenvalue()
    if min_eig < -1e-6:
        warnings.warn(f"density matrix developed eigenvalue {min_eig:.2e}",
                      stacklevel=2)
    return final


# ---------------------------------------------------------------------------
# metrics


def _target_vector(space: SpaceDescriptor, target) -> np.ndarray:
    if isinstance(target, StateVector):
        if target.space != space:
            raise ValueError("states live on different spaces")
        return target.amplitudes
    return target.state_vector(space).amplitudes    # TargetState


def fidelity(state, target) -> float:
    """Overlap fidelity |<target|state>| (pure) or sqrt(<t|rho|t>) (mixed)."""
    if isinstance(state, DensityMatrix):
        tvec = _target_vector(state.space, target)
        val = np.real(np.vdot(tvec, state.matrix @ tvec))
        return math.sqrt(max(0.0, float(val)))
    tvec = _target_vector(state.space, target)
    return float(abs(np.vdot(tvec, state.amplitudes)))


def total_generation_time(sequence) -> float:
    """Sum of all step durations, in seconds."""
    return float(sum(step.duration for step in sequence.steps))
