import csv
import math

import numpy as np
import pytest
from scipy.linalg import expm

from twomode.couplings import (CARRIER, SIDEBAND_1, DriveConfig, SystemParams,
                               rabi_amplitude, resonant_drive_frequency)
from twomode.evolve import (DecayRates, IntegrationError, IntegratorOptions,
                            _qubit_basis_rotation, fidelity, ideal_propagator,
                            ideal_replay, lindblad_evolve, schrodinger_evolve,
                            sideband_hamiltonian, total_generation_time)
from twomode.fock import (EXCITED, GROUND, DensityMatrix, StateVector,
                          basis_state, build_space, vacuum_state)
from twomode.synth import (PulseSequence, PulseStep, TargetState, plan_noon,
                           synthesize)


@pytest.fixture
def params():
    return SystemParams.from_ghz(1.2, 19.5, 6.0, 8.0, 0.3714, 0.3714)


@pytest.fixture
def bell_sequence(params):
    c = 1 / math.sqrt(2)
    target = TargetState(1, {(1, 0): c, (0, 1): c})
    return target, synthesize(target, params, 1.7571)


def carrier_pulse(params, x, duration, phase=0.0, nu=1):
    return PulseStep(nu=nu, transition=CARRIER, direction="e->g", pair_g=(0, 0),
                     omega_drive=resonant_drive_frequency(params, 0, 0),
                     duration=duration, phase=phase)


# --------------------------------------------------------- ideal dynamics

def test_sideband_hamiltonian_is_hermitian(params):
    space = build_space(5, 5)
    for k1, k2 in [(-1, 0), (0, -1), (1, -1), (0, 0)]:
        h = sideband_hamiltonian(space, params, 1.7571, k1, k2, 0.3)
        assert np.max(np.abs(h - h.conj().T)) < 1e-12


def test_carrier_hamiltonian_is_block_diagonal(params):
    space = build_space(3, 3)
    h = sideband_hamiltonian(space, params, 1.7571, 0, 0)
    for i in range(space.dimension):
        n1, n2, q = space.label(i)
        for j in range(space.dimension):
            m1, m2, p = space.label(j)
            if h[i, j] != 0:
                assert (n1, n2) == (m1, m2) and q != p


def test_sideband_element_matches_rabi_amplitude(params):
    space = build_space(4, 4)
    phi = 0.62
    h = sideband_hamiltonian(space, params, 1.7571, -1, 0, phi)
    drive = DriveConfig(x=1.7571, omega_drive=resonant_drive_frequency(params, -1, 0),
                        phi=phi)
    elem = h[space.index(0, 0, EXCITED), space.index(1, 0, GROUND)]
    assert elem == pytest.approx(rabi_amplitude(params, drive, -1, -1, 0, 0, 0),
                                 abs=1e-18)


def test_ideal_propagator_identity_at_zero(params):
    space = build_space(3, 3)
    u = ideal_propagator(space, params, 1.7571, 1, -1, 0.1, 0.0)
    assert np.allclose(u, np.eye(space.dimension))


def test_ideal_propagator_half_flop(params):
    space = build_space(3, 3)
    drive = DriveConfig(x=1.7571, omega_drive=resonant_drive_frequency(params, -1, 0),
                        phi=0.0)
    mag = abs(rabi_amplitude(params, drive, -1, -1, 0, 0, 0))
    t = 0.5 * math.pi / mag
    u = ideal_propagator(space, params, 1.7571, -1, 0, 0.0, t)
    g, e = space.index(1, 0, GROUND), space.index(0, 0, EXCITED)
    assert abs(u[g, g]) < 1e-12
    assert abs(u[e, g]) == pytest.approx(1.0, abs=1e-12)


def test_ideal_propagator_matches_matrix_exponential(params):
    space = build_space(5, 4)
    for k1, k2, phi, t in [(-1, 0, 0.0, 0.9e-9), (0, -1, 1.1, 0.4e-9),
                           (1, -1, 2.2, 2.3e-9), (0, 0, 4.0, 0.6e-9)]:
        h = sideband_hamiltonian(space, params, 1.7571, k1, k2, phi)
        ref = expm(-1j * h * t)
        u = ideal_propagator(space, params, 1.7571, k1, k2, phi, t)
        assert np.max(np.abs(u - ref)) < 1e-9
        assert np.max(np.abs(u @ u.conj().T - np.eye(space.dimension))) < 1e-12


def test_ideal_replay_idle_sequence(params):
    space = build_space(3, 3)
    seq = PulseSequence(steps=(carrier_pulse(params, 1.7571, 0.0),),
                        params=params, x=1.7571)
    initial = basis_state(space, 1, 1, GROUND)
    final = ideal_replay(seq, initial)
    assert np.allclose(final.amplitudes, initial.amplitudes)


def test_ideal_replay_noon(params):
    target = TargetState.noon(2)
    seq = synthesize(target, params, 1.7571, plan=plan_noon(2))
    space = build_space(6, 6)
    final = ideal_replay(seq, vacuum_state(space))
    assert fidelity(final, target) >= 1 - 1e-9
    assert final.norm() == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- metrics

def test_fidelity_trivial_cases(params):
    space = build_space(2, 2)
    a = basis_state(space, 1, 0, GROUND)
    b = basis_state(space, 0, 1, GROUND)
    assert fidelity(a, a) == pytest.approx(1.0)
    assert fidelity(a, b) == 0.0
    rho = DensityMatrix.from_state(a)
    tgt = TargetState(1, {(1, 0): 1.0})
    assert fidelity(rho, tgt) == pytest.approx(fidelity(a, tgt), abs=1e-12)


def test_total_generation_time(params):
    seq = PulseSequence(steps=(carrier_pulse(params, 1.0, 0.0),
                               carrier_pulse(params, 1.0, 2.5e-9, nu=2)),
                        params=params, x=1.0)
    assert total_generation_time(seq) == pytest.approx(2.5e-9)


# ------------------------------------------------------- full Hamiltonian

def test_no_flip_without_transverse_coupling(params):
    space = build_space(3, 3)
    frozen = SystemParams(0.0, params.omega_z, params.omega_1, params.omega_2,
                          params.eta_1, params.eta_2)
    seq = PulseSequence(steps=(carrier_pulse(params, 1.7571, 0.8e-9, 0.4),),
                        params=frozen, x=1.7571)
    initial = basis_state(space, 1, 0, GROUND)
    final = schrodinger_evolve(initial, seq, frozen)
    assert abs(np.vdot(initial.amplitudes, final.amplitudes)) == pytest.approx(
        1.0, abs=1e-9)


def test_carrier_pulse_matches_ideal_at_small_eta():
    # small eta kills the photon-shifting terms; small omega_x is also
    # needed because the off-band carrier terms scale with it, not eta
    params = SystemParams.from_ghz(0.1, 19.5, 6.0, 8.0, 1e-3, 1e-3)
    x = 1.7571
    drive = DriveConfig(x=x, omega_drive=resonant_drive_frequency(params, 0, 0))
    mag = abs(rabi_amplitude(params, drive, -1, 0, 0, 0, 0))
    seq = PulseSequence(steps=(carrier_pulse(params, x, 0.5 * math.pi / mag, 0.3),),
                        params=params, x=x)
    space = build_space(3, 3)
    ideal = ideal_replay(seq, vacuum_state(space))
    full = schrodinger_evolve(vacuum_state(space), seq, params)
    overlap = abs(np.vdot(ideal.amplitudes, full.amplitudes))
    assert overlap >= 1 - 1e-4


def test_frame_equivalence_displaced_vs_explicit(params, bell_sequence):
    target, seq = bell_sequence
    space = build_space(5, 5)
    resummed = schrodinger_evolve(vacuum_state(space), seq, params,
                                  IntegratorOptions(frame="displaced"))
    explicit = schrodinger_evolve(vacuum_state(space), seq, params,
                                  IntegratorOptions(frame="displaced-explicit"))
    overlap = abs(np.vdot(resummed.amplitudes, explicit.amplitudes))
    assert overlap >= 1 - 1e-6


def test_lab_frame_cross_check(params, bell_sequence):
    target, seq = bell_sequence
    space = build_space(7, 7)
    displaced = schrodinger_evolve(vacuum_state(space), seq, params)
    lab = schrodinger_evolve(vacuum_state(space), seq, params,
                             IntegratorOptions(frame="lab"))
    f_disp = fidelity(displaced, target)
    f_lab = fidelity(lab, target)
    assert abs(f_disp - f_lab) < 1e-3


def test_step_halving_convergence(params, bell_sequence):
    target, seq = bell_sequence
    space = build_space(5, 5)
    coarse = schrodinger_evolve(vacuum_state(space), seq, params)
    fine = schrodinger_evolve(vacuum_state(space), seq, params,
                              IntegratorOptions(rtol=5e-7, max_step=3e-13))
    assert abs(fidelity(coarse, target) - fidelity(fine, target)) < 1e-3


def test_cutoff_edge_warning(params):
    space = build_space(3, 3)
    hot = SystemParams.from_ghz(1.2, 19.5, 6.0, 8.0, 0.7143, 0.7143)
    seq = synthesize(TargetState.even(2), hot, 2.0)
    with pytest.warns(UserWarning, match="cutoff"):
        schrodinger_evolve(vacuum_state(space), seq, hot)


def test_trajectory_dump(tmp_path, params, bell_sequence):
    target, seq = bell_sequence
    space = build_space(4, 4)
    path = tmp_path / "traj.csv"
    schrodinger_evolve(vacuum_state(space), seq, params, trajectory=path)
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == "time_ns"
    assert rows[0][-1] == "norm"
    assert len(rows[0]) == 2 + space.dimension
    active = [r for r in rows[1:]]
    assert len(active) == 1 + sum(1 for s in seq.steps if s.duration > 0)
    for row in active:
        assert float(row[-1]) == pytest.approx(1.0, abs=1e-7)


def test_integrator_options_validation():
    with pytest.raises(ValueError):
        IntegratorOptions(frame="rotating")
    with pytest.raises(ValueError):
        IntegratorOptions(rtol=0.0)
    with pytest.raises(ValueError):
        IntegratorOptions(max_step=-1e-12)
    assert IntegratorOptions(fock_cutoff=(5, 6)).cutoffs() == (5, 6)
    assert IntegratorOptions().cutoffs() == (7, 7)


# ---------------------------------------------------------------- lindblad

def test_qubit_basis_rotation_diagonalizes_the_qubit(params):
    r = _qubit_basis_rotation(params.theta)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.array([[-1, 0], [0, 1]], dtype=complex)
    h = 0.5 * (params.omega_x * sx + params.omega_z * sz)
    proj_g = r @ np.array([[1, 0], [0, 0]]) @ r.conj().T
    energy = np.trace(proj_g @ h).real
    assert energy == pytest.approx(-0.5 * params.omega_q, rel=1e-12)


def test_decay_rates_validation():
    with pytest.raises(ValueError):
        DecayRates(gamma_eg=-1.0)
    r = DecayRates.from_mhz(gamma_ee_mhz=2.0, kappa_1_mhz=1.0)
    assert r.gamma_ee == pytest.approx(2 * math.pi * 2e6)
    assert r.gamma_gg == 0.0


def test_closed_system_lindblad_matches_schrodinger(params, bell_sequence):
    target, seq = bell_sequence
    space = build_space(4, 4)
    pure = schrodinger_evolve(vacuum_state(space), seq, params)
    rho = lindblad_evolve(DensityMatrix.from_state(vacuum_state(space)), seq,
                          params, DecayRates())
    f_pure = fidelity(pure, target)
    f_mixed = fidelity(rho, target)
    assert abs(f_pure - f_mixed) < 1e-6
    assert abs(rho.trace().real - 1.0) < 1e-6
    assert rho.hermiticity_deviation() < 1e-8


def test_single_mode_decay_against_analytic(params):
    space = build_space(3, 3)
    frozen = SystemParams(0.0, params.omega_z, params.omega_1, params.omega_2,
                          0.0, 0.0)
    duration = 1.0e-9
    kappa = 2 * math.pi * 16e6
    seq = PulseSequence(steps=(carrier_pulse(params, 1.0, duration),),
                        params=frozen, x=1.0)
    rho0 = DensityMatrix.from_state(basis_state(space, 1, 0, GROUND))
    rho = lindblad_evolve(rho0, seq, frozen, DecayRates(kappa_1=kappa))
    p1 = rho.matrix[space.index(1, 0, GROUND), space.index(1, 0, GROUND)].real
    # splitting error is O((kappa dt)^2) per step; 5e-6 covers it at this
    # deliberately large test rate (physical MHz rates sit near 1e-8)
    assert p1 == pytest.approx(math.exp(-kappa * duration), abs=5e-6)
    p0 = rho.matrix[space.index(0, 0, GROUND), space.index(0, 0, GROUND)].real
    assert p0 == pytest.approx(1 - math.exp(-kappa * duration), abs=5e-6)


def test_dissipation_lowers_fidelity(params, bell_sequence):
    target, seq = bell_sequence
    space = build_space(4, 4)
    rates = DecayRates.from_mhz(gamma_eg_mhz=40.0, gamma_ee_mhz=80.0,
                                kappa_1_mhz=40.0, kappa_2_mhz=40.0)
    rho = lindblad_evolve(DensityMatrix.from_state(vacuum_state(space)), seq,
                          params, rates)
    pure = schrodinger_evolve(vacuum_state(space), seq, params)
    assert fidelity(rho, target) < fidelity(pure, target)
    assert rho.min_eigenvalue() > -1e-8
