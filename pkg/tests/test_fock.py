import math

import numpy as np
import pytest
from scipy.linalg import expm

from twomode.couplings import SystemParams
from twomode.fock import (EXCITED, GROUND, DensityMatrix, StateVector,
                          basis_state, build_space, displacement_unitary,
                          drive_frame_unitary, free_rotation, mode_operator,
                          qubit_operator, vacuum_state)


@pytest.fixture
def params():
    return SystemParams.from_ghz(1.2, 19.5, 6.0, 8.0, 0.3714, 0.3714)


def test_dimensions():
    assert build_space(0, 0).dimension == 2
    assert build_space(7, 7).dimension == 128
    assert build_space(2, 3).dimension == 24


def test_rejects_negative_cutoffs():
    with pytest.raises(ValueError):
        build_space(-1, 3)


@pytest.mark.parametrize("c1,c2", [(0, 0), (1, 4), (5, 3), (10, 10)])
def test_index_map_is_a_bijection(c1, c2):
    space = build_space(c1, c2)
    seen = set()
    for n1 in range(c1 + 1):
        for n2 in range(c2 + 1):
            for q in (GROUND, EXCITED):
                i = space.index(n1, n2, q)
                assert space.label(i) == (n1, n2, q)
                seen.add(i)
    assert seen == set(range(space.dimension))


def test_index_map_rejects_out_of_range():
    space = build_space(2, 2)
    with pytest.raises(ValueError):
        space.index(3, 0, GROUND)
    with pytest.raises(ValueError):
        space.index(0, 0, 2)
    with pytest.raises(ValueError):
        space.label(space.dimension)


def test_annihilate_vacuum_is_zero():
    space = build_space(4, 4)
    a1 = mode_operator(space, 1, "annihilate")
    out = a1 @ basis_state(space, 0, 2, GROUND).amplitudes
    assert np.max(np.abs(out[np.abs(out) > 0])) if np.any(out) else True
    assert np.allclose(a1 @ vacuum_state(space).amplitudes, 0.0)


def test_number_from_ladder_product():
    space = build_space(5, 4)
    for mode in (1, 2):
        a = mode_operator(space, mode, "annihilate")
        adag = mode_operator(space, mode, "create")
        n = mode_operator(space, mode, "number")
        assert np.allclose(adag, a.conj().T)
        cutoff = space.cutoff1 if mode == 1 else space.cutoff2
        # a^dag a equals the number operator everywhere on the ladder
        assert np.allclose(adag @ a, n, atol=1e-14)
        assert cutoff >= 3


def test_ladder_matrix_element():
    space = build_space(5, 2)
    a1 = mode_operator(space, 1, "annihilate")
    bra = basis_state(space, 2, 1, GROUND).amplitudes
    ket = basis_state(space, 3, 1, GROUND).amplitudes
    assert np.vdot(bra, a1 @ ket) == pytest.approx(math.sqrt(3), abs=1e-15)


def test_qubit_algebra():
    space = build_space(2, 2)
    sz = qubit_operator(space, "sz")
    sp = qubit_operator(space, "s+")
    sm = qubit_operator(space, "s-")
    assert np.allclose(sz @ sz, np.eye(space.dimension))
    g = basis_state(space, 1, 0, GROUND).amplitudes
    assert np.allclose(sp @ g, basis_state(space, 1, 0, EXCITED).amplitudes)
    assert np.allclose(sp @ sm - sm @ sp, sz)
    e = basis_state(space, 0, 0, EXCITED).amplitudes
    assert np.allclose(sz @ e, e)                      # sz|e> = +|e>
    with pytest.raises(ValueError):
        qubit_operator(space, "sy!")


def test_displacement_zero_is_identity():
    space = build_space(3, 3)
    assert np.allclose(displacement_unitary(space, 0.0, 0.0),
                       np.eye(space.dimension))


def test_displacement_unitary_on_interior():
    space = build_space(7, 7)
    d = displacement_unitary(space, 0.3714, 0.3714)
    dev = d @ d.conj().T - np.eye(space.dimension)
    interior = space.interior_mask(2)
    assert np.max(np.abs(dev[np.ix_(interior, interior)])) < 1e-9


def test_displacement_matches_generator_exponential(params):
    space = build_space(6, 5)
    gen = np.zeros((space.dimension, space.dimension), dtype=complex)
    sz = qubit_operator(space, "sz")
    for mode, eta in ((1, 0.3714), (2, 0.2)):
        a = mode_operator(space, mode, "annihilate")
        gen += eta * 0.5 * sz @ (a.conj().T - a)
    ref = expm(gen)
    assert np.allclose(displacement_unitary(space, 0.3714, 0.2), ref, atol=1e-12)


def test_displacement_vacuum_overlap():
    space = build_space(9, 9)
    eta1, eta2 = 0.3714, 0.5429
    d = displacement_unitary(space, eta1, eta2)
    vac = vacuum_state(space).amplitudes
    expected = math.exp(-(eta1**2 + eta2**2) / 8.0)
    assert np.vdot(vac, d @ vac).real == pytest.approx(expected, abs=1e-12)


def test_displacement_warns_when_cutoff_too_low():
    space = build_space(1, 1)
    with pytest.warns(UserWarning, match="cutoff"):
        displacement_unitary(space, 1.5, 0.0)


def test_free_rotation_structure(params):
    space = build_space(3, 3)
    assert np.allclose(free_rotation(space, params, 0.0), np.eye(space.dimension))
    t = 0.37e-9
    u = free_rotation(space, params, t)
    idx = space.index(2, 1, EXCITED)
    expected = np.exp(1j * (0.5 * params.omega_z + 2 * params.omega_1
                            + params.omega_2) * t)
    assert u[idx, idx] == pytest.approx(expected, abs=1e-12)
    assert np.max(np.abs(u @ u.conj().T - np.eye(space.dimension))) < 1e-12
    with pytest.raises(ValueError):
        free_rotation(space, params, -1.0)


def test_drive_frame_unitary_structure():
    space = build_space(2, 2)
    eye = np.eye(space.dimension)
    assert np.allclose(drive_frame_unitary(space, 0.0, 1e10, 0.3, 1e-9), eye)
    # sin(omega t + phi) = 0 makes the frame factor trivial
    omega = 2 * math.pi * 1e10
    t = 1e-10
    phi = math.pi - omega * t
    assert np.allclose(drive_frame_unitary(space, 1.7571, omega, phi, t), eye,
                       atol=1e-12)
    u = drive_frame_unitary(space, 1.7571, omega, 0.3, 0.7e-9)
    assert np.max(np.abs(u @ u.conj().T - eye)) < 1e-12
    assert np.count_nonzero(u - np.diag(np.diag(u))) == 0


def test_state_vector_helpers():
    space = build_space(2, 2)
    sv = basis_state(space, 1, 0, GROUND)
    assert sv.norm() == pytest.approx(1.0)
    assert sv.population(1, 0, GROUND) == pytest.approx(1.0)
    other = basis_state(space, 0, 1, GROUND)
    assert sv.overlap(other) == 0.0
    with pytest.raises(ValueError):
        StateVector(space, np.zeros(3))
    with pytest.raises(ValueError):
        StateVector(space, np.zeros(space.dimension)).normalized()


def test_density_matrix_helpers():
    space = build_space(1, 1)
    rho = DensityMatrix.from_state(basis_state(space, 1, 0, EXCITED))
    assert rho.trace() == pytest.approx(1.0)
    assert rho.hermiticity_deviation() == 0.0
    assert rho.min_eigenvalue() == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        DensityMatrix(space, np.zeros((3, 3)))
