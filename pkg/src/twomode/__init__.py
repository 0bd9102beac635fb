"""Two-mode microwave photon state engineering.

Compile arbitrary superpositions of two-cavity photon states into qubit
sideband pulse sequences and verify them under ideal, full-Hamiltonian,
and dissipative dynamics.
"""

from .couplings import (CARRIER, EXCHANGE, FOUR_TRANSITIONS, SIDEBAND_1,
                        SIDEBAND_2, DriveConfig, SystemParams, TransitionType,
                        bessel_first_kind, detuning, displacement_matrix_element,
                        laguerre, multiphoton_coupling, rabi_amplitude,
                        resonant_drive_frequency)
from .evolve import (DecayRates, IntegratorOptions, fidelity, ideal_propagator,
                     ideal_replay, lindblad_evolve, schrodinger_evolve,
                     sideband_hamiltonian, total_generation_time)
from .fock import (DensityMatrix, SpaceDescriptor, StateVector, basis_state,
                   build_space, displacement_unitary, drive_frame_unitary,
                   free_rotation, mode_operator, qubit_operator, vacuum_state)
from .synth import (PlanStep, PulseSequence, PulseStep, SynthesisError,
                    TargetState, load_sequence, plan_noon, plan_procedures,
                    save_sequence, solve_phase, step_count, synthesize)
from .validate import (IncommensurateError, LatticeParams, ValidationReport,
                       check_lamb_dicke_suppression, check_r_exclusions,
                       check_stark_conditions, derive_lattice,
                       lattice_detuning_bounds, validate_parameters)

__version__ = "0.1.0"
