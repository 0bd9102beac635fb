"""Device parameters and sideband transition amplitudes.

A classically driven qubit that couples both transversely and
longitudinally to two cavity modes supports transitions

    |n1, n2>|g>  <->  |n1+k1, n2+k2>|e>,        k_l in {-1, 0, +1},

selected by frequency matching.  The complex strength of each transition
factorizes into a Bessel function of the reduced drive strength x, one
displacement-operator matrix element per mode, and a drive-phase factor.
This module evaluates those factors, the resulting Rabi amplitudes and
detunings, and the raw multiphoton coupling coefficients used as a
cross-check of the factorized form.

Angular frequencies are stored in rad/s throughout the package; helpers
at the bottom convert to and from the GHz / MHz / ns units used in config
files and reports.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from scipy.special import jv

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemParams:
    """Static device frequencies and couplings (angular, rad/s).

    omega_x, omega_z : transverse / longitudinal qubit frequencies
    omega_1, omega_2 : cavity mode frequencies (must differ)
    eta_1, eta_2     : dimensionless per-mode coupling ratios 2*g_l/omega_l
    """

    omega_x: float
    omega_z: float
    omega_1: float
    omega_2: float
    eta_1: float
    eta_2: float

    def __post_init__(self):
        for name in ("omega_z", "omega_1", "omega_2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.omega_x < 0.0:      # zero switches the flip coupling off
            raise ValueError("omega_x must be non-negative")
        if self.omega_1 == self.omega_2:
            raise ValueError("cavity frequencies must differ")
        if self.eta_1 < 0.0 or self.eta_2 < 0.0:
            raise ValueError("eta_1 and eta_2 must be non-negative")

    @property
    def g_1(self) -> float:
        return 0.5 * self.eta_1 * self.omega_1

    @property
    def g_2(self) -> float:
        return 0.5 * self.eta_2 * self.omega_2

    @property
    def theta(self) -> float:
        """Mixing angle between the coupling basis and the qubit eigenbasis."""
        return math.atan2(self.omega_x, self.omega_z)

    @property
    def omega_q(self) -> float:
        return math.hypot(self.omega_x, self.omega_z)

    def eta(self, mode: int) -> float:
        if mode == 1:
            return self.eta_1
        if mode == 2:
            return self.eta_2
        raise ValueError("mode must be 1 or 2")

    def omega(self, mode: int) -> float:
        if mode == 1:
            return self.omega_1
        if mode == 2:
            return self.omega_2
        raise ValueError("mode must be 1 or 2")

    @classmethod
    def from_ghz(cls, omega_x_ghz, omega_z_ghz, omega_1_ghz, omega_2_ghz,
                 eta_1, eta_2) -> "SystemParams":
        """Build from omega/2pi values quoted in GHz."""
        return cls(
            omega_x=angular_from_ghz(omega_x_ghz),
            omega_z=angular_from_ghz(omega_z_ghz),
            omega_1=angular_from_ghz(omega_1_ghz),
            omega_2=angular_from_ghz(omega_2_ghz),
            eta_1=float(eta_1),
            eta_2=float(eta_2),
        )

    def to_ghz_dict(self) -> dict:
        return {
            "omega_x_ghz": ghz_from_angular(self.omega_x),
            "omega_z_ghz": ghz_from_angular(self.omega_z),
            "omega_1_ghz": ghz_from_angular(self.omega_1),
            "omega_2_ghz": ghz_from_angular(self.omega_2),
            "eta_1": self.eta_1,
            "eta_2": self.eta_2,
        }

    @classmethod
    def from_ghz_dict(cls, d: dict) -> "SystemParams":
        return cls.from_ghz(d["omega_x_ghz"], d["omega_z_ghz"],
                            d["omega_1_ghz"], d["omega_2_ghz"],
                            d["eta_1"], d["eta_2"])


@dataclass(frozen=True)
class DriveConfig:
    """Classical drive: reduced strength x = 2*Omega/omega_drive, frequency, phase."""

    x: float
    omega_drive: float
    phi: float = 0.0

    def __post_init__(self):
        if self.x < 0.0:
            raise ValueError("reduced drive strength x must be non-negative")
        object.__setattr__(self, "phi", self.phi % TWO_PI)

    @property
    def amplitude(self) -> float:
        """Physical drive amplitude Omega = x * omega_drive / 2 (rad/s)."""
        return 0.5 * self.x * self.omega_drive


_ALLOWED_TRANSITIONS = {(-1, 0), (0, -1), (1, -1), (0, 0)}


@dataclass(frozen=True)
class TransitionType:
    """One of the four photon-number shifts (k1, k2) used by the compiler.

    Convention: on a qubit flip g->e the photon number of mode l changes
    by k_l.  The drive is always matched to the first lower Bessel band
    (Bessel index -1).
    """

    k1: int
    k2: int

    def __post_init__(self):
        if (self.k1, self.k2) not in _ALLOWED_TRANSITIONS:
            raise ValueError(f"unsupported transition type {(self.k1, self.k2)}")

    @property
    def name(self) -> str:
        return {(-1, 0): "sideband1", (0, -1): "sideband2",
                (1, -1): "exchange", (0, 0): "carrier"}[(self.k1, self.k2)]

    def __str__(self) -> str:
        return self.name


SIDEBAND_1 = TransitionType(-1, 0)   # remove one photon from mode 1 on g->e
SIDEBAND_2 = TransitionType(0, -1)   # remove one photon from mode 2 on g->e
EXCHANGE = TransitionType(1, -1)     # move one photon from mode 2 to mode 1 on g->e
CARRIER = TransitionType(0, 0)       # qubit flip, photon numbers unchanged

FOUR_TRANSITIONS = (SIDEBAND_1, SIDEBAND_2, EXCHANGE, CARRIER)


def laguerre(n: int, k: int, z: float) -> float:
    """Generalized Laguerre polynomial L_n^(k)(z).

    Evaluates the closed-form sum over term ratios, so no raw factorial is
    ever formed and large n + k stay in range.
    """
    if n < 0 or k < 0:
        raise ValueError("laguerre requires n >= 0 and k >= 0")
    term = 1.0
    for j in range(1, k + 1):           # leading term is binomial(n + k, k)
        term *= (n + j) / j
    total = term
    for l in range(1, n + 1):
        term *= -z * (n - l + 1) / ((k + l) * l)
        total += term
    return total


def bessel_first_kind(order: int, x: float) -> float:
    """Bessel function of the first kind J_order(x), integer order."""
    return float(jv(int(order), x))


def displacement_matrix_element(n: int, k: int, eta: float) -> float:
    """Fock matrix element of a single-mode displacement by a real amplitude.

    For k >= 0 this is <n+k| exp[eta (a^dag - a)] |n>; for k < 0 it is
    <n| exp[eta (a^dag - a)] |n+|k|>.  Either way n labels the lower level
    of the coupled pair and |k| the photon-number gap, giving the familiar
    eta^|k| suppression of multiphoton sidebands.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    ak = abs(k)
    sign = (-1.0) ** k if k < 0 else 1.0
    root = 1.0
    for j in range(1, ak + 1):
        root /= math.sqrt(n + j)
    return sign * eta**ak * math.exp(-0.5 * eta * eta) * root * laguerre(n, ak, eta * eta)


def rabi_amplitude(params: SystemParams, drive: DriveConfig, bessel_index: int,
                   k1: int, k2: int, n1: int, n2: int) -> complex:
    """Complex transition amplitude for the (k1, k2) sideband at Bessel band N.

    n1, n2 label the lower Fock level of the coupled pair in each mode.
    The magnitude is linear in omega_x and independent of the drive phase;
    the phase rotates as N * phi.
    """
    if n1 < 0 or n2 < 0:
        raise ValueError("Fock indices must be non-negative")
    mag = (0.5 * params.omega_x
           * bessel_first_kind(bessel_index, drive.x)
           * displacement_matrix_element(n1, k1, params.eta_1)
           * displacement_matrix_element(n2, k2, params.eta_2))
    return mag * cmath.exp(1j * bessel_index * drive.phi)


def detuning(params: SystemParams, omega_drive: float, bessel_index: int,
             k1: int, k2: int) -> float:
    """Frequency mismatch N*omega_drive + omega_z + k1*omega_1 + k2*omega_2."""
    return (bessel_index * omega_drive + params.omega_z
            + k1 * params.omega_1 + k2 * params.omega_2)


def resonant_drive_frequency(params: SystemParams, k1: int, k2: int) -> float:
    """Drive frequency that makes the (k1, k2) transition resonant at band -1.

    Solves detuning(omega, -1, k1, k2) = 0, i.e. omega = omega_z + k1*omega_1
    + k2*omega_2.  Raises if the parameter set would require a non-positive
    drive frequency.
    """
    omega = params.omega_z + k1 * params.omega_1 + k2 * params.omega_2
    if omega <= 0.0:
        raise ValueError(
            f"resonant drive frequency for k=({k1},{k2}) is not positive: "
            f"{ghz_from_angular(omega):.6g} GHz")
    return omega


def multiphoton_coupling(params: SystemParams, drive: DriveConfig, bessel_index: int,
                         m1: int, n1: int, m2: int, n2: int, t: float) -> complex:
    """Coefficient of a1^dag^m1 a1^n1 a2^dag^m2 a2^n2 sigma_+ in the expanded interaction.

    Time dependence is a pure phase, so the magnitude is stationary and
    factorizes into per-mode ladder factors times the common Bessel factor.
    """
    for idx in (m1, n1, m2, n2):
        if idx < 0:
            raise ValueError("ladder indices must be non-negative")
    phase = (bessel_index * drive.omega_drive + params.omega_z
             + (m1 - n1) * params.omega_1 + (m2 - n2) * params.omega_2) * t \
        + bessel_index * drive.phi
    mag = (math.exp(-0.5 * (params.eta_1**2 + params.eta_2**2))
           * bessel_first_kind(bessel_index, drive.x)
           * (-1.0) ** (n1 + n2)
           * params.eta_1 ** (m1 + n1) * params.eta_2 ** (m2 + n2)
           / (math.factorial(m1) * math.factorial(n1)
              * math.factorial(m2) * math.factorial(n2)))
    return mag * cmath.exp(1j * phase)


def single_mode_coupling(params: SystemParams, drive: DriveConfig, bessel_index: int,
                         mode: int, m: int, n: int, t: float) -> complex:
    """Single-mode analogue of :func:`multiphoton_coupling` for mode 1 or 2."""
    if m < 0 or n < 0:
        raise ValueError("ladder indices must be non-negative")
    eta = params.eta(mode)
    omega_l = params.omega(mode)
    phase = (bessel_index * drive.omega_drive + params.omega_z
             + (m - n) * omega_l) * t + bessel_index * drive.phi
    mag = ((-1.0) ** n * bessel_first_kind(bessel_index, drive.x)
           * eta ** (m + n) * math.exp(-0.5 * eta * eta)
           / (math.factorial(m) * math.factorial(n)))
    return mag * cmath.exp(1j * phase)


# unit conversions: config files and reports quote omega/2pi in GHz (rates in
# MHz, durations in ns); everything internal is rad/s and s

def angular_from_ghz(f_ghz: float) -> float:
    return TWO_PI * 1e9 * float(f_ghz)

def ghz_from_angular(omega: float) -> float:
    return omega / (TWO_PI * 1e9)

def angular_from_mhz(f_mhz: float) -> float:
    return TWO_PI * 1e6 * float(f_mhz)

def mhz_from_angular(omega: float) -> float:
    return omega / (TWO_PI * 1e6)

def seconds_from_ns(t_ns: float) -> float:
    return 1e-9 * float(t_ns)

def ns_from_seconds(t: float) -> float:
    return t / 1e-9
