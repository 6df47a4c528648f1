"""Incident plane wave, its spherical decomposition, Zeeman shifts and link budget.

Lab frame: beams and the default wave vector run along +x. The E field of
a wave with polarization angle theta lies in the y-z plane,
E = cos(theta) z + sin(theta) y, so that with the bias along z the pi
weight is cos(theta). The RF magnetic field uses the same convention with
its own angle theta_b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import constants as K
from .angular import HalfInt, basis_for_axis
from .errors import InvalidInput

_SQ2 = math.sqrt(2.0)


def in_plane_vector(theta: float) -> np.ndarray:
    """Unit vector cos(theta) z + sin(theta) y."""
    return np.array([0.0, math.sin(theta), math.cos(theta)])


@dataclass(frozen=True)
class BiasField:
    magnitude: float  # T
    theta_bias: float = 0.0  # rad, from +z in the x-z plane
    direction: tuple | None = None  # explicit axis, overrides theta_bias

    def __post_init__(self):
        if self.magnitude < 0 or not math.isfinite(self.magnitude):
            raise InvalidInput(f"bias magnitude must be finite and >= 0, got {self.magnitude}")
        if self.direction is not None:
            v = np.asarray(self.direction, float)
            n = float(np.linalg.norm(v))
            if v.shape != (3,) or n == 0.0:
                raise InvalidInput("bias direction must be a nonzero 3-vector")
            object.__setattr__(self, "direction", tuple(float(c) for c in v / n))

    @property
    def axis(self) -> np.ndarray:
        if self.direction is not None:
            return np.array(self.direction)
        if self.magnitude == 0.0:
            # no field, no preferred axis: fix the frame so the tilt is inert
            return np.array([0.0, 0.0, 1.0])
        return np.array([math.sin(self.theta_bias), 0.0, math.cos(self.theta_bias)])

    @property
    def zeeman_projection(self) -> float:
        """Factor on the Zeeman shifts: cos(theta_bias) for a tilted bias, 1 when
        the bias is given as an explicit axis (quantization follows it)."""
        return 1.0 if self.direction is not None else math.cos(self.theta_bias)

    def along(self, direction) -> "BiasField":
        return BiasField(self.magnitude, 0.0, tuple(direction))

    @property
    def larmor(self) -> float:
        """mu_B B / hbar in rad/s."""
        return K.MU_B * self.magnitude / K.HBAR


@dataclass(frozen=True)
class PlaneWave:
    e_amplitude: float  # V/m
    theta_rf: float  # rad
    frequency: float = 2 * math.pi * 6.9e9  # rad/s
    theta_b: float | None = None  # rad; defaults to theta_rf - pi/2 (k along +x)
    b_amplitude: float | None = None  # T; defaults to E0 / c

    def __post_init__(self):
        if self.theta_b is None:
            object.__setattr__(self, "theta_b", self.theta_rf - math.pi / 2)
        if self.b_amplitude is None:
            object.__setattr__(self, "b_amplitude", self.e_amplitude / K.C_LIGHT)

    @property
    def e_hat(self) -> np.ndarray:
        return in_plane_vector(self.theta_rf)

    @property
    def b_hat(self) -> np.ndarray:
        return in_plane_vector(self.theta_b)

    @property
    def e_vector(self) -> np.ndarray:
        return self.e_amplitude * self.e_hat

    @property
    def b_vector(self) -> np.ndarray:
        return self.b_amplitude * self.b_hat

    @property
    def k_hat(self) -> np.ndarray:
        k = np.cross(self.e_hat, self.b_hat)
        return k / np.linalg.norm(k)


@dataclass(frozen=True)
class SphericalDecomposition:
    amplitude: float
    coeffs: dict = field(default_factory=dict)  # q -> complex
    kind: str = "E1"

    def __getitem__(self, q: int) -> complex:
        return self.coeffs[q]

    def as_tuple(self) -> tuple[complex, complex, complex]:
        return (self.coeffs[-1], self.coeffs[0], self.coeffs[1])

    def norm_sq(self) -> float:
        return float(sum(abs(c) ** 2 for c in self.coeffs.values()))


def _closed_form(theta: float) -> dict:
    s = math.sin(theta) / _SQ2
    return {-1: complex(s), 0: complex(math.cos(theta)), 1: complex(-s)}


def decompose_e_field(theta_rf: float, amplitude: float = 1.0) -> SphericalDecomposition:
    """alpha_0 = cos theta, alpha_{+-1} = -+ sin theta / sqrt 2."""
    return SphericalDecomposition(amplitude, _closed_form(theta_rf), "E1")


def decompose_b_field(theta_b: float, amplitude: float = 1.0) -> SphericalDecomposition:
    return SphericalDecomposition(amplitude, _closed_form(theta_b), "M1")


def project(vector, bias: BiasField, amplitude: float | None = None,
            kind: str = "E1") -> SphericalDecomposition:
    """Decompose an arbitrary real field direction in the basis set by ``bias``.

    Reduces to the closed form for in-plane vectors when the bias is along z.
    """
    v = np.asarray(vector, float)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise InvalidInput("cannot decompose a zero vector")
    basis = basis_for_axis(bias.axis)
    return SphericalDecomposition(n if amplitude is None else amplitude,
                                  basis.components(v / n), kind)


def e_decomposition(wave: PlaneWave, bias: BiasField) -> SphericalDecomposition:
    return project(wave.e_hat, bias, wave.e_amplitude, "E1")


def b_decomposition(wave: PlaneWave, bias: BiasField) -> SphericalDecomposition:
    return project(wave.b_hat, bias, wave.b_amplitude, "M1")


def zeeman_shift(bias: BiasField, g_upper: float, m_upper, g_lower: float, m_lower) -> float:
    """Path Zeeman shift in rad/s, upper minus lower."""
    mu = HalfInt.of(m_upper).value
    ml = HalfInt.of(m_lower).value
    return bias.larmor * (g_upper * mu - g_lower * ml) * bias.zeeman_projection


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float  # W
    tx_gain: float  # linear
    distance: float  # m
    wavelength: float  # m
    impedance: float = K.Z0

    def __post_init__(self):
        for name in ("tx_power", "tx_gain", "distance", "wavelength", "impedance"):
            if not getattr(self, name) > 0:
                raise InvalidInput(f"{name} must be strictly positive")

    @property
    def power_density(self) -> float:
        """Incident flux in W/m^2."""
        return self.tx_power * self.tx_gain / (4 * math.pi * self.distance ** 2)

    @property
    def e_amplitude(self) -> float:
        """Peak field amplitude at the receiver, from S = E0^2 / (2 Z0)."""
        return math.sqrt(2.0 * self.impedance * self.power_density)


def effective_aperture(n_atoms: float, dipole: float, omega_rf: float, t2: float,
                       z0: float = K.Z0) -> float:
    """Equivalent receiving area of the atomic ensemble, m^2."""
    return 4 * math.pi * z0 * n_atoms * dipole ** 2 * omega_rf * t2 / K.HBAR


def received_power(link: LinkBudget, a_eff: float) -> float:
    if not link.distance > 0:
        raise InvalidInput("distance must be positive")
    if a_eff < 0:
        raise InvalidInput("aperture cannot be negative")
    return link.power_density * a_eff


def dbm_to_watt(dbm: float) -> float:
    return 1e-3 * 10 ** (dbm / 10)


def dbi_to_linear(dbi: float) -> float:
    return 10 ** (dbi / 10)
