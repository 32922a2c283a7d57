"""Joint spectral amplitudes of photon-pair sources on discrete frequency grids.

Frequencies are angular detunings in rad/ps from each photon's center
wavelength; wavelengths are in nm; pump chirp beta is in ps^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

C_NM_PER_PS = 299792.458  # speed of light, nm/ps


class GridError(ValueError):
    """A frequency does not lie on the grid, or the grid is invalid."""


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Discretized signal/idler detuning axes with their center wavelengths."""

    signal_axis: np.ndarray  # rad/ps, strictly increasing, uniform
    idler_axis: np.ndarray
    signal_center_wavelength: float  # nm
    idler_center_wavelength: float  # nm

    def __post_init__(self):
        for name, axis in (("signal", self.signal_axis), ("idler", self.idler_axis)):
            axis = np.asarray(axis, dtype=float)
            if axis.ndim != 1 or axis.size < 2:
                raise GridError(f"{name} axis needs at least 2 points")
            steps = np.diff(axis)
            if np.any(steps <= 0):
                raise GridError(f"{name} axis must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise GridError(f"{name} axis must be uniformly spaced")
            axis.setflags(write=False)
            object.__setattr__(self, f"{name}_axis", axis)
        if self.signal_center_wavelength <= 0 or self.idler_center_wavelength <= 0:
            raise GridError("center wavelengths must be positive")

    @property
    def n_signal(self) -> int:
        return self.signal_axis.size

    @property
    def n_idler(self) -> int:
        return self.idler_axis.size

    @property
    def step_signal(self) -> float:
        return float(self.signal_axis[1] - self.signal_axis[0])

    @property
    def step_idler(self) -> float:
        return float(self.idler_axis[1] - self.idler_axis[0])

    @property
    def cell(self) -> float:
        """Area weight of one grid cell, step_signal * step_idler."""
        return self.step_signal * self.step_idler

    def signal_wavelengths(self) -> np.ndarray:
        """Exact wavelengths (nm) of the signal axis points."""
        return detuning_to_wavelength(self.signal_axis, self.signal_center_wavelength)

    def idler_wavelengths(self) -> np.ndarray:
        return detuning_to_wavelength(self.idler_axis, self.idler_center_wavelength)

    def index_signal(self, omega: float) -> int:
        return _index_on_axis(self.signal_axis, omega, "signal")

    def index_idler(self, omega: float) -> int:
        return _index_on_axis(self.idler_axis, omega, "idler")


def _index_on_axis(axis: np.ndarray, omega, label: str):
    step = axis[1] - axis[0]
    idx = np.rint((np.asarray(omega) - axis[0]) / step).astype(int)
    if np.any(idx < 0) or np.any(idx >= axis.size):
        raise GridError(f"{label} frequency {omega} outside grid")
    if not np.allclose(axis[idx], omega, rtol=0, atol=1e-6 * abs(step)):
        raise GridError(f"{label} frequency {omega} not a grid point (no interpolation)")
    if np.isscalar(omega) or np.ndim(omega) == 0:
        return int(idx)
    return idx


def detuning_to_wavelength(omega, center_wavelength_nm):
    """Exact conversion of an angular detuning (rad/ps) to wavelength (nm)."""
    omega0 = 2 * np.pi * C_NM_PER_PS / center_wavelength_nm
    return 2 * np.pi * C_NM_PER_PS / (omega0 + np.asarray(omega))


def wavelength_to_detuning(wavelength_nm, center_wavelength_nm):
    omega0 = 2 * np.pi * C_NM_PER_PS / center_wavelength_nm
    return 2 * np.pi * C_NM_PER_PS / np.asarray(wavelength_nm) - omega0


@dataclass(frozen=True)
class PumpSpectrum:
    """Gaussian pump amplitude exp(-w^2/(2 sigma_p^2)) with quadratic phase exp(i beta/2 w^2)."""

    sigma_p: float  # rad/ps, amplitude 1/e half-width
    beta: float = 0.0  # ps^2, linear chirp coefficient
    center_wavelength: float = 777.0  # nm

    def __post_init__(self):
        if self.sigma_p <= 0:
            raise ValueError("sigma_p must be positive")
        if not np.isfinite(self.beta):
            raise ValueError("beta must be finite")


class PhaseMatchKind(str, Enum):
    GAUSSIAN = "gaussian"
    SINC = "sinc"


@dataclass(frozen=True)
class PhaseMatchModel:
    """Phase-matching acceptance phi(dk) with dk built from group-index walk-off.

    sigma is the width of the dk acceptance in rad/nm (equivalently 1e6 rad/mm).
    """

    kind: PhaseMatchKind = PhaseMatchKind.GAUSSIAN
    sigma: float = 1e-6
    group_index_pump: float = 1.80
    group_index_signal: float = 1.88
    group_index_idler: float = 1.72

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("phase-matching sigma must be positive")
        object.__setattr__(self, "kind", PhaseMatchKind(self.kind))

    def mismatch(self, omega_s, omega_i):
        """dk(omega_s, omega_i) in rad/nm."""
        return (
            (self.group_index_pump - self.group_index_signal) * np.asarray(omega_s)
            + (self.group_index_pump - self.group_index_idler) * np.asarray(omega_i)
        ) / C_NM_PER_PS

    def acceptance(self, dk):
        if self.kind is PhaseMatchKind.GAUSSIAN:
            return np.exp(-0.5 * (dk / self.sigma) ** 2)
        # sin(x)/x with x = dk/sigma;  np.sinc(x) is sin(pi x)/(pi x)
        return np.sinc(dk / (np.pi * self.sigma))


def factorable_pump_sigma(pm: PhaseMatchModel) -> float:
    """Pump width (rad/ps) that makes the Gaussian-phase-matched JSA factorable.

    Requires the group-index ordering n_s > n_p > n_i.
    """
    dns = pm.group_index_signal - pm.group_index_pump
    dni = pm.group_index_pump - pm.group_index_idler
    if dns <= 0 or dni <= 0:
        raise ValueError("factorability needs group indices ordered n_s > n_p > n_i")
    return C_NM_PER_PS * pm.sigma / np.sqrt(dns * dni)


def factorable_marginal_sigmas(pump: PumpSpectrum, pm: PhaseMatchModel):
    """Marginal amplitude widths (sigma_s, sigma_i) of the Gaussian-model JSA."""
    csig = C_NM_PER_PS * pm.sigma
    sig_s = (pump.sigma_p ** -2 + ((pm.group_index_pump - pm.group_index_signal) / csig) ** 2) ** -0.5
    sig_i = (pump.sigma_p ** -2 + ((pm.group_index_pump - pm.group_index_idler) / csig) ** 2) ** -0.5
    return float(sig_s), float(sig_i)


@dataclass(frozen=True, eq=False)
class JointSpectralAmplitude:
    """Complex pair amplitude psi(omega_s, omega_i) on a grid, unit L2 norm."""

    grid: FrequencyGrid
    amplitude: np.ndarray = field(repr=False)  # complex, (n_signal, n_idler)
    gamma: float = 1.0  # vacuum prefactor; probabilities here are relative

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=complex)
        if amp.shape != (self.grid.n_signal, self.grid.n_idler):
            raise ValueError("amplitude shape does not match grid")
        if not np.all(np.isfinite(amp.view(float))):
            raise ValueError("amplitude entries must be finite")
        if not (0 < self.gamma <= 1):
            raise ValueError("gamma must be in (0, 1]")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def norm(self) -> float:
        """L2 norm with grid cell weight; 1.0 after building."""
        return float(np.sqrt(np.sum(self.intensity) * self.grid.cell))

    def conjugated(self) -> "JointSpectralAmplitude":
        """Complex-conjugate JSA (beta -> -beta for the chirped family)."""
        return JointSpectralAmplitude(self.grid, np.conj(self.amplitude), self.gamma)


def make_grid(signal_center: float, idler_center: float, span: float, n_points: int,
              idler_span: float | None = None, n_idler: int | None = None) -> FrequencyGrid:
    """Symmetric detuning axes covering [-span/2, +span/2] for both photons."""
    if span <= 0:
        raise GridError("span must be positive")
    if n_points < 2:
        raise GridError("n_points must be at least 2")
    if idler_span is not None and idler_span <= 0:
        raise GridError("idler_span must be positive")
    if n_idler is not None and n_idler < 2:
        raise GridError("n_idler must be at least 2")
    sig = np.linspace(-span / 2, span / 2, n_points)
    ispan = span if idler_span is None else idler_span
    ni = n_points if n_idler is None else n_idler
    idl = np.linspace(-ispan / 2, ispan / 2, ni)
    return FrequencyGrid(sig, idl, signal_center, idler_center)


def chirp_from_gdd(dispersion_ps_per_nm: float, center_wavelength_nm: float) -> float:
    """Convert group-delay dispersion (ps/nm) at a center wavelength to beta (ps^2).

    Sign convention: positive ps/nm gives positive beta.
    """
    if center_wavelength_nm <= 0:
        raise ValueError("center wavelength must be positive")
    return dispersion_ps_per_nm * center_wavelength_nm ** 2 / (2 * np.pi * C_NM_PER_PS)


def _normalized(amplitude: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    nrm = np.sqrt(np.sum(np.abs(amplitude) ** 2) * grid.cell)
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("cannot normalize zero or non-finite amplitude")
    return amplitude / nrm


def build_jsa(pump: PumpSpectrum, pm: PhaseMatchModel, grid: FrequencyGrid) -> JointSpectralAmplitude:
    """Pump-envelope times phase-matching JSA, normalized on the grid."""
    ws = grid.signal_axis[:, None]
    wi = grid.idler_axis[None, :]
    wp = ws + wi
    alpha = np.exp(-0.5 * (wp / pump.sigma_p) ** 2) * np.exp(0.5j * pump.beta * wp ** 2)
    phi = pm.acceptance(pm.mismatch(ws, wi))
    return JointSpectralAmplitude(grid, _normalized(alpha * phi, grid))


def build_chirped_factorable_jsa(sigma_s: float, sigma_i: float, beta: float,
                                 grid: FrequencyGrid) -> JointSpectralAmplitude:
    """Gaussian marginals with the bilinear phase exp(i beta w_s w_i), normalized."""
    if sigma_s <= 0 or sigma_i <= 0:
        raise ValueError("marginal widths must be positive")
    ws = grid.signal_axis[:, None]
    wi = grid.idler_axis[None, :]
    amp = np.exp(-0.5 * (ws / sigma_s) ** 2) * np.exp(-0.5 * (wi / sigma_i) ** 2)
    amp = amp * np.exp(1j * beta * ws * wi)
    return JointSpectralAmplitude(grid, _normalized(amp, grid))


def gaussian_schmidt_purity(sigma_s: float, sigma_i: float, beta: float) -> float:
    """Closed-form single-photon purity of the bilinear-phase Gaussian family."""
    return (1.0 + (beta * sigma_s * sigma_i) ** 2) ** -0.5
