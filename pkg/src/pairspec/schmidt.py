"""Schmidt decomposition, purity, and reduced density function of a JSA."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jsa import FrequencyGrid, JointSpectralAmplitude

XI_TRUNCATION = 1e-8  # drop modes with xi_j / xi_0 below this


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """Mode amplitudes xi_j (descending) with signal/idler mode functions.

    Modes are stored row-wise, orthonormal under the discrete inner product
    sum(conj(f) * g) * step.  xi satisfies sum(xi^2) = 1 for a normalized JSA.
    """

    xi: np.ndarray
    signal_modes: np.ndarray = field(repr=False)  # (n_modes, n_signal)
    idler_modes: np.ndarray = field(repr=False)  # (n_modes, n_idler)
    grid: FrequencyGrid

    def __post_init__(self):
        for name in ("xi", "signal_modes", "idler_modes"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_modes(self) -> int:
        return self.xi.size

    def reconstruct(self) -> np.ndarray:
        """Sum_j xi_j psi_s_j(w_s) psi_i_j(w_i) back on the grid."""
        return np.einsum("j,ja,jb->ab", self.xi, self.signal_modes, self.idler_modes)


@dataclass(frozen=True, eq=False)
class DensityFunction:
    """Reduced density function rho(w, w') of one photon, idler traced out."""

    matrix: np.ndarray = field(repr=False)  # complex, (n, n), Hermitian
    axis: np.ndarray = field(repr=False)  # rad/ps detunings
    center_wavelength: float

    def __post_init__(self):
        for name in ("matrix", "axis"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def step(self) -> float:
        return float(self.axis[1] - self.axis[0])

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)) * self.step)

    def purity(self) -> float:
        """Integral of |rho|^2 over both arguments."""
        return float(np.sum(np.abs(self.matrix) ** 2) * self.step ** 2)

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))


def schmidt_decompose(jsa: JointSpectralAmplitude) -> SchmidtDecomposition:
    """SVD of the cell-weighted amplitude matrix, modes phase-fixed and truncated."""
    amp = jsa.amplitude
    if not np.all(np.isfinite(amp.view(float))):
        raise ValueError("cannot decompose non-finite amplitude")
    grid = jsa.grid
    weighted = amp * np.sqrt(grid.cell)
    u, s, vh = np.linalg.svd(weighted, full_matrices=False)

    keep = s > XI_TRUNCATION * s[0] if s[0] > 0 else slice(0, 1)
    s = s[keep]
    u = u[:, keep]
    vh = vh[keep, :]

    signal_modes = (u / np.sqrt(grid.step_signal)).T
    idler_modes = np.conj(vh) / np.sqrt(grid.step_idler)

    # fix each mode's global phase: largest-|.| signal component real positive
    for j in range(s.size):
        k = int(np.argmax(np.abs(signal_modes[j])))
        ph = signal_modes[j, k]
        if np.abs(ph) > 0:
            ph = ph / np.abs(ph)
            signal_modes[j] = signal_modes[j] / ph
            idler_modes[j] = idler_modes[j] * ph

    return SchmidtDecomposition(s, signal_modes, idler_modes, grid)


def purity(decomp: SchmidtDecomposition) -> float:
    """Single-photon purity sum(xi^4) / sum(xi^2)^2."""
    x2 = decomp.xi ** 2
    return float(np.sum(x2 ** 2) / np.sum(x2) ** 2)


def reduced_density(jsa: JointSpectralAmplitude) -> DensityFunction:
    """rho(w, w') = integral of psi(w, wi) conj(psi(w', wi)) over wi."""
    amp = jsa.amplitude
    rho = amp @ amp.conj().T * jsa.grid.step_idler
    return DensityFunction(rho, jsa.grid.signal_axis, jsa.grid.signal_center_wavelength)


def marginal_spectrum(jsa: JointSpectralAmplitude, which: str = "signal") -> np.ndarray:
    """Marginal intensity of one photon, integrating to 1 with the axis step."""
    inten = jsa.intensity
    if which == "signal":
        return np.sum(inten, axis=1) * jsa.grid.step_idler
    if which == "idler":
        return np.sum(inten, axis=0) * jsa.grid.step_signal
    raise ValueError("which must be 'signal' or 'idler'")
