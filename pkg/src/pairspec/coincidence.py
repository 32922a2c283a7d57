"""Two-photon, four-photon, and signal-signal detection probabilities.

All probabilities use the normalized-JSA convention (gamma = 1, relative
scale).  The four-fold outcome space over an n x n grid has n^4 entries;
projections stream over it in fixed-size blocks instead of materializing it.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .jsa import JointSpectralAmplitude
from .schmidt import SchmidtDecomposition, marginal_spectrum, purity, reduced_density

MAX_FULL_TENSOR_N = 96
DEFAULT_BLOCK_SIZE = 1 << 21  # outcome quadruples per streamed block


class Representation(str, Enum):
    FULL_TENSOR = "full_tensor"
    DIFFERENCE = "difference"
    PRODUCT = "product"


@dataclass(frozen=True, eq=False)
class FourfoldDistribution:
    """Four-photon outcome distribution in one of three representations.

    FULL_TENSOR holds values[a, b, a2, b2] over (w_s, w_i, w_s', w_i').
    DIFFERENCE is a 2-D histogram over (|d_s|, |d_i|), PRODUCT a 1-D histogram
    over |d_s|*|d_i|, with d in rad/ps ("frequency") or nm ("wavelength").
    """

    representation: Representation
    values: np.ndarray = field(repr=False)
    bin_edges: tuple = ()
    axis_unit: str = "frequency"
    normalized: bool = True
    total: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if np.any(vals < -1e-12 * max(1.0, float(np.max(np.abs(vals), initial=0.0)))):
            raise ValueError("distribution values must be non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def centers(self, axis: int = 0) -> np.ndarray:
        e = self.bin_edges[axis]
        return 0.5 * (e[:-1] + e[1:])


def pair_probability(jsa: JointSpectralAmplitude, omega_s: float, omega_i: float) -> float:
    """Relative pair-generation probability gamma |psi(w_s, w_i)|^2."""
    a = jsa.grid.index_signal(omega_s)
    b = jsa.grid.index_idler(omega_i)
    return float(jsa.gamma * np.abs(jsa.amplitude[a, b]) ** 2)


def four_photon_probability(jsa: JointSpectralAmplitude, omega_s: float, omega_i: float,
                            omega_s2: float, omega_i2: float) -> float:
    """Double-pair probability with the two pairing paths added coherently."""
    g = jsa.grid
    a, b = g.index_signal(omega_s), g.index_idler(omega_i)
    a2, b2 = g.index_signal(omega_s2), g.index_idler(omega_i2)
    amp = jsa.amplitude
    term = amp[a, b] * amp[a2, b2] + amp[a, b2] * amp[a2, b]
    return float(jsa.gamma * np.abs(term) ** 2)


def fringe_closed_form(grid, marginal_s: np.ndarray, marginal_i: np.ndarray, beta: float,
                       quadruple) -> float:
    """Factorable-magnitude four-photon probability with the bilinear-phase fringe.

    4 Ps(w_s) Ps(w_s') Pi(w_i) Pi(w_i') cos^2[beta/2 (w_s - w_s')(w_i - w_i')],
    with Ps, Pi the normalized marginal intensities on the grid axes.
    """
    omega_s, omega_i, omega_s2, omega_i2 = quadruple
    a, b = grid.index_signal(omega_s), grid.index_idler(omega_i)
    a2, b2 = grid.index_signal(omega_s2), grid.index_idler(omega_i2)
    ws, wi = grid.signal_axis, grid.idler_axis
    phase = 0.5 * beta * (ws[a] - ws[a2]) * (wi[b] - wi[b2])
    return float(4.0 * marginal_s[a] * marginal_s[a2] * marginal_i[b] * marginal_i[b2]
                 * np.cos(phase) ** 2)


def signal_signal_probability(jsa: JointSpectralAmplitude, omega_s: float, omega_s2: float,
                              density=None) -> float:
    """Two-signal probability: non-interfering product plus |rho|^2 interference."""
    a = jsa.grid.index_signal(omega_s)
    a2 = jsa.grid.index_signal(omega_s2)
    ms = marginal_spectrum(jsa, "signal")
    rho = density if density is not None else reduced_density(jsa)
    return float(2 * jsa.gamma * (ms[a] * ms[a2] + np.abs(rho.matrix[a, a2]) ** 2))


def signal_signal_map(jsa: JointSpectralAmplitude) -> np.ndarray:
    """signal_signal_probability evaluated on the whole (w_s, w_s') grid."""
    ms = marginal_spectrum(jsa, "signal")
    rho = reduced_density(jsa)
    return 2 * jsa.gamma * (np.outer(ms, ms) + np.abs(rho.matrix) ** 2)


def unheralded_g2(decomp: SchmidtDecomposition) -> float:
    """Unheralded second-order coherence of one arm: 1 + purity."""
    return 1.0 + purity(decomp)


def _difference_values(jsa, axis_unit):
    g = jsa.grid
    if axis_unit == "frequency":
        return g.signal_axis.copy(), g.idler_axis.copy()
    if axis_unit == "wavelength":
        return g.signal_wavelengths(), g.idler_wavelengths()
    raise ValueError("axis_unit must be 'frequency' or 'wavelength'")


def _bin_index(values, edges):
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, edges.size - 2)
    return idx.astype(np.int64)


def _weighted_quantile(values, weights, q):
    order = np.argsort(values)
    v = values[order]
    cum = np.cumsum(weights[order])
    cum /= cum[-1]
    return float(v[np.searchsorted(cum, q, side="left")])


RANGE_QUANTILE = 1.0 - 1e-4  # envelope mass kept inside the histogram range


def _difference_ranges(ds_abs, di_abs, w_s, w_i):
    """Histogram spans holding all but ~1e-4 of the separable envelope mass.

    Outcomes beyond the span land in the top bin; the ranges depend only on
    the JSA magnitudes, never on its phase.
    """
    ds_hi = _weighted_quantile(ds_abs, w_s, RANGE_QUANTILE)
    di_hi = _weighted_quantile(di_abs, w_i, RANGE_QUANTILE)
    return ds_hi, di_hi


def _product_range(ds_abs, di_abs, w_s, w_i, n_coarse=512):
    """Quantile of |d_s|*|d_i| under the separable envelope, via coarse
    rebinning of each factor so the joint stays small."""
    def rebin(vals, weights):
        hi = vals.max()
        edges = np.linspace(0.0, hi * (1 + 1e-12), n_coarse + 1)
        w, _ = np.histogram(vals, bins=edges, weights=weights)
        centers = 0.5 * (edges[:-1] + edges[1:])
        keep = w > 0
        return centers[keep], w[keep]

    cs, ws = rebin(ds_abs, w_s)
    ci, wi = rebin(di_abs, w_i)
    prod = np.outer(cs, ci).ravel()
    pw = np.outer(ws, wi).ravel()
    return _weighted_quantile(prod, pw, RANGE_QUANTILE)


def project_fourfold(jsa: JointSpectralAmplitude, representation=Representation.DIFFERENCE,
                     *, axis_unit: str = "frequency", n_bins: int = 64,
                     product_bins: int = 200, block_size: int = DEFAULT_BLOCK_SIZE,
                     n_workers: int = 1, normalize: bool = True,
                     max_delta_signal: float | None = None,
                     max_delta_idler: float | None = None,
                     max_product: float | None = None) -> FourfoldDistribution:
    """Project the four-photon outcome space into the requested representation.

    The DIFFERENCE and PRODUCT projections stream over signal-pair rows of the
    outcome space in blocks of at most `block_size` quadruples (rounded up to
    whole rows), so the n^4 tensor is never materialized.  Partial histograms
    are merged in row order, so the result is independent of block size and
    worker count.

    Histogram ranges default to the envelope-support quantile (outcomes beyond
    it are clipped into the top bin); pass max_delta_signal/idler or
    max_product to override.
    """
    representation = Representation(representation)
    amp = jsa.amplitude
    n_s, n_i = amp.shape

    if representation is Representation.FULL_TENSOR:
        if max(n_s, n_i) > MAX_FULL_TENSOR_N:
            raise ValueError(
                f"full tensor limited to grids of at most {MAX_FULL_TENSOR_N} points, "
                f"got {max(n_s, n_i)}")
        values = np.empty((n_s, n_i, n_s, n_i))
        for a in range(n_s):
            u = amp[a]
            t = u[None, :, None] * amp[:, None, :] + amp[:, :, None] * u[None, None, :]
            values[a] = np.moveaxis(np.abs(t) ** 2, 0, 1)
        total = float(values.sum())
        if normalize:
            values /= total
        return FourfoldDistribution(representation, values, (), "frequency", normalize, total)

    vs, vi = _difference_values(jsa, axis_unit)

    pairs = n_s * n_s
    rows_per_block = max(1, int(block_size) // (n_i * n_i))
    a_idx = np.repeat(np.arange(n_s), n_s)
    a2_idx = np.tile(np.arange(n_s), n_s)
    ds_abs = np.abs(vs[a_idx] - vs[a2_idx])
    di_abs = np.abs(vi[:, None] - vi[None, :]).ravel()

    inten = jsa.intensity
    marg_s = inten.sum(axis=1)
    marg_i = inten.sum(axis=0)
    w_s = (marg_s[a_idx] * marg_s[a2_idx])
    w_i = np.outer(marg_i, marg_i).ravel()
    auto_ds, auto_di = _difference_ranges(ds_abs, di_abs, w_s, w_i)
    ds_max = float(max_delta_signal) if max_delta_signal is not None else auto_ds
    di_max = float(max_delta_idler) if max_delta_idler is not None else auto_di

    def block_probabilities(p0, p1):
        # |u_b v_b' + v_b u_b'|^2 as a sum of four real rank-1 terms, evaluated
        # for every quadruple of the block via one batched matmul
        u = amp[a_idx[p0:p1]]
        v = amp[a2_idx[p0:p1]]
        w = u * np.conj(v)
        left = np.stack([np.abs(u) ** 2, np.abs(v) ** 2,
                         np.sqrt(2) * w.real, np.sqrt(2) * w.imag], axis=2)
        right = np.stack([np.abs(v) ** 2, np.abs(u) ** 2,
                          np.sqrt(2) * w.real, np.sqrt(2) * w.imag], axis=1)
        return np.matmul(left, right).reshape(p1 - p0, -1)

    if representation is Representation.DIFFERENCE:
        edges_s = np.linspace(0.0, ds_max, n_bins + 1)
        edges_i = np.linspace(0.0, di_max, n_bins + 1)
        outer_bin = _bin_index(ds_abs, edges_s)
        inner_bin = _bin_index(di_abs, edges_i)
        n_out = n_bins * n_bins

        def run_block(p0, p1):
            prob = block_probabilities(p0, p1)
            hist = np.zeros(n_out)
            for k in range(p1 - p0):
                row = outer_bin[p0 + k] * n_bins
                hist[row:row + n_bins] += np.bincount(inner_bin, weights=prob[k],
                                                      minlength=n_bins)
            return hist

        hist = _stream_blocks(run_block, pairs, rows_per_block, n_out, n_workers)
        values = hist.reshape(n_bins, n_bins)
        edges = (edges_s, edges_i)
    else:  # PRODUCT
        u_max = (float(max_product) if max_product is not None
                 else _product_range(ds_abs, di_abs, w_s, w_i))
        edges_u = np.linspace(0.0, u_max, product_bins + 1)
        inv_step = product_bins / u_max if u_max > 0 else 0.0

        def run_block(p0, p1):
            prob = block_probabilities(p0, p1)
            hist = np.zeros(product_bins)
            for k in range(p1 - p0):
                idx = np.minimum((ds_abs[p0 + k] * di_abs * inv_step).astype(np.int64),
                                 product_bins - 1)
                hist += np.bincount(idx, weights=prob[k], minlength=product_bins)
            return hist

        hist = _stream_blocks(run_block, pairs, rows_per_block, product_bins, n_workers)
        values = hist
        edges = (edges_u,)

    total = float(values.sum())
    out = values / total if normalize else values
    return FourfoldDistribution(representation, out, edges, axis_unit, normalize, total)


def histogram_fourfold_events(events: np.ndarray, like: FourfoldDistribution,
                              grid) -> FourfoldDistribution:
    """Bin sampled quadruples (w_s, w_i, w_s', w_i') with the binning of an
    existing projection, returning raw counts (normalized=False)."""
    events = np.asarray(events, dtype=float).reshape(-1, 4)
    rep = Representation(like.representation)
    if rep is Representation.FULL_TENSOR:
        raise ValueError("event histograms support only projection representations")
    if like.axis_unit == "frequency":
        s1, s2 = events[:, 0], events[:, 2]
        i1, i2 = events[:, 1], events[:, 3]
    else:
        from .jsa import detuning_to_wavelength
        s1 = detuning_to_wavelength(events[:, 0], grid.signal_center_wavelength)
        s2 = detuning_to_wavelength(events[:, 2], grid.signal_center_wavelength)
        i1 = detuning_to_wavelength(events[:, 1], grid.idler_center_wavelength)
        i2 = detuning_to_wavelength(events[:, 3], grid.idler_center_wavelength)
    ds = np.abs(s1 - s2)
    di = np.abs(i1 - i2)
    if rep is Representation.DIFFERENCE:
        counts, _, _ = np.histogram2d(ds, di, bins=[like.bin_edges[0], like.bin_edges[1]])
    else:
        counts, _ = np.histogram(ds * di, bins=like.bin_edges[0])
    return FourfoldDistribution(rep, counts, like.bin_edges, like.axis_unit,
                                normalized=False, total=float(counts.sum()))


def _stream_blocks(run_block, n_pairs, rows_per_block, n_out, n_workers):
    starts = list(range(0, n_pairs, rows_per_block))
    if n_workers <= 1:
        hist = np.zeros(n_out)
        for p0 in starts:
            hist += run_block(p0, min(p0 + rows_per_block, n_pairs))
        return hist
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        partials = list(pool.map(
            lambda p0: run_block(p0, min(p0 + rows_per_block, n_pairs)), starts))
    hist = np.zeros(n_out)
    for part in partials:  # merge in block order: worker count cannot change the sum
        hist += part
    return hist
