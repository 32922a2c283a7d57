"""Monte Carlo model of the measurement chain: multimode pair generation,
dispersive time-of-flight spectrometry, loss, 1->n detector splitting, idler
leakage, dark counts, and coincidence accumulation.

All randomness comes from counter-based Philox streams keyed by
(seed, stream family, pulse or block index), so runs are reproducible and
block-parallel execution cannot change the output.
"""
from __future__ import annotations

import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .jsa import JointSpectralAmplitude, detuning_to_wavelength
from .schmidt import SchmidtDecomposition

ARM_SIGNAL = 0
ARM_IDLER = 1
ARM_NAMES = ("signal", "idler")

_STREAM_PULSE = 1
_STREAM_BLOCK = 2
_STREAM_FOURFOLD = 3

DEFAULT_BLOCK_PULSES = 8192

SCHEMES = ("twofold_jsi", "signal_signal", "fourfold_difference", "cross_pulse_accidentals")


def _stream(seed: int, family: int, index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(family)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=int(index) << 64))


@dataclass(frozen=True, eq=False)
class SourceConfig:
    """Pulsed multimode pair source in the low-gain regime."""

    mean_pairs_per_pulse: float
    decomposition: SchmidtDecomposition
    n_pulses: int
    rng_seed: int

    def __post_init__(self):
        if self.mean_pairs_per_pulse < 0:
            raise ValueError("mean_pairs_per_pulse must be non-negative")
        if self.n_pulses < 0:
            raise ValueError("n_pulses must be non-negative")


@dataclass(frozen=True)
class DetectorChainConfig:
    """Dispersive spectrometer plus 1->n splitting per arm."""

    dispersion: float = 2.3  # ns/nm
    timing_jitter_fwhm: float = 150.0  # ps
    efficiency_signal: float = 1.0
    efficiency_idler: float = 1.0
    n_detectors_per_arm: int = 4
    idler_leak_probability: float = 0.0
    dark_count_rate_per_pulse: float = 0.0

    def __post_init__(self):
        if self.dispersion <= 0:
            raise ValueError("dispersion must be positive")
        if self.timing_jitter_fwhm < 0:
            raise ValueError("timing jitter must be non-negative")
        for name in ("efficiency_signal", "efficiency_idler", "idler_leak_probability"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.n_detectors_per_arm < 1:
            raise ValueError("need at least one detector per arm")
        if self.dark_count_rate_per_pulse < 0:
            raise ValueError("dark count rate must be non-negative")


@dataclass(frozen=True)
class DetectionRecord:
    pulse_index: int
    arm: str  # "signal" or "idler"
    detector_index: int
    inferred_wavelength: float  # nm


@dataclass
class DetectionRecords:
    """Columnar batch of detection records, sorted by pulse index."""

    pulse_index: np.ndarray
    arm: np.ndarray  # 0 = signal, 1 = idler
    detector_index: np.ndarray
    inferred_wavelength: np.ndarray
    n_pulses: int
    n_detectors: int
    signal_lambda_range: tuple
    idler_lambda_range: tuple

    def __len__(self):
        return self.pulse_index.size

    def __iter__(self):
        for k in range(len(self)):
            yield DetectionRecord(int(self.pulse_index[k]), ARM_NAMES[self.arm[k]],
                                  int(self.detector_index[k]), float(self.inferred_wavelength[k]))

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.pulse_index) >= 0))


@dataclass(frozen=True, eq=False)
class PhotonBatch:
    """Photons at the detector chain input, before loss and jitter."""

    pulse_index: np.ndarray
    arm: np.ndarray
    omega: np.ndarray  # detuning from the arm's center, rad/ps
    n_pulses: int
    signal_center_wavelength: float
    idler_center_wavelength: float
    signal_lambda_range: tuple
    idler_lambda_range: tuple

    @classmethod
    def from_grid(cls, grid, pulse_index, arm, omega, n_pulses):
        lam_s = grid.signal_wavelengths()
        lam_i = grid.idler_wavelengths()
        return cls(np.asarray(pulse_index, dtype=np.int64), np.asarray(arm, dtype=np.int64),
                   np.asarray(omega, dtype=float), int(n_pulses),
                   grid.signal_center_wavelength, grid.idler_center_wavelength,
                   (float(lam_s.min()), float(lam_s.max())),
                   (float(lam_i.min()), float(lam_i.max())))


def photon_batch_from_pairs(pairs: np.ndarray, grid, pulse_index: int = 0,
                            n_pulses: int = 1) -> PhotonBatch:
    """One pulse worth of (w_s, w_i) pairs as a photon batch."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    n = pairs.shape[0]
    pulse = np.full(2 * n, pulse_index, dtype=np.int64)
    arm = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
    omega = np.concatenate([pairs[:, 0], pairs[:, 1]])
    return PhotonBatch.from_grid(grid, pulse, arm, omega, n_pulses)


def photon_batch_from_quadruples(quads: np.ndarray, grid) -> PhotonBatch:
    """One pulse per quadruple (w_s, w_i, w_s', w_i'): 2 signal + 2 idler photons."""
    quads = np.asarray(quads, dtype=float).reshape(-1, 4)
    n = quads.shape[0]
    pulse = np.repeat(np.arange(n, dtype=np.int64), 4)
    arm = np.tile(np.array([ARM_SIGNAL, ARM_IDLER, ARM_SIGNAL, ARM_IDLER], dtype=np.int64), n)
    omega = quads.ravel()
    return PhotonBatch.from_grid(grid, pulse, arm, omega, n_pulses=n)


def _mode_geometric_params(xi: np.ndarray, mean_pairs: float) -> np.ndarray:
    """Per-mode geometric parameters p_j = (g xi_j)^2 with g scaled so the
    total mean pair number sum(p_j / (1 - p_j)) equals mean_pairs."""
    xi = np.asarray(xi, dtype=float)
    if mean_pairs == 0:
        return np.zeros_like(xi)
    xmax = xi.max()

    def excess(g):
        p = (g * xi) ** 2
        return np.sum(p / (1 - p)) - mean_pairs

    g = brentq(excess, 0.0, (1.0 - 1e-12) / xmax, xtol=1e-15, rtol=1e-14)
    return (g * xi) ** 2


def _cdf_draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(cdf, u), cdf.size - 1)


class _ModeFrequencySampler:
    """Discrete samplers for |mode|^2 distributions on the grid axes."""

    def __init__(self, decomp: SchmidtDecomposition):
        self.grid = decomp.grid
        ps = np.abs(decomp.signal_modes) ** 2 * decomp.grid.step_signal
        pi = np.abs(decomp.idler_modes) ** 2 * decomp.grid.step_idler
        self.cdf_signal = np.cumsum(ps / ps.sum(axis=1, keepdims=True), axis=1)
        self.cdf_idler = np.cumsum(pi / pi.sum(axis=1, keepdims=True), axis=1)

    def draw(self, rng, mode: int, count: int):
        us = rng.random(count)
        ui = rng.random(count)
        a = _cdf_draw(self.cdf_signal[mode], us)
        b = _cdf_draw(self.cdf_idler[mode], ui)
        return self.grid.signal_axis[a], self.grid.idler_axis[b]


_SAMPLER_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _cached_source_tables(decomp: SchmidtDecomposition, mean_pairs: float):
    entry = _SAMPLER_CACHE.get(decomp)
    if entry is None:
        entry = {"sampler": _ModeFrequencySampler(decomp), "p": {}}
        _SAMPLER_CACHE[decomp] = entry
    if mean_pairs not in entry["p"]:
        entry["p"][mean_pairs] = _mode_geometric_params(decomp.xi, mean_pairs)
    return entry["sampler"], entry["p"][mean_pairs]


def sample_pulse(source: SourceConfig, pulse_index: int) -> np.ndarray:
    """Photon pairs (w_s, w_i) of one pulse, deterministic in (seed, pulse_index).

    Pair numbers are geometric per Schmidt mode; each pair's frequencies are
    drawn from its mode's marginal intensities.  Fourfold events generated this
    way pair modes classically; the coherent double-pair statistics come from
    sample_fourfold_events instead.
    """
    rng = _stream(source.rng_seed, _STREAM_PULSE, pulse_index)
    sampler, p = _cached_source_tables(source.decomposition, source.mean_pairs_per_pulse)
    counts = np.where(p > 0, rng.geometric(np.maximum(1 - p, 1e-300)) - 1, 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty((0, 2))
    out = np.empty((total, 2))
    at = 0
    for j in np.nonzero(counts)[0]:
        c = int(counts[j])
        ws, wi = sampler.draw(rng, j, c)
        out[at:at + c, 0] = ws
        out[at:at + c, 1] = wi
        at += c
    return out


class _FourfoldSampler:
    """Rejection sampler for the coherent double-pair outcome distribution.

    Proposals are separable draws from the JSI marginals; the envelope constant
    comes from the largest JSI / (marginal product) ratio, so acceptance is
    exact for any JSA and the ratio never exceeds 1.
    """

    def __init__(self, jsa: JointSpectralAmplitude):
        self.grid = jsa.grid
        self.amp = jsa.amplitude
        inten = jsa.intensity
        total = inten.sum()
        ps = inten.sum(axis=1) / total
        pi = inten.sum(axis=0) / total
        self.cdf_s = np.cumsum(ps)
        self.cdf_i = np.cumsum(pi)
        den = np.outer(ps, pi) * total
        ratio = np.divide(inten, den, out=np.zeros_like(inten), where=den > 0)
        self.c0 = float(ratio.max())
        self.bound = 4.0 * self.c0 ** 2 * total ** 2
        self._ps = ps
        self._pi = pi
        self.acceptance_rate = None

    def sample(self, rng, n_events: int) -> np.ndarray:
        out = np.empty((n_events, 4))
        got = 0
        proposed = 0
        accepted = 0
        rate = 0.5
        while got < n_events:
            batch = int(min(4_000_000, max(1024, 1.3 * (n_events - got) / max(rate, 1e-3))))
            a = _cdf_draw(self.cdf_s, rng.random(batch))
            a2 = _cdf_draw(self.cdf_s, rng.random(batch))
            b = _cdf_draw(self.cdf_i, rng.random(batch))
            b2 = _cdf_draw(self.cdf_i, rng.random(batch))
            term = self.amp[a, b] * self.amp[a2, b2] + self.amp[a, b2] * self.amp[a2, b]
            target = term.real ** 2 + term.imag ** 2
            env = self.bound * self._ps[a] * self._ps[a2] * self._pi[b] * self._pi[b2]
            r = target / env
            if np.any(r > 1 + 1e-9):
                raise RuntimeError("fourfold envelope bound violated; bound computation bug")
            accept = rng.random(batch) < r
            proposed += batch
            accepted += int(accept.sum())
            rate = max(accepted / proposed, 1e-4)
            take = min(int(accept.sum()), n_events - got)
            sel = np.nonzero(accept)[0][:take]
            out[got:got + take, 0] = self.grid.signal_axis[a[sel]]
            out[got:got + take, 1] = self.grid.idler_axis[b[sel]]
            out[got:got + take, 2] = self.grid.signal_axis[a2[sel]]
            out[got:got + take, 3] = self.grid.idler_axis[b2[sel]]
            got += take
        self.acceptance_rate = accepted / proposed
        return out


def sample_fourfold_events(jsa: JointSpectralAmplitude, n_events: int, rng_seed: int,
                           return_acceptance: bool = False):
    """Quadruples (w_s, w_i, w_s', w_i') distributed per the coherent
    double-pair probability, via rejection against a separable envelope."""
    sampler = _FourfoldSampler(jsa)
    rng = _stream(rng_seed, _STREAM_FOURFOLD, 0)
    events = sampler.sample(rng, n_events)
    if return_acceptance:
        return events, sampler.acceptance_rate
    return events


def detect(photons: PhotonBatch, chain: DetectorChainConfig,
           rng: np.random.Generator) -> DetectionRecords:
    """Push photons through leak, loss, dispersion + jitter, and 1->n splitting.

    Same-detector hits within one pulse are merged (dead-time model); dark
    counts are appended per arm with wavelengths uniform over the grid support.
    """
    n = photons.omega.size
    arm = photons.arm.copy()
    leak_u = rng.random(n)
    keep_u = rng.random(n)
    jitter = rng.normal(size=n)
    det_u = rng.random(n)

    leaked = (photons.arm == ARM_IDLER) & (leak_u < chain.idler_leak_probability)
    arm[leaked] = ARM_SIGNAL
    eff = np.where(arm == ARM_SIGNAL, chain.efficiency_signal, chain.efficiency_idler)
    kept = keep_u < eff

    centers = np.where(photons.arm == ARM_SIGNAL,
                       photons.signal_center_wavelength, photons.idler_center_wavelength)
    omega0 = 2 * np.pi * 299792.458 / centers
    lam_true = 2 * np.pi * 299792.458 / (omega0 + photons.omega)
    sigma_t = chain.timing_jitter_fwhm / (2 * np.sqrt(2 * np.log(2)))
    lam = lam_true + jitter * sigma_t / (chain.dispersion * 1000.0)
    det = (det_u * chain.n_detectors_per_arm).astype(np.int64)

    pulse = photons.pulse_index[kept]
    arm = arm[kept]
    det = det[kept]
    lam = lam[kept]

    if chain.dark_count_rate_per_pulse > 0:
        n_dark = rng.poisson(chain.dark_count_rate_per_pulse, size=(photons.n_pulses, 2))
        total_dark = int(n_dark.sum())
        if total_dark:
            darm = np.concatenate([
                np.repeat(np.full(photons.n_pulses, ARM_SIGNAL, dtype=np.int64), n_dark[:, 0]),
                np.repeat(np.full(photons.n_pulses, ARM_IDLER, dtype=np.int64), n_dark[:, 1]),
            ])
            dpulse = np.concatenate([
                np.repeat(np.arange(photons.n_pulses, dtype=np.int64), n_dark[:, 0]),
                np.repeat(np.arange(photons.n_pulses, dtype=np.int64), n_dark[:, 1]),
            ])
            ddet = (rng.random(total_dark) * chain.n_detectors_per_arm).astype(np.int64)
            lo_s, hi_s = photons.signal_lambda_range
            lo_i, hi_i = photons.idler_lambda_range
            dlam = np.where(darm == ARM_SIGNAL,
                            lo_s + rng.random(total_dark) * (hi_s - lo_s),
                            lo_i + rng.random(total_dark) * (hi_i - lo_i))
            pulse = np.concatenate([pulse, dpulse])
            arm = np.concatenate([arm, darm])
            det = np.concatenate([det, ddet])
            lam = np.concatenate([lam, dlam])

    # dead time: first hit per (pulse, arm, detector) wins, in input order
    key = (pulse * 2 + arm) * chain.n_detectors_per_arm + det
    order = np.arange(key.size)
    perm = np.lexsort((order, key))
    first = np.ones(key.size, dtype=bool)
    first[1:] = key[perm][1:] != key[perm][:-1]
    keep_idx = np.sort(perm[first])

    pulse, arm, det, lam = pulse[keep_idx], arm[keep_idx], det[keep_idx], lam[keep_idx]
    final = np.lexsort((lam, det, arm, pulse))
    return DetectionRecords(pulse[final], arm[final], det[final], lam[final],
                            photons.n_pulses, chain.n_detectors_per_arm,
                            photons.signal_lambda_range, photons.idler_lambda_range)


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    """Binned coincidence counts in direct or difference wavelength coordinates."""

    scheme: str
    x_edges: np.ndarray
    y_edges: np.ndarray
    values: np.ndarray = field(repr=False)
    n_pulses: int = 0
    n_entries: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("x_edges", "y_edges", "values"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def same_binning(self, other: "CoincidenceHistogram") -> bool:
        return (self.x_edges.shape == other.x_edges.shape
                and self.y_edges.shape == other.y_edges.shape
                and np.allclose(self.x_edges, other.x_edges)
                and np.allclose(self.y_edges, other.y_edges))

    def added(self, other: "CoincidenceHistogram") -> "CoincidenceHistogram":
        if not self.same_binning(other) or self.scheme != other.scheme:
            raise ValueError("cannot merge histograms with different schemes or binning")
        return CoincidenceHistogram(self.scheme, self.x_edges, self.y_edges,
                                    self.values + other.values,
                                    self.n_pulses + other.n_pulses,
                                    self.n_entries + other.n_entries, dict(self.meta))


_PAIR_TEMPLATES: dict = {}


def _ordered_pair_template(m: int):
    if m not in _PAIR_TEMPLATES:
        i1, i2 = np.where(~np.eye(m, dtype=bool))
        _PAIR_TEMPLATES[m] = (i1, i2)
    return _PAIR_TEMPLATES[m]


def _unordered_pair_template(m: int):
    i1, i2 = np.triu_indices(m, k=1)
    return i1, i2


def _groups(pulse: np.ndarray):
    """(unique pulse values, start offsets, counts) of a sorted pulse column."""
    return np.unique(pulse, return_index=True, return_counts=True)


def _within_pulse_ordered_pairs(starts, counts):
    """Index pairs (i, j), i != j, of all ordered within-group combinations."""
    out1, out2 = [], []
    for m in np.unique(counts):
        if m < 2:
            continue
        sel = starts[counts == m]
        members = sel[:, None] + np.arange(m)[None, :]
        t1, t2 = _ordered_pair_template(int(m))
        out1.append(members[:, t1].ravel())
        out2.append(members[:, t2].ravel())
    if not out1:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(out1), np.concatenate(out2)


def _cross_group_pairs(starts_a, counts_a, starts_b, counts_b):
    """All (i from group k of A, j from group k of B) index combinations."""
    if counts_a.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    out1, out2 = [], []
    classes = np.stack([counts_a, counts_b], axis=1)
    for ma, mb in np.unique(classes, axis=0):
        if ma == 0 or mb == 0:
            continue
        sel = (counts_a == ma) & (counts_b == mb)
        mem_a = starts_a[sel][:, None] + np.arange(ma)[None, :]
        mem_b = starts_b[sel][:, None] + np.arange(mb)[None, :]
        t1 = np.repeat(np.arange(ma), mb)
        t2 = np.tile(np.arange(mb), ma)
        out1.append(mem_a[:, t1].ravel())
        out2.append(mem_b[:, t2].ravel())
    if not out1:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(out1), np.concatenate(out2)


def _default_edges(records: DetectionRecords, arm: int, n_bins: int) -> np.ndarray:
    lo, hi = (records.signal_lambda_range if arm == ARM_SIGNAL else records.idler_lambda_range)
    return np.linspace(lo, hi, n_bins + 1)


def wavelength_support(jsa: JointSpectralAmplitude, arm: int,
                       quantile: float = 1.0 - 1e-4) -> tuple:
    """Central wavelength interval holding `quantile` of the arm's marginal."""
    inten = jsa.intensity
    if arm == ARM_SIGNAL:
        lam = jsa.grid.signal_wavelengths()
        w = inten.sum(axis=1)
    else:
        lam = jsa.grid.idler_wavelengths()
        w = inten.sum(axis=0)
    order = np.argsort(lam)
    cum = np.cumsum(w[order])
    cum /= cum[-1]
    tail = 0.5 * (1.0 - quantile)
    lo = lam[order][np.searchsorted(cum, tail)]
    hi = lam[order][min(np.searchsorted(cum, 1.0 - tail), lam.size - 1)]
    return float(lo), float(hi)


def accumulate(records: DetectionRecords, scheme: str, n_bins: int = 64,
               signal_range: tuple | None = None,
               idler_range: tuple | None = None) -> CoincidenceHistogram:
    """Build the coincidence histogram of one scheme from a sorted record stream.

    twofold_jsi: all (signal, idler) wavelength combinations within a pulse.
    signal_signal: ordered pairs of signal detections within a pulse (distinct
        detectors by construction of the dead-time model).
    fourfold_difference: (|d lambda_s|, |d lambda_i|) for pulses with at least
        two detections in each arm.
    cross_pulse_accidentals: signal detections of pulse k paired once with
        those of pulse k+1, requiring distinct detector indices so that the
        same 1->n occupancy factor applies as within a pulse.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not records.is_sorted():
        raise ValueError("records must be sorted by pulse_index")

    lam = records.inferred_wavelength
    sig = records.arm == ARM_SIGNAL
    idl = records.arm == ARM_IDLER
    if signal_range is not None:
        edges_s = np.linspace(signal_range[0], signal_range[1], n_bins + 1)
    else:
        edges_s = _default_edges(records, ARM_SIGNAL, n_bins)
    if idler_range is not None:
        edges_i = np.linspace(idler_range[0], idler_range[1], n_bins + 1)
    else:
        edges_i = _default_edges(records, ARM_IDLER, n_bins)

    if scheme == "twofold_jsi":
        ps, pi = records.pulse_index[sig], records.pulse_index[idl]
        ls, li = lam[sig], lam[idl]
        us, ss, cs = _groups(ps)
        ui, si, ci = _groups(pi)
        common, ia, ib = np.intersect1d(us, ui, return_indices=True)
        i1, i2 = _cross_group_pairs(ss[ia], cs[ia], si[ib], ci[ib])
        x, y = ls[i1], li[i2]
        xe, ye = edges_s, edges_i
    elif scheme == "signal_signal":
        ps = records.pulse_index[sig]
        ls = lam[sig]
        _, ss, cs = _groups(ps)
        i1, i2 = _within_pulse_ordered_pairs(ss, cs)
        x, y = ls[i1], ls[i2]
        xe = ye = edges_s
    elif scheme == "fourfold_difference":
        ps, pi = records.pulse_index[sig], records.pulse_index[idl]
        ls, li = lam[sig], lam[idl]
        us, ss, cs = _groups(ps)
        ui, si, ci = _groups(pi)
        common, ia, ib = np.intersect1d(us, ui, return_indices=True)
        keep = (cs[ia] >= 2) & (ci[ib] >= 2)
        ia, ib = ia[keep], ib[keep]
        xs, ys = [], []
        for k in range(ia.size):
            s0, mcs = ss[ia[k]], cs[ia[k]]
            i0, mci = si[ib[k]], ci[ib[k]]
            t1, t2 = _unordered_pair_template(int(mcs))
            u1, u2 = _unordered_pair_template(int(mci))
            dls = np.abs(ls[s0 + t1] - ls[s0 + t2])
            dli = np.abs(li[i0 + u1] - li[i0 + u2])
            xs.append(np.repeat(dls, dli.size))
            ys.append(np.tile(dli, dls.size))
        x = np.concatenate(xs) if xs else np.empty(0)
        y = np.concatenate(ys) if ys else np.empty(0)
        xe = np.linspace(0.0, edges_s[-1] - edges_s[0], n_bins + 1)
        ye = np.linspace(0.0, edges_i[-1] - edges_i[0], n_bins + 1)
    else:  # cross_pulse_accidentals
        ps = records.pulse_index[sig]
        ls = lam[sig]
        det = records.detector_index[sig]
        us, ss, cs = _groups(ps)
        nxt = np.searchsorted(us, us + 1)
        has_next = (nxt < us.size) & (us[np.minimum(nxt, us.size - 1)] == us + 1)
        ka = np.nonzero(has_next)[0]
        kb = nxt[ka]
        i1, i2 = _cross_group_pairs(ss[ka], cs[ka], ss[kb], cs[kb])
        distinct = det[i1] != det[i2]
        i1, i2 = i1[distinct], i2[distinct]
        x, y = ls[i1], ls[i2]
        xe = ye = edges_s

    values, _, _ = np.histogram2d(x, y, bins=[xe, ye])
    return CoincidenceHistogram(scheme, xe, ye, values, records.n_pulses, float(x.size),
                                {"n_detectors": records.n_detectors})


@dataclass
class SimulationResult:
    histograms: dict
    signal_singles: int
    signal_doubles: int
    idler_singles: int
    idler_doubles: int
    n_pulses: int
    seed: int
    records: DetectionRecords | None = None


def _singles_doubles(records: DetectionRecords, arm: int):
    pulses = records.pulse_index[records.arm == arm]
    if pulses.size == 0:
        return 0, 0
    _, counts = np.unique(pulses, return_counts=True)
    return int(counts.sum()), int((counts * (counts - 1) // 2).sum())


def _simulate_block(jsa, source, chain, sampler4, mode_sampler, mode_p, block_index,
                    block_pulses, coherent_doubles, jsi_cdf):
    rng = _stream(source.rng_seed, _STREAM_BLOCK, block_index)
    first = block_index * block_pulses
    count = min(block_pulses, source.n_pulses - first)
    n_modes = mode_p.size

    if source.mean_pairs_per_pulse > 0:
        counts = rng.geometric(np.maximum(1 - mode_p, 1e-300)[:, None],
                               size=(n_modes, count)) - 1
    else:
        counts = np.zeros((n_modes, count), dtype=np.int64)
    n_per_pulse = counts.sum(axis=0)

    pulses = []
    arms = []
    omegas = []

    if coherent_doubles:
        n_doubles = n_per_pulse // 2
        n_singles = n_per_pulse % 2
        total_doubles = int(n_doubles.sum())
        if total_doubles:
            quads = sampler4.sample(rng, total_doubles)
            dp = np.repeat(np.arange(count, dtype=np.int64), n_doubles)
            pulses.append(np.repeat(dp, 4))
            arms.append(np.tile(np.array([ARM_SIGNAL, ARM_IDLER, ARM_SIGNAL, ARM_IDLER],
                                         dtype=np.int64), total_doubles))
            omegas.append(quads.ravel())
        total_singles = int(n_singles.sum())
        if total_singles:
            cells = _cdf_draw(jsi_cdf, rng.random(total_singles))
            a, b = np.divmod(cells, jsa.grid.n_idler)
            sp = np.arange(count, dtype=np.int64)[n_singles > 0]
            pulses.append(np.repeat(sp, 2))
            arms.append(np.tile(np.array([ARM_SIGNAL, ARM_IDLER], dtype=np.int64),
                                total_singles))
            omegas.append(np.column_stack([jsa.grid.signal_axis[a],
                                           jsa.grid.idler_axis[b]]).ravel())
    else:
        for j in range(n_modes):
            cj = counts[j]
            tot = int(cj.sum())
            if tot == 0:
                continue
            ws, wi = mode_sampler.draw(rng, j, tot)
            mp = np.repeat(np.arange(count, dtype=np.int64), cj)
            pulses.append(np.repeat(mp, 2))
            arms.append(np.tile(np.array([ARM_SIGNAL, ARM_IDLER], dtype=np.int64), tot))
            omegas.append(np.column_stack([ws, wi]).ravel())

    if pulses:
        pulse = np.concatenate(pulses)
        arm = np.concatenate(arms)
        omega = np.concatenate(omegas)
        order = np.argsort(pulse, kind="stable")
        pulse, arm, omega = pulse[order], arm[order], omega[order]
    else:
        pulse = np.empty(0, dtype=np.int64)
        arm = np.empty(0, dtype=np.int64)
        omega = np.empty(0)

    batch = PhotonBatch.from_grid(jsa.grid, pulse, arm, omega, n_pulses=count)
    recs = detect(batch, chain, rng)
    recs.pulse_index = recs.pulse_index + first
    return recs


def simulate_run(jsa: JointSpectralAmplitude, source: SourceConfig,
                 chain: DetectorChainConfig, *, schemes=SCHEMES, n_bins: int = 64,
                 coherent_doubles: bool = True, n_workers: int = 1,
                 block_pulses: int = DEFAULT_BLOCK_PULSES,
                 keep_records: bool = False) -> SimulationResult:
    """Simulate a full run and accumulate the requested coincidence schemes.

    Pulses are processed in fixed blocks with per-block Philox streams, so the
    result is identical for any worker count.  With coherent_doubles, pulses
    emitting one pair draw frequencies from the JSI and pulses emitting two
    draw from the coherent double-pair distribution; pulses with more pairs
    are split into independent doubles plus a single (incoherent background).
    Setting coherent_doubles=False reproduces the classical mode-wise pairing
    of sample_pulse for every pulse.
    """
    decomp = source.decomposition
    mode_p = _mode_geometric_params(decomp.xi, source.mean_pairs_per_pulse)
    mode_sampler = _ModeFrequencySampler(decomp)
    inten = jsa.intensity
    jsi_cdf = np.cumsum(inten.ravel() / inten.sum())
    # histogram ranges track where the detections actually land, not the
    # numerically padded grid; they depend only on the JSA magnitudes
    srange = wavelength_support(jsa, ARM_SIGNAL)
    irange = wavelength_support(jsa, ARM_IDLER)

    n_blocks = max(1, -(-source.n_pulses // block_pulses))

    def run(b):
        return _simulate_block(jsa, source, chain, _FourfoldSampler(jsa), mode_sampler,
                               mode_p, b, block_pulses, coherent_doubles, jsi_cdf)

    if n_workers <= 1:
        block_records = [run(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            block_records = list(pool.map(run, range(n_blocks)))

    hist = {s: None for s in schemes}
    sig_singles = sig_doubles = idl_singles = idl_doubles = 0
    all_records = []
    for recs in block_records:  # merge in block order
        for s in schemes:
            part = accumulate(recs, s, n_bins=n_bins, signal_range=srange,
                              idler_range=irange)
            hist[s] = part if hist[s] is None else hist[s].added(part)
        s1, d1 = _singles_doubles(recs, ARM_SIGNAL)
        s2, d2 = _singles_doubles(recs, ARM_IDLER)
        sig_singles += s1
        sig_doubles += d1
        idl_singles += s2
        idl_doubles += d2
        if keep_records:
            all_records.append(recs)

    for s in schemes:
        h = hist[s]
        hist[s] = CoincidenceHistogram(h.scheme, h.x_edges, h.y_edges, h.values,
                                       source.n_pulses, h.n_entries, h.meta)

    records = None
    if keep_records:
        records = DetectionRecords(
            np.concatenate([r.pulse_index for r in all_records]),
            np.concatenate([r.arm for r in all_records]),
            np.concatenate([r.detector_index for r in all_records]),
            np.concatenate([r.inferred_wavelength for r in all_records]),
            source.n_pulses, chain.n_detectors_per_arm,
            all_records[0].signal_lambda_range, all_records[0].idler_lambda_range)

    return SimulationResult(hist, sig_singles, sig_doubles, idl_singles, idl_doubles,
                            source.n_pulses, source.rng_seed, records)
