"""End-to-end recipes shared by the CLI and the acceptance tests: purity
scans across pump chirp, fringe-map scans, and the fit stage."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import (EstimationResult, extract_interference_term, fit_beta_mle,
                       fringe_period_fit, g2_from_counts, purity_from_count_ratio,
                       purity_from_width_ratio)
from .coincidence import (Representation, histogram_fourfold_events, project_fourfold)
from .config import RunConfig
from .detector import (DetectorChainConfig, SourceConfig, sample_fourfold_events,
                       simulate_run)
from .jsa import JointSpectralAmplitude
from .schmidt import purity, schmidt_decompose

SCAN_SEED_STRIDE = 1_000_003  # per-point seed offset in scans


@dataclass
class PurityPoint:
    chirp_ps_per_nm: float
    beta: float
    oracle: float
    count_ratio: EstimationResult
    width_ratio: EstimationResult
    g2: EstimationResult

    def rows(self):
        return [
            (self.chirp_ps_per_nm, "Oracle", self.oracle, 0.0),
            (self.chirp_ps_per_nm, "CountRatio", self.count_ratio.value,
             self.count_ratio.std_error),
            (self.chirp_ps_per_nm, "WidthRatio", self.width_ratio.value,
             self.width_ratio.std_error),
            (self.chirp_ps_per_nm, "G2", self.g2.value - 1.0, self.g2.std_error),
        ]


def purity_estimates(sim, n_bins_ignored=None):
    """All three purity estimators from one simulation result."""
    ss = sim.histograms["signal_signal"]
    acc = sim.histograms["cross_pulse_accidentals"]
    count_ratio = purity_from_count_ratio(ss, acc)
    term = extract_interference_term(ss, acc)
    centers = 0.5 * (ss.x_edges[:-1] + ss.x_edges[1:])
    width_ratio = purity_from_width_ratio(term, centers)
    g2 = g2_from_counts(sim.signal_singles, sim.signal_doubles, sim.n_pulses,
                        ss.meta.get("n_detectors", 4))
    return count_ratio, width_ratio, g2


def run_purity_point(config: RunConfig, chirp_ps_per_nm: float, seed: int, grid=None,
                     n_workers: int = 1) -> PurityPoint:
    jsa = config.build_jsa(chirp_ps_per_nm, grid=grid)
    decomp = schmidt_decompose(jsa)
    source = SourceConfig(config.doc["source"]["mean_pairs_per_pulse"], decomp,
                          int(config.doc["run"]["n_pulses"]), seed)
    chain = config.build_chain()
    sim = simulate_run(jsa, source, chain,
                       schemes=("signal_signal", "cross_pulse_accidentals"),
                       n_bins=int(config.doc["scan"]["histogram_bins"]),
                       coherent_doubles=bool(config.doc["run"]["coherent_doubles"]),
                       n_workers=n_workers)
    count_ratio, width_ratio, g2 = purity_estimates(sim)
    return PurityPoint(chirp_ps_per_nm, config.beta(chirp_ps_per_nm), purity(decomp),
                       count_ratio, width_ratio, g2)


def purity_scan(config: RunConfig, seed: int, n_workers: int = 1):
    """One purity point per chirp in scan.chirps_ps_per_nm; returns
    (rows for CSV export, list of PurityPoint)."""
    grid = config.build_grid()
    points = []
    rows = []
    for k, chirp in enumerate(config.doc["scan"]["chirps_ps_per_nm"]):
        point = run_purity_point(config, float(chirp), seed + SCAN_SEED_STRIDE * k,
                                 grid=grid, n_workers=n_workers)
        points.append(point)
        rows.extend(point.rows())
    return rows, points


@dataclass
class FourfoldMaps:
    chirp_ps_per_nm: float
    beta: float
    difference: object
    product: object
    events: np.ndarray | None = None
    empirical_difference: object | None = None


def fourfold_scan(config: RunConfig, seed: int, n_workers: int = 1):
    """Analytic difference/product fringe maps per chirp, plus optional
    sampled events and their empirical difference histogram."""
    grid = config.build_grid()
    f = config.doc["fourfold"]
    out = []
    for k, chirp in enumerate(f["chirp_scan_ps_per_nm"]):
        jsa = config.build_jsa(float(chirp), grid=grid)
        diff = project_fourfold(jsa, Representation.DIFFERENCE,
                                axis_unit=f["axis_unit"], n_bins=int(f["n_bins"]),
                                n_workers=n_workers)
        prod = project_fourfold(jsa, Representation.PRODUCT,
                                axis_unit="frequency", product_bins=int(f["product_bins"]),
                                n_workers=n_workers)
        maps = FourfoldMaps(float(chirp), config.beta(float(chirp)), diff, prod)
        if f["n_mc_events"] > 0:
            events = sample_fourfold_events(jsa, int(f["n_mc_events"]),
                                            seed + SCAN_SEED_STRIDE * k)
            maps.events = events
            maps.empirical_difference = histogram_fourfold_events(events, diff, grid)
        out.append(maps)
    return out


def zero_chirp_magnitudes(jsa: JointSpectralAmplitude) -> JointSpectralAmplitude:
    """The same JSA with all phase removed (the beta = 0 magnitude model)."""
    return JointSpectralAmplitude(jsa.grid, np.abs(jsa.amplitude).astype(complex),
                                  jsa.gamma)


def fit_events(events: np.ndarray, jsa: JointSpectralAmplitude,
               product_bins: int = 200) -> dict:
    """Fringe-period and MLE estimates of |beta| from sampled quadruples."""
    envelope_jsa = zero_chirp_magnitudes(jsa)
    envelope = project_fourfold(envelope_jsa, Representation.PRODUCT,
                                axis_unit="frequency", product_bins=product_bins)
    counts = histogram_fourfold_events(events, envelope, jsa.grid)
    fringe = fringe_period_fit(counts, envelope)
    mle = fit_beta_mle(events, jsa)
    return {"fringe_period": fringe, "mle": mle}
