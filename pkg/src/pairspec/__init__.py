"""pairspec: spectral-phase diagnostics for photon-pair sources.

Builds joint spectral amplitudes with controllable pump chirp, computes
two- and four-photon coincidence probabilities, simulates frequency-resolved
detection, and estimates phase-correlation strength and single-photon purity.
"""

from .jsa import (C_NM_PER_PS, FrequencyGrid, GridError, JointSpectralAmplitude,
                  PhaseMatchKind, PhaseMatchModel, PumpSpectrum,
                  build_chirped_factorable_jsa, build_jsa, chirp_from_gdd,
                  detuning_to_wavelength, factorable_marginal_sigmas,
                  factorable_pump_sigma, gaussian_schmidt_purity, make_grid,
                  wavelength_to_detuning)
from .schmidt import (DensityFunction, SchmidtDecomposition, marginal_spectrum,
                      purity, reduced_density, schmidt_decompose)
from .coincidence import (FourfoldDistribution, Representation, fringe_closed_form,
                          four_photon_probability, histogram_fourfold_events,
                          pair_probability, project_fourfold, signal_signal_map,
                          signal_signal_probability, unheralded_g2)
from .detector import (CoincidenceHistogram, DetectionRecord, DetectionRecords,
                       DetectorChainConfig, PhotonBatch, SourceConfig, accumulate,
                       detect, photon_batch_from_pairs, photon_batch_from_quadruples,
                       sample_fourfold_events, sample_pulse, simulate_run)
from .analysis import (EstimationError, EstimationResult, analytic_signal_histograms,
                       extract_interference_term, fit_beta_mle, fringe_period_fit,
                       g2_from_counts, purity_from_count_ratio, purity_from_width_ratio)
from .config import ConfigError, RunConfig
from .pipeline import (fit_events, fourfold_scan, purity_scan, run_purity_point,
                       zero_chirp_magnitudes)

__version__ = "0.1.0"
