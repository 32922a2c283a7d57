"""Run configuration: a single JSON-compatible document, schema-validated
with unknown keys rejected, from which all simulation objects are built."""
from __future__ import annotations

import copy
import json

import numpy as np

from . import jsa as jsa_mod
from .detector import DetectorChainConfig, SourceConfig
from .jsa import (FrequencyGrid, PhaseMatchKind, PhaseMatchModel, PumpSpectrum,
                  build_chirped_factorable_jsa, build_jsa, chirp_from_gdd,
                  factorable_marginal_sigmas, factorable_pump_sigma, make_grid)
from .schmidt import schmidt_decompose


class ConfigError(ValueError):
    """Invalid configuration document."""


DEFAULTS = {
    "source": {
        "pump_center_nm": 777.0,
        "pump_bandwidth_nm": 2.0,  # intensity FWHM of the pump spectrum
        "chirp_ps_per_nm": 0.0,
        "residual_chirp_ps_per_nm": 0.0,
        "beta_ps2": None,  # direct beta; overrides the chirp fields when set
        "phase_matching": "gaussian",
        "pm_sigma_rad_per_nm": None,  # None: factorable match to the pump width
        "group_index_pump": 1.80,
        "group_index_signal": 1.88,
        "group_index_idler": 1.72,
        "sigma_s_rad_per_ps": None,  # set both to build the bilinear-phase form
        "sigma_i_rad_per_ps": None,
        "mean_pairs_per_pulse": 0.05,
    },
    "grid": {
        "signal_center_nm": 1554.0,
        "idler_center_nm": 1546.0,
        "span_rad_per_ps": None,  # None: 12.5 x the larger marginal width
        "n_points": 128,
    },
    "detector": {
        "dispersion_ns_per_nm": 2.3,
        "timing_jitter_fwhm_ps": 150.0,
        "efficiency_signal": 0.5,
        "efficiency_idler": 0.5,
        "n_detectors_per_arm": 4,
        "idler_leak_probability": 0.0,
        "dark_count_rate_per_pulse": 0.0,
    },
    "run": {
        "n_pulses": 200_000,
        "seed": None,  # None: auto-generated and recorded in output metadata
        "threads": 1,
        "coherent_doubles": True,
    },
    "fourfold": {
        "chirp_scan_ps_per_nm": [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        "n_bins": 64,
        "product_bins": 200,
        "axis_unit": "frequency",
        "n_mc_events": 0,
    },
    "scan": {
        "chirps_ps_per_nm": [-5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
        "histogram_bins": 64,
    },
    "output": {
        "directory": "out",
    },
}

_ALLOW_NONE = {
    ("source", "beta_ps2"), ("source", "pm_sigma_rad_per_nm"),
    ("source", "sigma_s_rad_per_ps"), ("source", "sigma_i_rad_per_ps"),
    ("grid", "span_rad_per_ps"), ("run", "seed"),
}


def _check_types(section: str, key: str, value, default):
    if value is None:
        if (section, key) in _ALLOW_NONE:
            return
        raise ConfigError(f"config key '{section}.{key}' must not be null")
    ref = default
    if ref is None:
        if not isinstance(value, (int, float, str, bool, list)):
            raise ConfigError(f"config key '{section}.{key}' has unsupported type")
        return
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key '{section}.{key}' must be a boolean")
    elif isinstance(ref, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key '{section}.{key}' must be a number")
    elif isinstance(ref, str):
        if not isinstance(value, str):
            raise ConfigError(f"config key '{section}.{key}' must be a string")
    elif isinstance(ref, list):
        if not isinstance(value, list):
            raise ConfigError(f"config key '{section}.{key}' must be a list")


class RunConfig:
    """Validated configuration with builders for every simulation object."""

    def __init__(self, document: dict | None = None):
        doc = copy.deepcopy(DEFAULTS)
        document = document or {}
        if not isinstance(document, dict):
            raise ConfigError("config document must be a JSON object")
        for section, content in document.items():
            if section not in doc:
                raise ConfigError(f"unknown config section '{section}'")
            if not isinstance(content, dict):
                raise ConfigError(f"config section '{section}' must be an object")
            for key, value in content.items():
                if key not in doc[section]:
                    raise ConfigError(f"unknown config key '{section}.{key}'")
                _check_types(section, key, value, DEFAULTS[section][key])
                doc[section][key] = copy.deepcopy(value)
        self.doc = doc
        self._validate_values()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                document = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        return cls(document)

    def _validate_values(self):
        src = self.doc["source"]
        if src["pump_center_nm"] <= 0 or src["pump_bandwidth_nm"] <= 0:
            raise ConfigError("source.pump_center_nm and pump_bandwidth_nm must be positive")
        if src["phase_matching"] not in ("gaussian", "sinc"):
            raise ConfigError("source.phase_matching must be 'gaussian' or 'sinc'")
        if src["mean_pairs_per_pulse"] < 0:
            raise ConfigError("source.mean_pairs_per_pulse must be non-negative")
        if (src["sigma_s_rad_per_ps"] is None) != (src["sigma_i_rad_per_ps"] is None):
            raise ConfigError("set both or neither of source.sigma_s/sigma_i_rad_per_ps")
        g = self.doc["grid"]
        if g["n_points"] < 2:
            raise ConfigError("grid.n_points must be at least 2")
        if g["span_rad_per_ps"] is not None and g["span_rad_per_ps"] <= 0:
            raise ConfigError("grid.span_rad_per_ps must be positive")
        r = self.doc["run"]
        if r["n_pulses"] < 0:
            raise ConfigError("run.n_pulses must be non-negative")
        if r["threads"] < 1:
            raise ConfigError("run.threads must be at least 1")
        f = self.doc["fourfold"]
        if f["axis_unit"] not in ("frequency", "wavelength"):
            raise ConfigError("fourfold.axis_unit must be 'frequency' or 'wavelength'")
        try:
            DetectorChainConfig(**self._chain_kwargs())
        except ValueError as exc:
            raise ConfigError(f"detector: {exc}") from exc

    def resolved(self, seed: int | None = None) -> dict:
        doc = copy.deepcopy(self.doc)
        if seed is not None:
            doc["run"]["seed"] = int(seed)
        return doc

    # builders -----------------------------------------------------------

    def pump_sigma_p(self) -> float:
        """Pump amplitude width (rad/ps) from the intensity-FWHM bandwidth in nm."""
        src = self.doc["source"]
        dw_per_nm = 2 * np.pi * jsa_mod.C_NM_PER_PS / src["pump_center_nm"] ** 2
        fwhm_w = src["pump_bandwidth_nm"] * dw_per_nm
        return fwhm_w / (2 * np.sqrt(np.log(2)))

    def phase_match_model(self) -> PhaseMatchModel:
        src = self.doc["source"]
        sigma = src["pm_sigma_rad_per_nm"]
        if sigma is None:
            probe = PhaseMatchModel(PhaseMatchKind(src["phase_matching"]), 1.0,
                                    src["group_index_pump"], src["group_index_signal"],
                                    src["group_index_idler"])
            # width that makes the build factorable for this pump
            sigma = self.pump_sigma_p() / factorable_pump_sigma(probe)
        return PhaseMatchModel(PhaseMatchKind(src["phase_matching"]), float(sigma),
                               src["group_index_pump"], src["group_index_signal"],
                               src["group_index_idler"])

    def marginal_sigmas(self) -> tuple:
        src = self.doc["source"]
        if src["sigma_s_rad_per_ps"] is not None:
            return float(src["sigma_s_rad_per_ps"]), float(src["sigma_i_rad_per_ps"])
        pump = PumpSpectrum(self.pump_sigma_p(), 0.0, src["pump_center_nm"])
        return factorable_marginal_sigmas(pump, self.phase_match_model())

    def build_grid(self) -> FrequencyGrid:
        g = self.doc["grid"]
        span = g["span_rad_per_ps"]
        if span is None:
            span = 12.5 * max(self.marginal_sigmas())
        return make_grid(g["signal_center_nm"], g["idler_center_nm"], float(span),
                         int(g["n_points"]))

    def beta(self, chirp_ps_per_nm: float | None = None) -> float:
        """Effective beta: explicit beta_ps2, or chirp (+ residual) converted."""
        src = self.doc["source"]
        if chirp_ps_per_nm is None:
            if src["beta_ps2"] is not None:
                return float(src["beta_ps2"])
            chirp_ps_per_nm = src["chirp_ps_per_nm"]
        total = chirp_ps_per_nm + src["residual_chirp_ps_per_nm"]
        return chirp_from_gdd(total, src["pump_center_nm"])

    def build_jsa(self, chirp_ps_per_nm: float | None = None, grid: FrequencyGrid | None = None):
        src = self.doc["source"]
        grid = grid or self.build_grid()
        beta = self.beta(chirp_ps_per_nm)
        if src["sigma_s_rad_per_ps"] is not None:
            sig_s, sig_i = self.marginal_sigmas()
            return build_chirped_factorable_jsa(sig_s, sig_i, beta, grid)
        pump = PumpSpectrum(self.pump_sigma_p(), beta, src["pump_center_nm"])
        return build_jsa(pump, self.phase_match_model(), grid)

    def _chain_kwargs(self) -> dict:
        d = self.doc["detector"]
        return dict(dispersion=d["dispersion_ns_per_nm"],
                    timing_jitter_fwhm=d["timing_jitter_fwhm_ps"],
                    efficiency_signal=d["efficiency_signal"],
                    efficiency_idler=d["efficiency_idler"],
                    n_detectors_per_arm=int(d["n_detectors_per_arm"]),
                    idler_leak_probability=d["idler_leak_probability"],
                    dark_count_rate_per_pulse=d["dark_count_rate_per_pulse"])

    def build_chain(self) -> DetectorChainConfig:
        return DetectorChainConfig(**self._chain_kwargs())

    def build_source(self, jsa, seed: int) -> SourceConfig:
        return SourceConfig(self.doc["source"]["mean_pairs_per_pulse"],
                            schmidt_decompose(jsa), int(self.doc["run"]["n_pulses"]),
                            int(seed))
