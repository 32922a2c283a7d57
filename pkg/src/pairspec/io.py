"""File formats: JSON-header + CSV-body amplitude files, histogram and
estimation exports.  Floats are written with repr (shortest round-trip), so
identical inputs give byte-identical files and reloads are bit-exact.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .coincidence import FourfoldDistribution, Representation
from .detector import ARM_NAMES, CoincidenceHistogram, DetectionRecords
from .jsa import FrequencyGrid, JointSpectralAmplitude
from .schmidt import DensityFunction, SchmidtDecomposition

FORMAT_VERSION = "pairspec-1"


def _fmt(x) -> str:
    return repr(float(x))


def _grid_header(grid: FrequencyGrid) -> dict:
    return {
        "signal_center_wavelength_nm": grid.signal_center_wavelength,
        "idler_center_wavelength_nm": grid.idler_center_wavelength,
        "n_signal": grid.n_signal,
        "n_idler": grid.n_idler,
        "signal_axis_rad_per_ps": [float(v) for v in grid.signal_axis],
        "idler_axis_rad_per_ps": [float(v) for v in grid.idler_axis],
    }


def _grid_from_header(header: dict) -> FrequencyGrid:
    return FrequencyGrid(np.array(header["signal_axis_rad_per_ps"]),
                         np.array(header["idler_axis_rad_per_ps"]),
                         header["signal_center_wavelength_nm"],
                         header["idler_center_wavelength_nm"])


def _write_complex_body(path: Path, matrix: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im"])
        for value in matrix.ravel():  # row-major, signal index outermost
            writer.writerow([_fmt(value.real), _fmt(value.imag)])


def _read_complex_body(path: Path, shape) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["re", "im"]:
            raise ValueError(f"unexpected body header {header!r} in {path}")
        data = np.array([[float(r), float(i)] for r, i in reader])
    if data.shape[0] != shape[0] * shape[1]:
        raise ValueError(f"body length {data.shape[0]} does not match header shape {shape}")
    return (data[:, 0] + 1j * data[:, 1]).reshape(shape)


def save_jsa(jsa: JointSpectralAmplitude, stem) -> tuple:
    """Write <stem>.json (grid metadata) and <stem>.csv (re,im row-major body)."""
    stem = Path(stem)
    header = {"format": FORMAT_VERSION, "kind": "jsa", "gamma": jsa.gamma,
              "units": {"frequency": "rad/ps", "wavelength": "nm"}}
    header.update(_grid_header(jsa.grid))
    jpath, cpath = stem.with_suffix(".json"), stem.with_suffix(".csv")
    jpath.write_text(json.dumps(header, indent=1) + "\n")
    _write_complex_body(cpath, jsa.amplitude)
    return jpath, cpath


def load_jsa(stem) -> JointSpectralAmplitude:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    if header.get("kind") != "jsa":
        raise ValueError(f"{stem} is not a JSA file")
    grid = _grid_from_header(header)
    amp = _read_complex_body(stem.with_suffix(".csv"), (grid.n_signal, grid.n_idler))
    return JointSpectralAmplitude(grid, amp, header.get("gamma", 1.0))


def save_density(density: DensityFunction, stem) -> tuple:
    stem = Path(stem)
    header = {"format": FORMAT_VERSION, "kind": "density",
              "center_wavelength_nm": density.center_wavelength,
              "n": int(density.axis.size),
              "axis_rad_per_ps": [float(v) for v in density.axis]}
    jpath, cpath = stem.with_suffix(".json"), stem.with_suffix(".csv")
    jpath.write_text(json.dumps(header, indent=1) + "\n")
    _write_complex_body(cpath, density.matrix)
    return jpath, cpath


def load_density(stem) -> DensityFunction:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    if header.get("kind") != "density":
        raise ValueError(f"{stem} is not a density file")
    axis = np.array(header["axis_rad_per_ps"])
    matrix = _read_complex_body(stem.with_suffix(".csv"), (axis.size, axis.size))
    return DensityFunction(matrix, axis, header["center_wavelength_nm"])


def save_schmidt_csv(decomp: SchmidtDecomposition, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "xi"])
        for j, xi in enumerate(decomp.xi):
            writer.writerow([j, _fmt(xi)])


def save_histogram(hist: CoincidenceHistogram, stem) -> tuple:
    """Write <stem>.csv (x_center,y_center,value rows) and <stem>.json metadata."""
    stem = Path(stem)
    xc = 0.5 * (hist.x_edges[:-1] + hist.x_edges[1:])
    yc = 0.5 * (hist.y_edges[:-1] + hist.y_edges[1:])
    cpath, jpath = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(cpath, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_center", "y_center", "value"])
        for i, x in enumerate(xc):
            for j, y in enumerate(yc):
                writer.writerow([_fmt(x), _fmt(y), _fmt(hist.values[i, j])])
    meta = {"format": FORMAT_VERSION, "kind": "histogram", "scheme": hist.scheme,
            "n_pulses": hist.n_pulses, "n_entries": hist.n_entries,
            "x_edges": [float(v) for v in hist.x_edges],
            "y_edges": [float(v) for v in hist.y_edges], "meta": _jsonable(hist.meta)}
    jpath.write_text(json.dumps(meta, indent=1) + "\n")
    return cpath, jpath


def save_fourfold(dist: FourfoldDistribution, stem, extra_meta: dict | None = None) -> tuple:
    stem = Path(stem)
    rep = Representation(dist.representation)
    if rep is Representation.FULL_TENSOR:
        raise ValueError("full-tensor distributions are not exported; project first")
    cpath, jpath = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(cpath, "w", newline="") as fh:
        writer = csv.writer(fh)
        if rep is Representation.DIFFERENCE:
            writer.writerow(["delta_signal", "delta_idler", "value"])
            xc, yc = dist.centers(0), dist.centers(1)
            for i, x in enumerate(xc):
                for j, y in enumerate(yc):
                    writer.writerow([_fmt(x), _fmt(y), _fmt(dist.values[i, j])])
        else:
            writer.writerow(["product", "value"])
            for x, v in zip(dist.centers(0), dist.values):
                writer.writerow([_fmt(x), _fmt(v)])
    meta = {"format": FORMAT_VERSION, "kind": "fourfold", "representation": rep.value,
            "axis_unit": dist.axis_unit, "normalized": dist.normalized,
            "total": dist.total,
            "bin_edges": [[float(v) for v in e] for e in dist.bin_edges],
            "meta": _jsonable(dist.meta)}
    meta.update(_jsonable(extra_meta or {}))
    jpath.write_text(json.dumps(meta, indent=1) + "\n")
    return cpath, jpath


def save_records_csv(records: DetectionRecords, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pulse", "arm", "detector", "wavelength_nm"])
        for k in range(len(records)):
            writer.writerow([int(records.pulse_index[k]), ARM_NAMES[records.arm[k]],
                             int(records.detector_index[k]),
                             _fmt(records.inferred_wavelength[k])])


def save_events_csv(events: np.ndarray, path, meta: dict | None = None):
    """Quadruple events as CSV; optional sidecar <path>.json metadata."""
    events = np.asarray(events, dtype=float).reshape(-1, 4)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega_s", "omega_i", "omega_s2", "omega_i2"])
        for row in events:
            writer.writerow([_fmt(v) for v in row])
    if meta is not None:
        Path(str(path) + ".json").write_text(json.dumps(_jsonable(meta), indent=1) + "\n")


def load_events_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["omega_s", "omega_i", "omega_s2", "omega_i2"]:
            raise ValueError(f"unexpected events header {header!r}")
        rows = [[float(v) for v in row] for row in reader]
    return np.array(rows).reshape(-1, 4)


def save_estimation_json(results, path):
    """One EstimationResult or a {label: result} mapping as JSON."""
    from .analysis import EstimationResult

    def encode(res: EstimationResult) -> dict:
        return {"value": res.value, "std_error": res.std_error, "method": res.method,
                "n_events_used": res.n_events_used,
                "diagnostics": _jsonable(res.diagnostics)}

    if isinstance(results, dict):
        payload = {k: encode(v) for k, v in results.items()}
    else:
        payload = encode(results)
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def save_scan_csv(rows, path):
    """Purity-scan rows (chirp_ps_per_nm, method, value, std_error) as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chirp_ps_per_nm", "method", "value", "std_error"])
        for chirp, method, value, std in rows:
            writer.writerow([_fmt(chirp), method, _fmt(value), _fmt(std)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)
