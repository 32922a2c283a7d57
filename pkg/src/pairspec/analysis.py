"""Estimators recovering source physics from coincidence data: the
accidental-subtracted interference term, purity via count ratio, width ratio,
and unheralded g2, fringe-period extraction, and maximum-likelihood recovery
of the bilinear phase strength beta.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit, minimize_scalar

from .coincidence import FourfoldDistribution, Representation, signal_signal_map
from .detector import CoincidenceHistogram
from .jsa import JointSpectralAmplitude
from .schmidt import marginal_spectrum


def analytic_signal_histograms(jsa: JointSpectralAmplitude):
    """Noise-free two-signal and accidental 'histograms' on the grid axes.

    Returns (signal_signal, accidentals) CoincidenceHistograms whose values are
    the exact coincidence and product-of-marginals maps, for running the
    estimators without Monte Carlo noise.  Bin centers are the signal detuning
    axis (rad/ps).
    """
    axis = jsa.grid.signal_axis
    step = jsa.grid.step_signal
    edges = np.concatenate([axis - 0.5 * step, [axis[-1] + 0.5 * step]])
    ss = signal_signal_map(jsa)
    ms = marginal_spectrum(jsa, "signal")
    acc = 2.0 * jsa.gamma * np.outer(ms, ms)
    h_ss = CoincidenceHistogram("signal_signal", edges, edges, ss, 0, float(ss.sum()),
                                {"analytic": True, "axis_unit": "frequency"})
    h_acc = CoincidenceHistogram("cross_pulse_accidentals", edges, edges, acc, 0,
                                 float(acc.sum()), {"analytic": True, "axis_unit": "frequency"})
    return h_ss, h_acc


class EstimationError(RuntimeError):
    """Estimation failed; diagnostics may be attached as .payload."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}


@dataclass(frozen=True)
class EstimationResult:
    value: float
    std_error: float
    method: str  # CountRatio | WidthRatio | G2 | FringePeriod | MLE
    n_events_used: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise EstimationError(f"{self.method} produced non-finite value")
        if self.std_error < 0:
            raise EstimationError("std_error must be non-negative")


def extract_interference_term(signal_signal: CoincidenceHistogram,
                              accidentals: CoincidenceHistogram,
                              scale: float = 1.0) -> np.ndarray:
    """Accidental-subtracted two-signal histogram, an estimate of the
    |rho(w, w')|^2 interference term.  Negative bins are statistical noise and
    are kept as-is."""
    if not signal_signal.same_binning(accidentals):
        raise ValueError("signal_signal and accidentals histograms must share binning")
    return signal_signal.values - scale * accidentals.values


def purity_from_count_ratio(signal_signal: CoincidenceHistogram,
                            accidentals: CoincidenceHistogram,
                            scale: float = 1.0) -> EstimationResult:
    """Total interference counts over total accidental counts.

    With accidentals built from adjacent pulses under the same distinct-
    detector rule, the ratio estimates the single-photon purity directly.
    """
    if not signal_signal.same_binning(accidentals):
        raise ValueError("histograms must share binning")
    s = float(signal_signal.values.sum())
    a = float(accidentals.values.sum())
    if a <= 0:
        raise EstimationError("no accidental counts; cannot form the count ratio")
    value = s / (scale * a) - 1.0
    var = s / (scale * a) ** 2 + s ** 2 / (scale ** 2 * a ** 3)
    return EstimationResult(value, float(np.sqrt(var)), "CountRatio", int(round(s + a)),
                            {"signal_total": s, "accidental_total": a, "scale": scale})


def _rms_width_and_error(term, coords, total, var_bins):
    m1 = float(np.sum(term * coords) / total)
    centered = coords - m1
    v = float(np.sum(term * centered ** 2) / total)
    if v <= 0:
        raise EstimationError("non-positive variance; data too sparse or noisy")
    dv = (centered ** 2 - v) / total
    var_v = float(np.sum(var_bins * dv ** 2))
    w = np.sqrt(v)
    return w, np.sqrt(var_v) / (2 * w)


def _fwhm_of_profile(coords, weights):
    order = np.argsort(coords)
    x, w = coords[order], weights[order]
    # aggregate onto a uniform profile before reading off half-max crossings
    nb = max(16, int(np.sqrt(x.size)))
    edges = np.linspace(x.min(), x.max(), nb + 1)
    prof, _ = np.histogram(x, bins=edges, weights=w)
    centers = 0.5 * (edges[:-1] + edges[1:])
    peak = prof.max()
    if peak <= 0:
        raise EstimationError("empty profile")
    above = prof >= 0.5 * peak
    idx = np.nonzero(above)[0]
    lo, hi = centers[idx[0]], centers[idx[-1]]
    return float(hi - lo)


def purity_from_width_ratio(interference_term: np.ndarray, x_centers: np.ndarray,
                            y_centers: np.ndarray | None = None,
                            measure: str = "rms") -> EstimationResult:
    """Anti-diagonal over diagonal width of the interference peak.

    Widths are taken along the rotated coordinates u = (w + w')/sqrt(2) and
    v = (w - w')/sqrt(2); the ratio w_v / w_u equals the purity for the
    Gaussian model family.  measure: "rms" (default) or "fwhm".
    """
    term = np.asarray(interference_term, dtype=float)
    x = np.asarray(x_centers, dtype=float)
    y = x if y_centers is None else np.asarray(y_centers, dtype=float)
    if term.shape != (x.size, y.size):
        raise ValueError("interference term shape does not match bin centers")
    total = float(term.sum())
    if total <= 0:
        raise EstimationError("interference term has non-positive total")

    gx, gy = np.meshgrid(x, y, indexing="ij")
    u = (gx + gy) / np.sqrt(2)
    v = (gx - gy) / np.sqrt(2)
    var_bins = np.abs(term)  # Poisson proxy per bin

    if measure == "rms":
        w_d, se_d = _rms_width_and_error(term, u, total, var_bins)
        w_a, se_a = _rms_width_and_error(term, v, total, var_bins)
    elif measure == "fwhm":
        w_d = _fwhm_of_profile(u.ravel(), term.ravel())
        w_a = _fwhm_of_profile(v.ravel(), term.ravel())
        # reuse the rms-propagated relative errors as an approximation
        _, se_u = _rms_width_and_error(term, u, total, var_bins)
        _, se_v = _rms_width_and_error(term, v, total, var_bins)
        se_d, se_a = se_u, se_v
    else:
        raise ValueError("measure must be 'rms' or 'fwhm'")

    value = w_a / w_d
    se = value * np.sqrt((se_a / w_a) ** 2 + (se_d / w_d) ** 2)
    n_used = int(round(np.abs(term).sum()))
    return EstimationResult(float(value), float(se), "WidthRatio", n_used,
                            {"width_diagonal": w_d, "width_antidiagonal": w_a,
                             "measure": measure})


def g2_from_counts(signal_singles: int, signal_doubles: int, n_pulses: int,
                   n_detectors: int) -> EstimationResult:
    """Unheralded g2(0) from per-run singles and distinct-detector doubles.

    Corrects for the probability (n-1)/n that two photons split onto distinct
    detectors of the 1->n fan-out.  The purity estimate is value - 1.
    """
    if signal_singles <= 0:
        raise EstimationError("no singles; cannot estimate g2")
    if n_pulses <= 0 or n_detectors < 2:
        raise ValueError("need n_pulses > 0 and at least 2 detectors")
    occupancy = n_detectors / (n_detectors - 1.0)
    g2 = 2.0 * signal_doubles * occupancy * n_pulses / signal_singles ** 2
    rel_var = (1.0 / signal_doubles if signal_doubles > 0 else 0.0) + 4.0 / signal_singles
    se = g2 * np.sqrt(rel_var)
    return EstimationResult(float(g2), float(se), "G2",
                            int(signal_singles + signal_doubles),
                            {"purity": float(g2 - 1.0), "n_detectors": n_detectors})


def _check_product_binning(hist: FourfoldDistribution, envelope: FourfoldDistribution):
    if Representation(hist.representation) is not Representation.PRODUCT:
        raise ValueError("fringe fit needs a PRODUCT projection")
    if Representation(envelope.representation) is not Representation.PRODUCT:
        raise ValueError("envelope must be a PRODUCT projection")
    if (len(hist.bin_edges[0]) != len(envelope.bin_edges[0])
            or not np.allclose(hist.bin_edges[0], envelope.bin_edges[0])):
        raise ValueError("histogram and envelope binning differ")


def fringe_period_fit(product_projection: FourfoldDistribution,
                      envelope: FourfoldDistribution) -> EstimationResult:
    """Weighted least-squares fit of A cos^2(beta u / 2) + C to the
    envelope-normalized product-coordinate histogram.  The envelope is the
    zero-chirp projection with identical binning; u must be the angular
    frequency product, so the fitted period gives |beta| directly."""
    _check_product_binning(product_projection, envelope)
    if product_projection.axis_unit != "frequency":
        raise ValueError("fringe fit needs frequency-product coordinates")
    u = product_projection.centers(0)
    h = product_projection.values.astype(float)
    e = envelope.values.astype(float)
    scale = h.sum() / e.sum()
    # contiguous run of well-supported envelope bins; the tail (including the
    # clipped overflow bin) is dropped so the ratio stays uniformly sampled
    above = e > 1e-4 * e.max()
    n_run = int(np.argmin(above)) if not above.all() else above.size
    if n_run < 8:
        raise EstimationError("too few usable bins for a fringe fit")
    valid = np.zeros(e.size, dtype=bool)
    valid[:n_run] = True
    u_v = u[valid]
    y = h[valid] / (e[valid] * scale)

    counts_based = not product_projection.normalized
    if counts_based:
        sigma = np.sqrt(np.maximum(h[valid], 1.0)) / (e[valid] * scale)
    else:
        sigma = np.full(u_v.size, max(1e-3, np.std(y) / 10))

    # periodogram initial guesses: cos^2(beta u/2) oscillates at beta/(2 pi) per u
    du = u[1] - u[0]
    yd = y - y.mean()
    spec = np.abs(np.fft.rfft(yd * np.hanning(y.size)))
    if spec.size < 3 or not np.any(spec[1:] > 0):
        raise EstimationError("no fringe visible; increase chirp or grid span")
    peaks = 1 + np.argsort(spec[1:])[::-1][:3]
    beta_guesses = [2 * np.pi * int(k) / (y.size * du) for k in peaks]

    def model(uu, a, beta, c):
        # cos^2 averaged over a bin of width du: (1 + sinc(beta du/2) cos(beta u))/2
        damp = np.sinc(beta * du / (2 * np.pi))
        return 0.5 * a * (1.0 + damp * np.cos(beta * uu)) + c

    u_max = float(u_v.max())
    beta_hi = 20 * np.pi / du
    a_hi = max(10.0, 2.0 * float(np.max(y)))
    lo = np.array([0.0, 1e-9, -1.0])
    hi = np.array([a_hi, beta_hi, 2.0])
    best = None
    starts = [f * b for b in beta_guesses for f in (1.0, 0.5, 2.0)]
    for b0 in starts:
        p0 = np.clip([max(y) - min(y), b0, min(y)], lo + 1e-12, hi - 1e-12)
        try:
            popt, pcov = curve_fit(model, u_v, y, p0=p0,
                                   sigma=sigma, absolute_sigma=counts_based,
                                   bounds=(lo, hi), maxfev=20000)
        except RuntimeError:
            continue
        resid = float(np.sum(((model(u_v, *popt) - y) / sigma) ** 2))
        if best is None or resid < best[2]:
            best = (popt, pcov, resid)
    if best is None:
        raise EstimationError("fringe fit did not converge")
    popt, pcov, resid = best
    amp, beta_hat, offset = popt
    # inflate errors when the residuals are overdispersed (binning systematics)
    dof = max(1, u_v.size - 3)
    se = float(np.sqrt(pcov[1, 1] * max(1.0, resid / dof)))

    if beta_hat * u_max < 2 * np.pi:
        raise EstimationError(
            "less than one full fringe in support; increase chirp or grid span")
    if amp < 3 * np.sqrt(max(pcov[0, 0], 0.0)):
        raise EstimationError("fringe amplitude not significant; no modulation found")

    n_used = int(round(h[valid].sum())) if counts_based else int(valid.sum())
    return EstimationResult(float(beta_hat), se, "FringePeriod", n_used,
                            {"amplitude": float(amp), "offset": float(offset),
                             "chi2": resid, "n_bins": int(valid.sum())})


def _difference_autocorr(prob: np.ndarray, step: float):
    """Autocorrelation of a discrete probability vector over index lags."""
    ac = np.correlate(prob, prob, mode="full")
    lags = np.arange(-(prob.size - 1), prob.size) * step
    return ac, lags


def fit_beta_mle(fourfold_events: np.ndarray, jsa_magnitudes: JointSpectralAmplitude,
                 beta_max: float | None = None) -> EstimationResult:
    """Maximum-likelihood |beta| from four-photon frequency quadruples.

    The model holds the JSA magnitudes fixed (only the marginals enter) and
    fits the bilinear-phase fringe factor; the sign of beta is unidentifiable,
    so the search runs over beta >= 0.  The normalization over the full
    outcome space reduces to marginal autocorrelations, making each
    likelihood evaluation cheap.
    """
    events = np.asarray(fourfold_events, dtype=float).reshape(-1, 4)
    if events.shape[0] < 100:
        raise EstimationError("need at least 100 quadruples for the MLE")
    grid = jsa_magnitudes.grid
    a = grid.index_signal(events[:, 0])
    b = grid.index_idler(events[:, 1])
    a2 = grid.index_signal(events[:, 2])
    b2 = grid.index_idler(events[:, 3])

    inten = jsa_magnitudes.intensity
    p_s = inten.sum(axis=1)
    p_s = p_s / p_s.sum()
    p_i = inten.sum(axis=0)
    p_i = p_i / p_i.sum()

    x = (grid.signal_axis[a] - grid.signal_axis[a2]) * (grid.idler_axis[b] - grid.idler_axis[b2])

    ac_s, lag_s = _difference_autocorr(p_s, grid.step_signal)
    ac_i, lag_i = _difference_autocorr(p_i, grid.step_idler)
    lag_prod = np.outer(lag_s, lag_i)

    def log_z(beta):
        return np.log(2.0 + 2.0 * float(ac_s @ np.cos(beta * lag_prod) @ ac_i))

    n = events.shape[0]

    def loglik(beta):
        c = np.cos(0.5 * beta * x) ** 2
        return float(np.sum(np.log(np.maximum(c, 1e-300)))) - n * log_z(beta)

    if beta_max is None:
        beta_max = np.pi / (2.0 * grid.step_signal * grid.step_idler)

    coarse = np.linspace(0.0, beta_max, 601)
    prof_coarse = np.array([loglik(bb) for bb in coarse])
    k = int(np.argmax(prof_coarse))
    lo = coarse[max(0, k - 3)]
    hi = coarse[min(coarse.size - 1, k + 3)]
    fine = np.linspace(lo, hi, 241)
    prof_fine = np.array([loglik(bb) for bb in fine])
    kf = int(np.argmax(prof_fine))

    diagnostics = {"profile_beta": coarse, "profile_loglik": prof_coarse,
                   "beta_max": float(beta_max), "boundary": False}

    if k == 0 and kf == 0:
        # likelihood maximal at beta = 0: consistent with no phase correlation
        h = max(1e-6, beta_max / 2000.0)
        curv = 2.0 * (loglik(h) - loglik(0.0)) / h ** 2  # loglik is even in beta
        se = float(1.0 / np.sqrt(-curv)) if curv < 0 else float(beta_max)
        diagnostics["boundary"] = True
        return EstimationResult(0.0, se, "MLE", n, diagnostics)

    res = minimize_scalar(lambda bb: -loglik(bb), bounds=(fine[max(0, kf - 2)],
                                                          fine[min(fine.size - 1, kf + 2)]),
                          method="bounded", options={"xatol": 1e-8})
    if not res.success:
        raise EstimationError("MLE search did not converge", payload=diagnostics)
    beta_hat = float(res.x)

    h = max(1e-7, 1e-4 * max(beta_hat, 1.0))
    curv = (loglik(beta_hat + h) - 2.0 * loglik(beta_hat) + loglik(beta_hat - h)) / h ** 2
    if not curv < 0:
        raise EstimationError("non-concave likelihood at optimum", payload=diagnostics)
    se = float(1.0 / np.sqrt(-curv))
    diagnostics["loglik_at_max"] = float(-res.fun)
    return EstimationResult(beta_hat, se, "MLE", n, diagnostics)
