import numpy as np
import pytest

from pairspec import (C_NM_PER_PS, GridError, PhaseMatchKind, PhaseMatchModel,
                      PumpSpectrum, build_chirped_factorable_jsa, build_jsa,
                      chirp_from_gdd, factorable_marginal_sigmas, factorable_pump_sigma,
                      gaussian_schmidt_purity, make_grid, purity, schmidt_decompose)


class TestMakeGrid:
    def test_step(self):
        g = make_grid(1554.0, 1546.0, 10.0, 128)
        assert g.step_signal == pytest.approx(10.0 / 127)
        assert g.step_signal == pytest.approx(0.0787, abs=2e-4)

    def test_two_points(self):
        g = make_grid(1550.0, 1550.0, 1.0, 2)
        assert np.allclose(g.signal_axis, [-0.5, 0.5])
        assert np.allclose(g.idler_axis, [-0.5, 0.5])

    def test_rejects_bad_span(self):
        with pytest.raises(GridError):
            make_grid(1550.0, 1550.0, -1.0, 64)
        with pytest.raises(GridError):
            make_grid(1550.0, 1550.0, 1.0, 1)

    def test_symmetric_coverage(self):
        g = make_grid(1554.0, 1546.0, 8.0, 65)
        assert g.signal_axis[0] == -4.0 and g.signal_axis[-1] == 4.0
        assert g.idler_axis[0] == -4.0 and g.idler_axis[-1] == 4.0

    def test_index_lookup_rejects_off_grid(self):
        g = make_grid(1550.0, 1550.0, 2.0, 11)
        assert g.index_signal(g.signal_axis[3]) == 3
        with pytest.raises(GridError):
            g.index_signal(g.signal_axis[3] + 0.3 * g.step_signal)
        with pytest.raises(GridError):
            g.index_signal(10.0)


class TestChirpFromGdd:
    def test_20ps_per_nm_at_777(self):
        # direct evaluation of D * lambda^2 / (2 pi c)
        expected = 20.0 * 777.0 ** 2 / (2 * np.pi * C_NM_PER_PS)
        beta = chirp_from_gdd(20.0, 777.0)
        assert beta == pytest.approx(expected, rel=1e-12)
        assert beta == pytest.approx(6.41, abs=5e-3)

    def test_zero(self):
        assert chirp_from_gdd(0.0, 777.0) == 0.0

    def test_negative(self):
        assert chirp_from_gdd(-5.0, 777.0) == pytest.approx(-1.60, abs=5e-3)

    def test_sign_convention(self):
        assert chirp_from_gdd(3.0, 777.0) > 0

    def test_rejects_bad_wavelength(self):
        with pytest.raises(ValueError):
            chirp_from_gdd(1.0, -3.0)


class TestBuildJsa:
    def setup_method(self):
        self.pm = PhaseMatchModel()
        self.grid = make_grid(1554.0, 1546.0, 32.0, 128)
        self.sigma_p = factorable_pump_sigma(self.pm)

    def test_factorable_choice_gives_unit_purity(self):
        pump = PumpSpectrum(self.sigma_p, 0.0, 777.0)
        jsa = build_jsa(pump, self.pm, self.grid)
        assert purity(schmidt_decompose(jsa)) == pytest.approx(1.0, abs=1e-6)

    def test_mismatched_pump_width_reduces_purity(self):
        pump = PumpSpectrum(3.0 * self.sigma_p, 0.0, 777.0)
        jsa = build_jsa(pump, self.pm, self.grid)
        assert purity(schmidt_decompose(jsa)) < 1.0 - 1e-3

    def test_chirp_is_pure_phase(self):
        pump0 = PumpSpectrum(self.sigma_p, 0.0, 777.0)
        pump1 = PumpSpectrum(self.sigma_p, 2.5, 777.0)
        j0 = build_jsa(pump0, self.pm, self.grid)
        j1 = build_jsa(pump1, self.pm, self.grid)
        assert np.max(np.abs(np.abs(j1.amplitude) - np.abs(j0.amplitude))) < 1e-12

    def test_normalization(self):
        for beta in (0.0, 1.0, 6.4):
            pump = PumpSpectrum(self.sigma_p, beta, 777.0)
            jsa = build_jsa(pump, self.pm, self.grid)
            assert jsa.norm() == pytest.approx(1.0, abs=1e-9)

    def test_sinc_kind_builds_and_normalizes(self):
        pm = PhaseMatchModel(kind=PhaseMatchKind.SINC, sigma=self.pm.sigma)
        pump = PumpSpectrum(self.sigma_p, 0.0, 777.0)
        jsa = build_jsa(pump, pm, self.grid)
        assert jsa.norm() == pytest.approx(1.0, abs=1e-9)
        # sinc acceptance goes negative between side lobes somewhere on the grid
        dk = pm.mismatch(self.grid.signal_axis[:, None], self.grid.idler_axis[None, :])
        assert np.min(pm.acceptance(dk)) < 0

    def test_agrees_with_bilinear_form_in_magnitude(self):
        beta = chirp_from_gdd(10.0, 777.0)
        pump = PumpSpectrum(self.sigma_p, beta, 777.0)
        built = build_jsa(pump, self.pm, self.grid)
        sig_s, sig_i = factorable_marginal_sigmas(pump, self.pm)
        direct = build_chirped_factorable_jsa(sig_s, sig_i, beta, self.grid)
        assert np.max(np.abs(np.abs(built.amplitude) - np.abs(direct.amplitude))) < 1e-9

    def test_phase_difference_is_separable_quadratic(self):
        beta = chirp_from_gdd(10.0, 777.0)
        pump = PumpSpectrum(self.sigma_p, beta, 777.0)
        built = build_jsa(pump, self.pm, self.grid)
        sig_s, sig_i = factorable_marginal_sigmas(pump, self.pm)
        direct = build_chirped_factorable_jsa(sig_s, sig_i, beta, self.grid)
        ws = self.grid.signal_axis[:, None]
        wi = self.grid.idler_axis[None, :]
        expected = np.exp(0.5j * beta * (ws ** 2 + wi ** 2))
        mask = np.abs(direct.amplitude) > 1e-6 * np.abs(direct.amplitude).max()
        resid = np.angle(built.amplitude / (direct.amplitude * expected))
        assert np.ptp(resid[mask]) < 1e-9


class TestChirpedFactorable:
    def test_beta0_is_rank_one(self, grid128):
        jsa = build_chirped_factorable_jsa(1.0, 1.0, 0.0, grid128)
        d = schmidt_decompose(jsa)
        assert d.xi[0] == pytest.approx(1.0, abs=1e-9)
        assert purity(d) == pytest.approx(1.0, abs=1e-9)

    def test_known_purity_beta1(self, jsa_beta1):
        # brute-force SVD on the grid against the Gaussian-integral closed form
        assert purity(schmidt_decompose(jsa_beta1)) == pytest.approx(
            gaussian_schmidt_purity(1.0, 1.0, 1.0), abs=1e-9)
        assert gaussian_schmidt_purity(1.0, 1.0, 1.0) == pytest.approx(0.7071, abs=1e-4)

    def test_conjugate_symmetric_under_beta_sign(self, grid128):
        jp = build_chirped_factorable_jsa(1.0, 1.0, 0.7, grid128)
        jm = build_chirped_factorable_jsa(1.0, 1.0, -0.7, grid128)
        assert np.allclose(jm.amplitude, np.conj(jp.amplitude), atol=0, rtol=0)

    def test_rejects_nonpositive_widths(self, grid128):
        with pytest.raises(ValueError):
            build_chirped_factorable_jsa(0.0, 1.0, 0.0, grid128)
        with pytest.raises(ValueError):
            build_chirped_factorable_jsa(1.0, -2.0, 0.0, grid128)

    def test_magnitude_independent_of_beta(self, grid128, jsa_beta0):
        for beta in (0.5, 1.0, 3.0):
            j = build_chirped_factorable_jsa(1.0, 1.0, beta, grid128)
            assert np.max(np.abs(np.abs(j.amplitude) - np.abs(jsa_beta0.amplitude))) < 1e-12


class TestGaussianIntegralOracle:
    """Independent quadrature check of the closed-form purity expression."""

    def test_purity_formula_by_quadrature(self):
        sig_s, sig_i, beta = 1.3, 0.8, 0.9
        w = np.linspace(-8 * sig_s, 8 * sig_s, 1201)
        wi = np.linspace(-8 * sig_i, 8 * sig_i, 1201)
        dw, dwi = w[1] - w[0], wi[1] - wi[0]
        psi = (np.exp(-0.5 * (w[:, None] / sig_s) ** 2)
               * np.exp(-0.5 * (wi[None, :] / sig_i) ** 2)
               * np.exp(1j * beta * w[:, None] * wi[None, :]))
        psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * dw * dwi)
        rho = psi @ psi.conj().T * dwi
        pur = np.sum(np.abs(rho) ** 2) * dw ** 2
        assert pur == pytest.approx(gaussian_schmidt_purity(sig_s, sig_i, beta), abs=1e-9)


def test_factorable_pump_sigma_requires_ordering():
    pm = PhaseMatchModel(group_index_pump=1.8, group_index_signal=1.7,
                         group_index_idler=1.9)
    with pytest.raises(ValueError):
        factorable_pump_sigma(pm)


def test_pump_spectrum_validation():
    with pytest.raises(ValueError):
        PumpSpectrum(-1.0)
    with pytest.raises(ValueError):
        PumpSpectrum(1.0, np.inf)
