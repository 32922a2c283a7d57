import numpy as np
import pytest

from pairspec import (JointSpectralAmplitude, SchmidtDecomposition,
                      build_chirped_factorable_jsa, make_grid, marginal_spectrum,
                      purity, reduced_density, schmidt_decompose)


class TestDecomposition:
    def test_xi_normalized_and_descending(self, decomp_beta1):
        xi = decomp_beta1.xi
        assert np.sum(xi ** 2) == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.diff(xi) <= 0)

    def test_modes_orthonormal(self, decomp_beta1):
        d = decomp_beta1
        gs = d.signal_modes @ d.signal_modes.conj().T * d.grid.step_signal
        gi = d.idler_modes @ d.idler_modes.conj().T * d.grid.step_idler
        eye = np.eye(d.n_modes)
        assert np.max(np.abs(gs - eye)) < 1e-8
        assert np.max(np.abs(gi - eye)) < 1e-8

    def test_reconstruction(self, jsa_beta1, decomp_beta1):
        rec = decomp_beta1.reconstruct()
        assert np.max(np.abs(rec - jsa_beta1.amplitude)) < 1e-8

    def test_separable_is_rank_one(self, decomp_beta0):
        assert decomp_beta0.xi[0] == pytest.approx(1.0, abs=1e-6)
        assert decomp_beta0.n_modes == 1

    def test_geometric_xi_sequence(self, decomp_beta1, grid128):
        # Gaussian bilinear-phase family has geometric Schmidt amplitudes;
        # verified at two grid resolutions
        ratios = decomp_beta1.xi[1:9] / decomp_beta1.xi[:8]
        assert np.max(np.abs(ratios - ratios[0])) < 1e-4
        g256 = make_grid(1550.0, 1550.0, 12.5, 256)
        d256 = schmidt_decompose(build_chirped_factorable_jsa(1.0, 1.0, 1.0, g256))
        r256 = d256.xi[1:9] / d256.xi[:8]
        assert np.max(np.abs(r256 - ratios[0])) < 1e-4

    def test_disjoint_block_weights(self):
        grid = make_grid(1550.0, 1550.0, 4.0, 64)
        amp = np.zeros((64, 64), dtype=complex)
        cell = grid.cell
        # two separable blocks with disjoint support, weights 0.8 and 0.6
        blk = np.outer(np.ones(16), np.ones(16))
        blk = blk / np.sqrt(np.sum(np.abs(blk) ** 2) * cell)
        amp[:16, :16] = 0.8 * blk
        amp[40:56, 40:56] = 0.6 * blk
        jsa = JointSpectralAmplitude(grid, amp)
        xi = schmidt_decompose(jsa).xi
        assert xi[0] == pytest.approx(0.8, abs=1e-9)
        assert xi[1] == pytest.approx(0.6, abs=1e-9)

    def test_rejects_nonfinite(self, grid128, jsa_beta0):
        bad = jsa_beta0.amplitude.copy()
        bad[3, 3] = np.nan
        with pytest.raises(ValueError):
            JointSpectralAmplitude(grid128, bad)


class TestPurity:
    def test_single_mode(self, decomp_beta0):
        assert purity(decomp_beta0) == pytest.approx(1.0, abs=1e-9)

    def test_two_equal_modes(self, grid128):
        xi = np.array([np.sqrt(0.5), np.sqrt(0.5)])
        modes = np.zeros((2, grid128.n_signal), dtype=complex)
        d = SchmidtDecomposition(xi, modes, modes.copy(), grid128)
        assert purity(d) == pytest.approx(0.5)

    def test_chirped_value(self, decomp_beta1):
        assert purity(decomp_beta1) == pytest.approx(0.7071, abs=1e-4)

    def test_grid_resolution_stability(self, decomp_beta1):
        g256 = make_grid(1550.0, 1550.0, 12.5, 256)
        d256 = schmidt_decompose(build_chirped_factorable_jsa(1.0, 1.0, 1.0, g256))
        assert abs(purity(d256) - purity(decomp_beta1)) < 1e-3


class TestReducedDensity:
    def test_hermitian_unit_trace(self, jsa_beta1):
        rho = reduced_density(jsa_beta1)
        assert np.max(np.abs(rho.matrix - rho.matrix.conj().T)) < 1e-10
        assert np.all(rho.diagonal() >= -1e-12)
        assert rho.trace() == pytest.approx(1.0, abs=1e-9)

    def test_separable_rank_one(self, jsa_beta0):
        rho = reduced_density(jsa_beta0).matrix
        evals = np.linalg.eigvalsh(rho)
        assert evals[-1] / evals.sum() == pytest.approx(1.0, abs=1e-9)

    def test_purity_matches_schmidt_path(self, jsa_beta1, decomp_beta1):
        assert reduced_density(jsa_beta1).purity() == pytest.approx(
            purity(decomp_beta1), abs=1e-6)

    def test_antidiagonal_narrows_with_beta(self, grid128):
        widths = []
        for beta in (0.0, 1.0, 2.0):
            rho = reduced_density(build_chirped_factorable_jsa(1.0, 1.0, beta, grid128))
            prof = np.abs(np.diag(np.fliplr(rho.matrix)))  # anti-diagonal through center
            x = grid128.signal_axis * np.sqrt(2)
            half = prof >= prof.max() / np.e
            widths.append(x[half].max() - x[half].min())
        assert widths[0] > widths[1] > widths[2]

    def test_antidiagonal_width_against_fine_quadrature(self, jsa_beta1):
        # 1/e half-width of |rho| along the anti-diagonal: analytic Gaussian
        # algebra gives sqrt(2)/sqrt(1/sig^2 + beta^2 sig_i^2) in the rotated
        # coordinate; cross-check the 128-grid result against a 256-grid one
        def width(n):
            g = make_grid(1550.0, 1550.0, 12.5, n)
            rho = reduced_density(build_chirped_factorable_jsa(1.0, 1.0, 1.0, g))
            prof = np.abs(np.diag(np.fliplr(rho.matrix)))
            x = g.signal_axis * np.sqrt(2)
            target = prof.max() / np.e
            # interpolate the crossing on the decreasing right flank
            k = np.argmax(prof)
            right_x, right_p = x[k:], prof[k:]
            j = np.nonzero(right_p < target)[0][0]
            frac = (right_p[j - 1] - target) / (right_p[j - 1] - right_p[j])
            return right_x[j - 1] + frac * (right_x[j] - right_x[j - 1])

        w128, w256 = width(128), width(256)
        expected = np.sqrt(2.0) / np.sqrt(1.0 + 1.0)  # sig=1, beta=1
        assert w128 == pytest.approx(expected, rel=0.05)
        assert abs(w128 - w256) < 0.05 * expected

    def test_diagonal_equals_marginal(self, jsa_beta1):
        rho = reduced_density(jsa_beta1)
        ms = marginal_spectrum(jsa_beta1, "signal")
        assert np.max(np.abs(rho.diagonal() - ms)) < 1e-9


class TestMarginals:
    def test_normalization(self, jsa_beta1, grid128):
        for which, step in (("signal", grid128.step_signal), ("idler", grid128.step_idler)):
            m = marginal_spectrum(jsa_beta1, which)
            assert np.all(m >= 0)
            assert np.sum(m) * step == pytest.approx(1.0, abs=1e-9)

    def test_separable_width(self, jsa_beta0, grid128):
        m = marginal_spectrum(jsa_beta0, "signal")
        var = np.sum(m * grid128.signal_axis ** 2) * grid128.step_signal
        assert np.sqrt(var) == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-6)

    def test_beta_independent(self, grid128, jsa_beta0, jsa_beta1):
        m0 = marginal_spectrum(jsa_beta0, "signal")
        m1 = marginal_spectrum(jsa_beta1, "signal")
        assert np.max(np.abs(m0 - m1)) < 1e-12

    def test_rejects_unknown_side(self, jsa_beta0):
        with pytest.raises(ValueError):
            marginal_spectrum(jsa_beta0, "pump")
