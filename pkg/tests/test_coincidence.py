import numpy as np
import pytest

from pairspec import (GridError, Representation, SchmidtDecomposition,
                      build_chirped_factorable_jsa, chirp_from_gdd, four_photon_probability,
                      fringe_closed_form, make_grid, marginal_spectrum, pair_probability,
                      project_fourfold, purity, reduced_density, signal_signal_map,
                      signal_signal_probability, schmidt_decompose, unheralded_g2)


class TestPairProbability:
    def test_peak_at_center(self, jsa_beta0, grid128):
        peak = pair_probability(jsa_beta0, 0.0, 0.0)
        assert peak == pytest.approx(jsa_beta0.intensity.max())

    def test_beta_independent(self, jsa_beta0, jsa_beta1, grid128):
        for a, b in [(3, 100), (64, 64), (90, 12)]:
            ws, wi = grid128.signal_axis[a], grid128.idler_axis[b]
            assert pair_probability(jsa_beta0, ws, wi) == pytest.approx(
                pair_probability(jsa_beta1, ws, wi), rel=1e-12)

    def test_off_grid_rejected(self, jsa_beta0, grid128):
        with pytest.raises(GridError):
            pair_probability(jsa_beta0, grid128.signal_axis[0] + 0.4 * grid128.step_signal, 0.0)


class TestFourPhotonProbability:
    def test_equal_idlers_constructive(self, jsa_beta1, grid128):
        ws, ws2 = grid128.signal_axis[40], grid128.signal_axis[80]
        wi = grid128.idler_axis[70]
        p = four_photon_probability(jsa_beta1, ws, wi, ws2, wi)
        expected = 4 * pair_probability(jsa_beta1, ws, wi) * pair_probability(jsa_beta1, ws2, wi)
        assert p == pytest.approx(expected, rel=1e-12)

    def test_separable_real_jsa_product_form(self, jsa_beta0, grid128):
        ms = marginal_spectrum(jsa_beta0, "signal")
        mi = marginal_spectrum(jsa_beta0, "idler")
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b, a2, b2 = rng.integers(20, 108, 4)
            q = (grid128.signal_axis[a], grid128.idler_axis[b],
                 grid128.signal_axis[a2], grid128.idler_axis[b2])
            p = four_photon_probability(jsa_beta0, *q)
            assert p == pytest.approx(4 * ms[a] * ms[a2] * mi[b] * mi[b2], rel=1e-9)

    def test_matches_closed_form_on_bilinear_family(self, grid128):
        beta = chirp_from_gdd(20.0, 777.0)
        jsa = build_chirped_factorable_jsa(1.0, 1.0, beta, grid128)
        ms = marginal_spectrum(jsa, "signal")
        mi = marginal_spectrum(jsa, "idler")
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a, b, a2, b2 = rng.integers(0, 128, 4)
            q = (grid128.signal_axis[a], grid128.idler_axis[b],
                 grid128.signal_axis[a2], grid128.idler_axis[b2])
            direct = four_photon_probability(jsa, *q)
            closed = fringe_closed_form(grid128, ms, mi, beta, q)
            assert direct == pytest.approx(closed, rel=1e-9, abs=1e-300)

    def test_swap_symmetry_and_conjugation(self, jsa_beta1, grid128):
        conj = jsa_beta1.conjugated()
        rng = np.random.default_rng(5)
        for _ in range(30):
            a, b, a2, b2 = rng.integers(0, 128, 4)
            q = [grid128.signal_axis[a], grid128.idler_axis[b],
                 grid128.signal_axis[a2], grid128.idler_axis[b2]]
            p = four_photon_probability(jsa_beta1, *q)
            assert p == pytest.approx(
                four_photon_probability(jsa_beta1, q[2], q[1], q[0], q[3]), rel=1e-12)
            assert p == pytest.approx(
                four_photon_probability(jsa_beta1, q[0], q[3], q[2], q[1]), rel=1e-12)
            assert p == pytest.approx(four_photon_probability(conj, *q), rel=1e-12)
            assert p >= 0


class TestFringeClosedForm:
    def test_beta0_no_modulation(self, jsa_beta0, grid128):
        ms = marginal_spectrum(jsa_beta0, "signal")
        mi = marginal_spectrum(jsa_beta0, "idler")
        q = (grid128.signal_axis[30], grid128.idler_axis[40],
             grid128.signal_axis[90], grid128.idler_axis[100])
        v = fringe_closed_form(grid128, ms, mi, 0.0, q)
        assert v == pytest.approx(4 * ms[30] * ms[90] * mi[40] * mi[100], rel=1e-12)

    def test_first_zero_location(self, grid128):
        # cos^2 vanishes when beta/2 * ds * di = pi/2
        beta = 1.0
        ms = np.ones(128)
        mi = np.ones(128)
        step = grid128.step_signal
        k = int(round(np.pi / beta / step ** 2))  # ds = k*step with ds*di = pi/beta
        ds = k * step
        di = np.pi / beta / ds
        j = int(round(di / step))
        if abs(j * step - di) < 1e-9:
            q = (grid128.signal_axis[0], grid128.idler_axis[0],
                 grid128.signal_axis[k], grid128.idler_axis[j])
            assert fringe_closed_form(grid128, ms, mi, beta, q) < 1e-12


class TestSignalSignal:
    def test_separable_equal_terms_on_diagonal(self, jsa_beta0, grid128):
        ms = marginal_spectrum(jsa_beta0, "signal")
        w = grid128.signal_axis[50]
        p = signal_signal_probability(jsa_beta0, w, w)
        # interfering term equals non-interfering term for a pure separable state
        assert p == pytest.approx(4 * ms[50] ** 2, rel=1e-9)

    def test_bilinear_family_fourier_form(self, jsa_beta1, grid128):
        # interference term from the idler-marginal Fourier transform
        ms = marginal_spectrum(jsa_beta1, "signal")
        mi = marginal_spectrum(jsa_beta1, "idler")
        rho = reduced_density(jsa_beta1)
        beta = 1.0
        diffs = grid128.signal_axis[:, None] - grid128.signal_axis[None, :]
        ft = (mi[None, None, :] * np.exp(1j * beta * diffs[:, :, None]
                                         * grid128.idler_axis[None, None, :])
              ).sum(axis=2) * grid128.step_idler
        interf_ft = np.outer(ms, ms) * np.abs(ft) ** 2
        assert np.max(np.abs(interf_ft - np.abs(rho.matrix) ** 2)) < 1e-6

    def test_map_matches_scalar(self, jsa_beta1, grid128):
        m = signal_signal_map(jsa_beta1)
        for a, a2 in [(10, 90), (64, 64), (30, 31)]:
            assert m[a, a2] == pytest.approx(signal_signal_probability(
                jsa_beta1, grid128.signal_axis[a], grid128.signal_axis[a2]), rel=1e-12)

    def test_marginalizing_fourfold_reproduces_it(self, grid64):
        jsa = build_chirped_factorable_jsa(1.0, 1.0, 1.0, grid64)
        full = project_fourfold(jsa, Representation.FULL_TENSOR, normalize=False)
        summed = full.values.sum(axis=(1, 3)) * grid64.step_idler ** 2
        expected = signal_signal_map(jsa)
        assert np.max(np.abs(summed - expected)) < 1e-8 * expected.max()

    def test_summing_over_one_signal(self, grid64):
        # row sums: product part integrates to the marginal, plus the |rho|^2 row
        jsa = build_chirped_factorable_jsa(1.0, 1.0, 1.0, grid64)
        ss = signal_signal_map(jsa)
        ms = marginal_spectrum(jsa, "signal")
        rho = reduced_density(jsa)
        row = ss.sum(axis=1) * grid64.step_signal
        expected = 2 * ms + 2 * (np.abs(rho.matrix) ** 2).sum(axis=1) * grid64.step_signal
        assert np.max(np.abs(row - expected)) < 1e-10


class TestUnheraldedG2:
    def test_single_mode(self, decomp_beta0):
        assert unheralded_g2(decomp_beta0) == pytest.approx(2.0, abs=1e-9)

    def test_two_equal_modes(self, grid128):
        xi = np.array([np.sqrt(0.5), np.sqrt(0.5)])
        modes = np.zeros((2, grid128.n_signal), dtype=complex)
        d = SchmidtDecomposition(xi, modes, modes.copy(), grid128)
        assert unheralded_g2(d) == pytest.approx(1.5)

    def test_chirped(self, decomp_beta1):
        assert unheralded_g2(decomp_beta1) == pytest.approx(1.7071, abs=1e-4)


class TestProjectFourfold:
    def test_full_tensor_cap(self, grid128, jsa_beta1):
        with pytest.raises(ValueError, match="96"):
            project_fourfold(jsa_beta1, Representation.FULL_TENSOR)

    def test_difference_matches_full_tensor_oracle(self):
        grid = make_grid(1550.0, 1550.0, 12.5, 32)
        jsa = build_chirped_factorable_jsa(1.0, 1.0, 1.5, grid)
        full = project_fourfold(jsa, Representation.FULL_TENSOR, normalize=False)
        diff = project_fourfold(jsa, Representation.DIFFERENCE, n_bins=12, normalize=False)
        vs, vi = grid.signal_axis, grid.idler_axis
        es, ei = diff.bin_edges
        oracle = np.zeros((12, 12))
        t = full.values
        for a in range(32):
            for a2 in range(32):
                ks = min(np.searchsorted(es, abs(vs[a] - vs[a2]), side="right") - 1, 11)
                ks = max(ks, 0)
                for b in range(32):
                    for b2 in range(32):
                        ki = min(np.searchsorted(ei, abs(vi[b] - vi[b2]), side="right") - 1, 11)
                        ki = max(ki, 0)
                        oracle[ks, ki] += t[a, b, a2, b2]
        assert np.max(np.abs(oracle - diff.values)) < 1e-12 * oracle.max()

    def test_separable_difference_is_outer_product(self):
        grid = make_grid(1550.0, 1550.0, 12.5, 32)
        jsa = build_chirped_factorable_jsa(1.0, 1.0, 0.0, grid)
        diff = project_fourfold(jsa, Representation.DIFFERENCE, n_bins=10)
        v = diff.values
        rank1 = np.outer(v.sum(axis=1), v.sum(axis=0)) / v.sum()
        assert np.max(np.abs(v - rank1)) < 1e-9

    def test_block_size_independence(self, jsa_beta1):
        d1 = project_fourfold(jsa_beta1, Representation.DIFFERENCE, block_size=1024)
        d2 = project_fourfold(jsa_beta1, Representation.DIFFERENCE, block_size=65536)
        assert np.max(np.abs(d1.values - d2.values)) < 1e-12

    def test_worker_count_invariance(self, jsa_beta1):
        d1 = project_fourfold(jsa_beta1, Representation.DIFFERENCE)
        d4 = project_fourfold(jsa_beta1, Representation.DIFFERENCE, n_workers=4)
        d16 = project_fourfold(jsa_beta1, Representation.DIFFERENCE, n_workers=16)
        assert np.array_equal(d1.values, d4.values)
        assert np.array_equal(d1.values, d16.values)

    def test_normalized_sums_to_one(self, jsa_beta1):
        for rep in (Representation.DIFFERENCE, Representation.PRODUCT):
            dist = project_fourfold(jsa_beta1, rep)
            assert dist.values.sum() == pytest.approx(1.0, abs=1e-9)

    def test_sign_blindness(self, grid128):
        jp = build_chirped_factorable_jsa(1.0, 1.0, 0.8, grid128)
        jm = build_chirped_factorable_jsa(1.0, 1.0, -0.8, grid128)
        dp = project_fourfold(jp, Representation.DIFFERENCE)
        dm = project_fourfold(jm, Representation.DIFFERENCE)
        assert np.array_equal(dp.values, dm.values)

    def test_wavelength_axis_unit(self, jsa_beta1):
        d = project_fourfold(jsa_beta1, Representation.DIFFERENCE, axis_unit="wavelength")
        assert d.axis_unit == "wavelength"
        assert d.bin_edges[0][-1] < 50  # nm scale, not rad/ps grid span
        assert d.values.sum() == pytest.approx(1.0, abs=1e-9)

    def test_fringe_minima_on_hyperbola(self, grid128):
        beta = chirp_from_gdd(20.0, 777.0)
        sig = 3.7474057 / np.sqrt(2)
        mags = build_chirped_factorable_jsa(sig, sig, 0.0, grid128)
        jsa = build_chirped_factorable_jsa(sig, sig, beta, grid128)
        h0 = project_fourfold(mags, Representation.DIFFERENCE, n_bins=96)
        hb = project_fourfold(jsa, Representation.DIFFERENCE, n_bins=96)
        ratio = np.divide(hb.values, h0.values,
                          out=np.ones_like(hb.values), where=h0.values > 1e-7)
        cs = hb.centers(0)
        ci = hb.centers(1)
        gs, gi = np.meshgrid(cs, ci, indexing="ij")
        strong = h0.values > 1e-5
        dark = strong & (np.abs(gs * gi - np.pi / beta) < 0.06)
        bright = strong & (np.abs(gs * gi - 2 * np.pi / beta) < 0.06)
        assert dark.sum() > 10 and bright.sum() > 10
        assert ratio[dark].mean() < 0.3
        assert ratio[bright].mean() > 0.6
