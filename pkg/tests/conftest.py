import numpy as np
import pytest

from pairspec import (DetectorChainConfig, SourceConfig, build_chirped_factorable_jsa,
                      make_grid, schmidt_decompose)


@pytest.fixture(scope="session")
def grid128():
    return make_grid(1550.0, 1550.0, 12.5, 128)


@pytest.fixture(scope="session")
def grid64():
    return make_grid(1550.0, 1550.0, 12.5, 64)


@pytest.fixture(scope="session")
def jsa_beta1(grid128):
    return build_chirped_factorable_jsa(1.0, 1.0, 1.0, grid128)


@pytest.fixture(scope="session")
def jsa_beta0(grid128):
    return build_chirped_factorable_jsa(1.0, 1.0, 0.0, grid128)


@pytest.fixture(scope="session")
def decomp_beta1(jsa_beta1):
    return schmidt_decompose(jsa_beta1)


@pytest.fixture(scope="session")
def decomp_beta0(jsa_beta0):
    return schmidt_decompose(jsa_beta0)


@pytest.fixture(scope="session")
def ideal_chain():
    return DetectorChainConfig(timing_jitter_fwhm=0.0, efficiency_signal=1.0,
                               efficiency_idler=1.0)


def two_sample_chi2_pvalue(h1, h2, min_count=10):
    """Two-sample multinomial chi-square on pooled bins."""
    from scipy.stats import chi2 as chi2_dist
    h1 = np.asarray(h1, dtype=float).ravel()
    h2 = np.asarray(h2, dtype=float).ravel()
    mask = (h1 + h2) >= min_count
    n1, n2 = h1.sum(), h2.sum()
    stat = np.sum((np.sqrt(n2 / n1) * h1[mask] - np.sqrt(n1 / n2) * h2[mask]) ** 2
                  / (h1[mask] + h2[mask]))
    dof = int(mask.sum()) - 1
    return float(chi2_dist.sf(stat, dof))


def model_chi2_pvalue(observed, probs, min_expected=5.0):
    """Multinomial goodness-of-fit chi-square with tail pooling."""
    from scipy.stats import chi2 as chi2_dist
    obs = np.asarray(observed, dtype=float).ravel()
    p = np.asarray(probs, dtype=float).ravel()
    p = p / p.sum()
    n = obs.sum()
    exp = n * p
    mask = exp >= min_expected
    stat = float(np.sum((obs[mask] - exp[mask]) ** 2 / exp[mask]))
    tail_obs = n - obs[mask].sum()
    tail_exp = n - exp[mask].sum()
    dof = int(mask.sum()) - 1
    if tail_exp > min_expected:
        stat += (tail_obs - tail_exp) ** 2 / tail_exp
        dof += 1
    return float(chi2_dist.sf(stat, dof))


def fold_symmetric(hist2d):
    """One entry per unordered pair: off-diagonal mirror bins averaged, plus diagonal."""
    h = np.asarray(hist2d, dtype=float)
    iu = np.triu_indices(h.shape[0], k=1)
    return np.concatenate([((h + h.T) / 2)[iu], np.diag(h)])
