import numpy as np
import pytest

from monocal import data_io, optim, transform


@pytest.fixture(scope="session")
def overconfident_split():
    """Overconfident synthetic problem split into 5000 calibration / 10000 test."""
    cfg = data_io.SynthConfig(n=15_000, m=10, alpha=0.5, overconfidence=2.5, seed=0)
    z, y, true_probs = data_io.generate_synthetic(cfg)
    (zc, yc), (zt, yt) = data_io.split_dataset(z, y, 1 / 3, seed=0)
    return (zc, yc), (zt, yt)


@pytest.fixture(scope="session")
def calibrated_split():
    """Perfectly calibrated synthetic problem, same shape as overconfident_split."""
    cfg = data_io.SynthConfig(n=15_000, m=10, alpha=0.5, overconfidence=1.0, seed=5)
    z, y, true_probs = data_io.generate_synthetic(cfg)
    (zc, yc), (zt, yt) = data_io.split_dataset(z, y, 1 / 3, seed=5)
    return (zc, yc), (zt, yt)


@pytest.fixture(scope="session")
def fitted_direct(overconfident_split):
    (zc, yc), _ = overconfident_split
    return optim.fit_mcct(zc, yc, mode=transform.DIRECT)


@pytest.fixture(scope="session")
def fitted_inverse(overconfident_split):
    (zc, yc), _ = overconfident_split
    return optim.fit_mcct(zc, yc, mode=transform.INVERSE)


def random_valid_params(rng, m, mode, m_total=None):
    """Random parameters satisfying the ordering invariants of the given mode."""
    w = np.sort(rng.uniform(0.05, 3.0, m))
    if mode == transform.INVERSE:
        w = w[::-1].copy()
    b = np.sort(rng.normal(0.0, 1.0, m))
    return transform.MonotoneParams(w=w, b=b, mode=mode, m=m if m_total is None else m_total)
