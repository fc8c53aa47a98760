import numpy as np
import pytest

from rivetscan.panel import ModalBasis, build_panel, default_panel_config
from rivetscan.signals import ACCELERANCE, FrequencyGrid, FrfMatrix


@pytest.fixture(scope="session")
def panel_model():
    return build_panel(default_panel_config())


@pytest.fixture(scope="session")
def small_grid():
    return FrequencyGrid(f_max=1000.0, n_bins=512)


def make_sdof(f_n: float = 250.0, zeta: float = 0.01, k: float = 1.0e4):
    """Single-dof oscillator: mass from k and f_n, mass-normalized shape."""
    w_n = 2.0 * np.pi * f_n
    m = k / w_n ** 2
    basis = ModalBasis(natural_frequencies=np.array([f_n]),
                       mode_shapes=np.array([[1.0 / np.sqrt(m)]]), n_modes=1)
    return basis, m, zeta, k


def sdof_receptance(grid: FrequencyGrid, f_n: float = 250.0, zeta: float = 0.01,
                    k: float = 1.0e4) -> FrfMatrix:
    """Closed-form receptance of a single-dof oscillator on the grid."""
    w = 2.0 * np.pi * grid.freq_bins
    w_n = 2.0 * np.pi * f_n
    m = k / w_n ** 2
    h = (1.0 / m) / (w_n ** 2 - w ** 2 + 2j * zeta * w_n * w)
    return FrfMatrix(values=h[None, :], freq_bins=grid.freq_bins,
                     channel_kinds=(ACCELERANCE,))
