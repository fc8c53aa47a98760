"""rivetscan: vibration-FRF damage localization on a riveted stiffened panel.

Pipeline: random-excitation response simulation -> H1 FRF estimation ->
per-channel PCA fingerprints -> backprop networks for rivet localization
and severity regression.
"""

from .config import RunConfig, default_run_config, derive_seed
from .identify import (DamageIdSystem, EvaluationReport, RivetVector, SeverityEstimate,
                       build_dataset, estimate_severity, evaluate, localize,
                       scenario_grid, train_system)
from .panel import (DamageScenario, ModalBasis, PanelConfig, PanelModel, SensorLayout,
                    analytic_frf, apply_damage, build_panel, default_panel_config,
                    modal_solve)
from .pca import FeatureVector, PcaBasis, covariance, eig_sym, fit_basis, project
from .signals import (FrequencyGrid, FrfMatrix, TimeSignal, estimate_frf, fft_forward,
                      fft_inverse, gen_white_noise, simulate_response)

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "default_run_config", "derive_seed",
    "DamageIdSystem", "EvaluationReport", "RivetVector", "SeverityEstimate",
    "build_dataset", "estimate_severity", "evaluate", "localize",
    "scenario_grid", "train_system",
    "DamageScenario", "ModalBasis", "PanelConfig", "PanelModel", "SensorLayout",
    "analytic_frf", "apply_damage", "build_panel", "default_panel_config", "modal_solve",
    "FeatureVector", "PcaBasis", "covariance", "eig_sym", "fit_basis", "project",
    "FrequencyGrid", "FrfMatrix", "TimeSignal", "estimate_frf", "fft_forward",
    "fft_inverse", "gen_white_noise", "simulate_response",
    "__version__",
]
