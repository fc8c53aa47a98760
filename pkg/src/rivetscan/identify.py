"""End-to-end damage identification: dataset assembly, task networks,
and the evaluation metrics.

For every scenario the pipeline applies the damage, re-solves the modes,
synthesizes exact sensor FRFs, drives them with a small ensemble of
random force records (default ten), adds measurement noise, recovers the
FRF with the H1 estimator, and projects the log-magnitude curves onto
component bases fitted on the training split only. The localization
network maps the 100-entry fingerprint to a 34-element rivet indicator;
one severity network per damage kind regresses the physical magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import mlp, pca
from .config import RunConfig, TaskParams, derive_seed
from .mlp import MlpNetwork, TrainingSet, TrainParams
from .panel import N_RIVETS, DamageScenario, PanelModel, analytic_frf, apply_damage, modal_solve
from .pca import FeatureVector, PcaBasis
from .signals import FrequencyGrid, FrfMatrix, estimate_frf, simulate_response, white_noise_records

SEVERITY_KINDS = ("crack", "hole_expansion", "added_mass")


class IdentifyError(ValueError):
    """Pipeline contract violation (mismatched artifacts, bad inputs)."""


class BasisMismatchError(IdentifyError):
    """Fingerprint and network come from different component bases."""


@dataclass(frozen=True)
class RivetVector:
    """Localization output: per-rivet scores, thresholded bits, ranking."""
    scores: np.ndarray
    binary: np.ndarray
    threshold: float
    top_ranked: tuple[int, ...]

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        binary = np.asarray(self.binary, dtype=bool)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "binary", binary)
        if scores.shape != (N_RIVETS,) or binary.shape != (N_RIVETS,):
            raise IdentifyError(f"rivet vector must have length {N_RIVETS}")
        if not np.array_equal(binary, scores >= self.threshold):
            raise IdentifyError("binary bits must equal scores >= threshold")

    @property
    def flagged(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.binary))


@dataclass(frozen=True)
class SeverityEstimate:
    damage_kind: str
    value: float      # mm / stiffness-loss fraction / kg by kind
    rivet: int        # rivet the estimate applies to, -1 if unknown


@dataclass(frozen=True)
class ScenarioRecord:
    """Per-scenario evaluation row (also the CSV row contents)."""
    index: int
    kind: str
    true_rivets: tuple[int, ...]
    true_severity: float
    predicted_severity: float | None
    scores: np.ndarray
    flagged: tuple[int, ...]
    wrong_bits: int
    hit: bool


@dataclass(frozen=True)
class EvaluationReport:
    misclassification_pct: float
    localization_hit_rate: float
    severity_mean_rel_err_pct: dict[str, float]
    records: tuple[ScenarioRecord, ...]

    def __post_init__(self):
        if not 0.0 <= self.misclassification_pct <= 100.0:
            raise IdentifyError("misclassification_pct outside [0, 100]")
        if not 0.0 <= self.localization_hit_rate <= 1.0:
            raise IdentifyError("localization_hit_rate outside [0, 1]")


@dataclass(frozen=True)
class TrainedModel:
    """A task network plus the input/output standardization it was
    trained with and the basis pair identity it expects."""
    net: MlpNetwork
    task: str                      # 'localize' or 'severity:<kind>'
    basis_id: str
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0
    threshold: float = 0.5
    metadata: dict = field(default_factory=dict)

    def standardize(self, feature: FeatureVector) -> np.ndarray:
        if feature.basis_id != self.basis_id:
            raise BasisMismatchError(
                f"fingerprint basis {feature.basis_id[:12]} does not match "
                f"model basis {self.basis_id[:12]}")
        if feature.values.shape != self.feature_mean.shape:
            raise IdentifyError("fingerprint length does not match model input")
        return (feature.values - self.feature_mean) / self.feature_std


@dataclass(frozen=True)
class DamageIdSystem:
    """Everything needed for inference: basis pair plus task networks."""
    accel_basis: PcaBasis
    strain_basis: PcaBasis
    localizer: TrainedModel
    severity_models: dict[str, TrainedModel]
    adjacency: tuple[tuple[int, ...], ...]


def scenario_grid(crack_lengths_mm, hole_expansion_fractions, added_masses_kg,
                  n_healthy: int) -> list[DamageScenario]:
    """Default desk-scale sweep: every rivet at every severity per kind,
    plus healthy replicates (distinct measurement seeds come from the
    scenario position)."""
    scenarios = []
    for rivet in range(N_RIVETS):
        for length in crack_lengths_mm:
            scenarios.append(DamageScenario("crack", (rivet,), (float(length),)))
    for rivet in range(N_RIVETS):
        for frac in hole_expansion_fractions:
            scenarios.append(DamageScenario("hole_expansion", (rivet,), (float(frac),)))
    for rivet in range(N_RIVETS):
        for mass in added_masses_kg:
            scenarios.append(DamageScenario("added_mass", (rivet,), (float(mass),)))
    scenarios.extend(DamageScenario("healthy") for _ in range(n_healthy))
    return scenarios


def rivet_adjacency(model: PanelModel) -> tuple[tuple[int, ...], ...]:
    """Neighbour sets derived from the assembled stiffness topology: two
    rivets are adjacent when their joints share a dof or touch directly
    coupled dofs (consecutive joints along one stiffener)."""
    k = model.stiffness_matrix
    out = []
    for i, ji in enumerate(model.rivet_map):
        neigh = []
        for j, jj in enumerate(model.rivet_map):
            if i == j:
                continue
            dofs_i = (ji.dof_a, ji.dof_b)
            dofs_j = (jj.dof_a, jj.dof_b)
            shared = set(dofs_i) & set(dofs_j)
            coupled = any(k[a, b] != 0.0 for a in dofs_i for b in dofs_j)
            if shared or coupled:
                neigh.append(j)
        out.append(tuple(neigh))
    return tuple(out)


def localization_target(scenario: DamageScenario) -> np.ndarray:
    """34-element indicator; all zeros for a healthy panel."""
    target = np.zeros(N_RIVETS)
    for r in scenario.rivets:
        target[r] = 1.0
    return target


def decode_rivets(target: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.flatnonzero(np.asarray(target) >= 0.5))


@dataclass(frozen=True)
class FingerprintDataset:
    """Estimated FRF fingerprints for a scenario list, with the fitted
    basis pair and a deterministic train/val/test split."""
    scenarios: tuple[DamageScenario, ...]
    features: tuple[FeatureVector, ...]
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    accel_basis: PcaBasis
    strain_basis: PcaBasis
    healthy_present: bool

    @property
    def basis_id(self) -> str:
        return pca.combine_basis_ids(self.accel_basis.basis_id, self.strain_basis.basis_id)

    def feature_matrix(self, idx) -> np.ndarray:
        return np.stack([self.features[i].values for i in idx])

    def localization_sets(self) -> dict[str, TrainingSet]:
        sets = {}
        for name, idx in (("train", self.train_idx), ("val", self.val_idx),
                          ("test", self.test_idx)):
            targets = np.stack([localization_target(self.scenarios[i]) for i in idx])
            sets[name] = TrainingSet(self.feature_matrix(idx), targets)
        return sets

    def severity_indices(self, kind: str) -> dict[str, np.ndarray]:
        if kind not in SEVERITY_KINDS:
            raise IdentifyError(f"unknown severity kind {kind!r}")
        out = {}
        for name, idx in (("train", self.train_idx), ("val", self.val_idx),
                          ("test", self.test_idx)):
            out[name] = np.array([i for i in idx if self.scenarios[i].kind == kind],
                                 dtype=np.intp)
        return out

    def severity_sets(self, kind: str) -> dict[str, TrainingSet]:
        sets = {}
        for name, idx in self.severity_indices(kind).items():
            targets = np.array([[float(np.mean(self.scenarios[i].severity))] for i in idx])
            sets[name] = TrainingSet(self.feature_matrix(idx), targets)
        return sets


def split_indices(n: int, fractions, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded permutation split; sizes are floor(train), floor(val), rest."""
    train_f, val_f, test_f = fractions
    if abs(train_f + val_f + test_f - 1.0) > 1e-9:
        raise IdentifyError("split fractions must sum to 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    # the epsilon absorbs float error so exact fractions give exact counts
    n_train = int(np.floor(train_f * n + 1e-9))
    n_val = int(np.floor(val_f * n + 1e-9))
    return (np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
            np.sort(perm[n_train + n_val:]))


def estimate_scenario_frf(model: PanelModel, scenario: DamageScenario,
                          grid: FrequencyGrid, n_modes: int, n_records: int,
                          sigma: float, snr_db: float | None,
                          excitation_seed: int, noise_seed: int) -> FrfMatrix:
    """Measured-FRF surrogate for one damage state: damage -> modes ->
    exact FRF -> noisy record ensemble -> H1 estimate."""
    damaged = apply_damage(model, scenario)
    basis = modal_solve(damaged, n_modes)
    frf_true = analytic_frf(basis, model.sensor_layout, grid, model.damping_ratio)
    inputs = white_noise_records(n_records, grid.record_length, sigma,
                                 excitation_seed, grid.dt)
    outputs = [simulate_response(frf_true, rec, snr_db, noise_seed + j)
               for j, rec in enumerate(inputs)]
    return estimate_frf(inputs, outputs, model.sensor_layout.channel_kinds)


def build_dataset(model: PanelModel, scenarios: list[DamageScenario],
                  cfg: RunConfig, n_modes: int | None = None,
                  progress=None) -> FingerprintDataset:
    """Run the measurement chain for every scenario and fingerprint it.

    The component bases are fitted on the training split only and then
    applied to every scenario; the split itself is a seeded permutation,
    so the whole dataset is a pure function of (panel, scenarios, config).
    """
    if not scenarios:
        raise IdentifyError("scenario list is empty")
    healthy_present = any(not s.is_damaged for s in scenarios)
    grid = FrequencyGrid(cfg.signal.f_max_hz, cfg.signal.n_bins)
    n_modes = n_modes if n_modes is not None else min(30, model.n_dof)

    frfs = []
    for i, scenario in enumerate(scenarios):
        frfs.append(estimate_scenario_frf(
            model, scenario, grid, n_modes, cfg.signal.n_records,
            cfg.signal.sigma_n, cfg.signal.snr_db,
            excitation_seed=derive_seed(cfg.master_seed, "excitation", i),
            noise_seed=derive_seed(cfg.master_seed, "noise", i * cfg.signal.n_records)))
        if progress is not None:
            progress(i + 1, len(scenarios))

    train_idx, val_idx, test_idx = split_indices(
        len(scenarios), (cfg.split.train, cfg.split.val, cfg.split.test),
        derive_seed(cfg.master_seed, "split"))
    training_frfs = [frfs[i] for i in train_idx]
    accel_basis = pca.fit_basis(training_frfs, "accelerance",
                                cfg.pca.accel_components, cfg.pca.rel_floor)
    strain_basis = pca.fit_basis(training_frfs, "strain",
                                 cfg.pca.strain_components, cfg.pca.rel_floor)
    features = tuple(pca.project(f, accel_basis, strain_basis) for f in frfs)
    return FingerprintDataset(scenarios=tuple(scenarios), features=features,
                              train_idx=train_idx, val_idx=val_idx, test_idx=test_idx,
                              accel_basis=accel_basis, strain_basis=strain_basis,
                              healthy_present=healthy_present)


def dataset_from_artifacts(frfs: list[FrfMatrix], scenarios: list[DamageScenario],
                           splits: dict, accel_basis: PcaBasis,
                           strain_basis: PcaBasis) -> FingerprintDataset:
    """Rebuild the fingerprint dataset from persisted FRFs, split, and an
    already-fitted basis pair (never refits)."""
    if len(frfs) != len(scenarios):
        raise IdentifyError("FRF count does not match scenario count")
    features = tuple(pca.project(f, accel_basis, strain_basis) for f in frfs)
    return FingerprintDataset(scenarios=tuple(scenarios), features=features,
                              train_idx=np.asarray(splits["train"], dtype=np.intp),
                              val_idx=np.asarray(splits["val"], dtype=np.intp),
                              test_idx=np.asarray(splits["test"], dtype=np.intp),
                              accel_basis=accel_basis, strain_basis=strain_basis,
                              healthy_present=any(not s.is_damaged for s in scenarios))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _standardize_columns(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def ensemble_retrain(train_set: TrainingSet, val_set: TrainingSet, sizes,
                     activations, params: TrainParams, n_restarts: int,
                     seed: int):
    """Train ``n_restarts`` networks from distinct starting weights and
    keep the best by validation MSE (first wins ties). Returns
    (best net, best history, list of (restart val MSEs))."""
    if n_restarts < 1:
        raise IdentifyError("n_restarts must be >= 1")
    best = None
    val_mses = []
    for r in range(n_restarts):
        p = replace(params, init_seed=derive_seed(seed, "init", r),
                    shuffle_seed=derive_seed(seed, "shuffle", r))
        net = mlp.init_network(sizes, activations, seed=p.init_seed,
                               init_scale=p.init_scale)
        trained, history = mlp.train_regularized(net, train_set, p)
        val_mse = mlp.mse(trained, val_set)
        val_mses.append(val_mse)
        if best is None or val_mse < best[2]:
            best = (trained, history, val_mse, r)
    return best[0], best[1], val_mses


def _select_lambda(train_set, val_set, sizes, activations, base: TrainParams,
                   task: TaskParams, seed: int) -> float:
    if len(task.lambda_grid) == 1:
        return task.lambda_grid[0]
    best_lam, best_val = None, np.inf
    trial = replace(base, max_epochs=task.trial_epochs)
    for li, lam in enumerate(task.lambda_grid):
        p = replace(trial, l2_lambda=lam,
                    init_seed=derive_seed(seed, "trial-init", li),
                    shuffle_seed=derive_seed(seed, "trial-shuffle", li))
        net = mlp.init_network(sizes, activations, seed=p.init_seed)
        trained, _ = mlp.train_regularized(net, train_set, p)
        val = mlp.mse(trained, val_set)
        if val < best_val:
            best_lam, best_val = lam, val
    return best_lam


def train_localizer(dataset: FingerprintDataset, task: TaskParams,
                    threshold: float, seed: int) -> tuple[TrainedModel, list]:
    """Fit the 34-output rivet indicator network on standardized
    fingerprints; weight-decay strength comes from a short validation
    sweep over the configured grid."""
    sets = dataset.localization_sets()
    mean, std = _standardize_columns(sets["train"].inputs)
    std_sets = {k: TrainingSet((s.inputs - mean) / std, s.targets)
                for k, s in sets.items()}
    sizes = (mean.size, task.hidden, N_RIVETS)
    activations = ["sigmoid", "sigmoid"]
    base = TrainParams(alpha=task.alpha, max_epochs=task.max_epochs,
                       target_mse=task.target_mse)
    lam = _select_lambda(std_sets["train"], std_sets["val"], sizes, activations,
                         base, task, derive_seed(seed, "lambda"))
    params = replace(base, l2_lambda=lam)
    net, history, restart_mses = ensemble_retrain(
        std_sets["train"], std_sets["val"], sizes, activations, params,
        task.n_restarts, derive_seed(seed, "restarts"))
    val_mse = mlp.mse(net, std_sets["val"])
    model = TrainedModel(net=net, task="localize", basis_id=dataset.basis_id,
                         feature_mean=mean, feature_std=std, threshold=threshold,
                         metadata={"l2_lambda": lam, "alpha": task.alpha,
                                   "epochs_run": len(history),
                                   "final_train_mse": history[-1][0],
                                   "val_mse": val_mse,
                                   "restart_val_mses": restart_mses,
                                   "seed": seed})
    return model, history


def train_severity(dataset: FingerprintDataset, kind: str, task: TaskParams,
                   seed: int) -> tuple[TrainedModel, list]:
    """Fit one scalar regressor per damage kind (linear output layer,
    standardized targets)."""
    sets = dataset.severity_sets(kind)
    if sets["train"].n_patterns < 2 or sets["val"].n_patterns < 1:
        raise IdentifyError(f"not enough {kind} scenarios to train severity")
    mean, std = _standardize_columns(sets["train"].inputs)
    t_mean = float(sets["train"].targets.mean())
    t_std = float(sets["train"].targets.std())
    t_std = t_std if t_std > 1e-12 else 1.0
    std_sets = {k: TrainingSet((s.inputs - mean) / std, (s.targets - t_mean) / t_std)
                for k, s in sets.items()}
    sizes = (mean.size, task.hidden, 1)
    activations = ["sigmoid", "linear"]
    base = TrainParams(alpha=task.alpha, max_epochs=task.max_epochs,
                       target_mse=task.target_mse)
    lam = _select_lambda(std_sets["train"], std_sets["val"], sizes, activations,
                         base, task, derive_seed(seed, f"lambda:{kind}"))
    params = replace(base, l2_lambda=lam)
    net, history, restart_mses = ensemble_retrain(
        std_sets["train"], std_sets["val"], sizes, activations, params,
        task.n_restarts, derive_seed(seed, f"restarts:{kind}"))
    model = TrainedModel(net=net, task=f"severity:{kind}", basis_id=dataset.basis_id,
                         feature_mean=mean, feature_std=std,
                         target_mean=t_mean, target_std=t_std,
                         metadata={"l2_lambda": lam, "alpha": task.alpha,
                                   "epochs_run": len(history),
                                   "final_train_mse": history[-1][0],
                                   "val_mse": mlp.mse(net, std_sets["val"]),
                                   "restart_val_mses": restart_mses,
                                   "seed": seed})
    return model, history


# ---------------------------------------------------------------------------
# inference and evaluation
# ---------------------------------------------------------------------------

def localize(feature: FeatureVector, model: TrainedModel,
             threshold: float | None = None) -> RivetVector:
    """Score all 34 rivets from one fingerprint and threshold to bits."""
    if model.task != "localize":
        raise IdentifyError(f"model task is {model.task!r}, not localize")
    thr = model.threshold if threshold is None else float(threshold)
    scores, _ = mlp.forward(model.net, model.standardize(feature))
    ranked = tuple(int(i) for i in np.argsort(-scores, kind="stable"))
    return RivetVector(scores=scores, binary=scores >= thr, threshold=thr,
                       top_ranked=ranked)


def estimate_severity(feature: FeatureVector, model: TrainedModel, kind: str,
                      rivet: int = -1) -> SeverityEstimate:
    """Physical-units severity from one fingerprint; clamped at zero."""
    if model.task != f"severity:{kind}":
        raise IdentifyError(f"model task {model.task!r} does not match kind {kind!r}")
    raw, _ = mlp.forward(model.net, model.standardize(feature))
    value = float(raw[0]) * model.target_std + model.target_mean
    return SeverityEstimate(damage_kind=kind, value=max(value, 0.0), rivet=int(rivet))


def _scenario_hit(flagged, true_rivets, adjacency) -> bool:
    # adjacent-rivet credit: a true rivet counts as found if it or one of
    # its direct neighbours is flagged; healthy scenarios are vacuously hit
    flag_set = set(flagged)
    for r in true_rivets:
        allowed = {r} | set(adjacency[r])
        if not (allowed & flag_set):
            return False
    return True


def evaluate(system: DamageIdSystem, features: list[FeatureVector],
             scenarios: list[DamageScenario]) -> EvaluationReport:
    """Score a held-out scenario set.

    misclassification_pct counts every wrong rivet bit over 34 x N
    decisions; hit rate requires each true rivet (or a direct neighbour)
    to be flagged; severity errors are relative to the true magnitude,
    averaged over damaged scenarios of each kind.
    """
    if len(features) != len(scenarios) or not scenarios:
        raise IdentifyError("features and scenarios must align and be non-empty")
    records = []
    wrong_total = 0
    hits = 0
    rel_errs: dict[str, list[float]] = {k: [] for k in SEVERITY_KINDS}
    for i, (feature, scenario) in enumerate(zip(features, scenarios)):
        rv = localize(feature, system.localizer)
        truth = localization_target(scenario) >= 0.5
        wrong = int(np.sum(rv.binary != truth))
        wrong_total += wrong
        hit = _scenario_hit(rv.flagged, scenario.rivets, system.adjacency)
        hits += hit
        pred_sev = None
        true_sev = float(np.mean(scenario.severity)) if scenario.is_damaged else 0.0
        if scenario.is_damaged and scenario.kind in system.severity_models:
            est = estimate_severity(feature, system.severity_models[scenario.kind],
                                    scenario.kind, rivet=rv.top_ranked[0])
            pred_sev = est.value
            if true_sev > 0:
                rel_errs[scenario.kind].append(abs(pred_sev - true_sev) / true_sev)
        records.append(ScenarioRecord(index=i, kind=scenario.kind,
                                      true_rivets=scenario.rivets,
                                      true_severity=true_sev,
                                      predicted_severity=pred_sev,
                                      scores=rv.scores, flagged=rv.flagged,
                                      wrong_bits=wrong, hit=hit))
    n = len(scenarios)
    sev_err = {k: (100.0 * float(np.mean(v)) if v else float("nan"))
               for k, v in rel_errs.items()}
    return EvaluationReport(
        misclassification_pct=100.0 * wrong_total / (N_RIVETS * n),
        localization_hit_rate=hits / n,
        severity_mean_rel_err_pct=sev_err,
        records=tuple(records))


def train_system(dataset: FingerprintDataset, cfg: RunConfig,
                 adjacency) -> tuple[DamageIdSystem, dict]:
    """Train the localizer and all severity networks on one dataset."""
    seed = derive_seed(cfg.master_seed, "training")
    localizer, loc_history = train_localizer(dataset, cfg.localizer,
                                             cfg.threshold, derive_seed(seed, "localize"))
    severity_models = {}
    histories = {"localize": loc_history}
    for kind in SEVERITY_KINDS:
        model, history = train_severity(dataset, kind, cfg.severity,
                                        derive_seed(seed, kind))
        severity_models[kind] = model
        histories[f"severity:{kind}"] = history
    system = DamageIdSystem(accel_basis=dataset.accel_basis,
                            strain_basis=dataset.strain_basis,
                            localizer=localizer,
                            severity_models=severity_models,
                            adjacency=tuple(adjacency))
    return system, histories
