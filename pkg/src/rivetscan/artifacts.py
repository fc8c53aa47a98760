"""Schema bindings between pipeline objects and container files.

Schemas: ``frf_matrix`` (one FRF), ``frf_dataset`` (stacked estimated FRFs
for a scenario sweep plus the split), ``time_records`` (an excitation or
response ensemble), ``pca_basis`` (per-channel component bases of one
block), ``mlp_model`` (a task network with its standardization and
training metadata).
"""

from __future__ import annotations

import numpy as np

from .container import ContainerError, read_container, write_container
from .identify import TrainedModel
from .mlp import Layer, MlpNetwork
from .panel import DamageScenario
from .pca import ChannelPca, PcaBasis
from .signals import FrfMatrix, TimeSignal


def save_frf_matrix(path, frf: FrfMatrix, metadata: dict | None = None) -> str:
    meta = dict(metadata or {})
    meta.update({"channel_kinds": list(frf.channel_kinds), "n_averages": frf.n_averages})
    return write_container(path, "frf_matrix",
                           {"values": frf.values, "freq_bins": frf.freq_bins}, meta)


def load_frf_matrix(path) -> FrfMatrix:
    arrays, meta, _ = read_container(path, expect_schema="frf_matrix")
    return FrfMatrix(values=arrays["values"], freq_bins=arrays["freq_bins"],
                     channel_kinds=tuple(meta["channel_kinds"]),
                     n_averages=int(meta["n_averages"]))


def _scenario_to_dict(s: DamageScenario) -> dict:
    return {"kind": s.kind, "rivets": list(s.rivets), "severity": list(s.severity)}


def _scenario_from_dict(d: dict) -> DamageScenario:
    return DamageScenario(kind=d["kind"], rivets=tuple(d["rivets"]),
                          severity=tuple(d["severity"]))


def save_frf_dataset(path, values: np.ndarray, freq_bins: np.ndarray,
                     channel_kinds, scenarios, splits: dict,
                     metadata: dict | None = None) -> str:
    """Stacked estimated FRFs (n_scenarios x n_channels x n_bins)."""
    meta = dict(metadata or {})
    meta.update({
        "channel_kinds": list(channel_kinds),
        "scenarios": [_scenario_to_dict(s) for s in scenarios],
        "splits": {k: [int(i) for i in v] for k, v in splits.items()},
    })
    return write_container(path, "frf_dataset",
                           {"values": values, "freq_bins": freq_bins}, meta)


def load_frf_dataset(path):
    arrays, meta, _ = read_container(path, expect_schema="frf_dataset")
    scenarios = [_scenario_from_dict(d) for d in meta["scenarios"]]
    splits = {k: np.asarray(v, dtype=np.intp) for k, v in meta["splits"].items()}
    return (arrays["values"], arrays["freq_bins"], tuple(meta["channel_kinds"]),
            scenarios, splits, meta)


def frf_from_dataset(values, freq_bins, channel_kinds, index: int,
                     n_averages: int = 1) -> FrfMatrix:
    if not 0 <= index < values.shape[0]:
        raise ContainerError(f"scenario index {index} outside dataset of {values.shape[0]}")
    return FrfMatrix(values=values[index], freq_bins=freq_bins,
                     channel_kinds=channel_kinds, n_averages=n_averages)


def save_time_records(path, records: list[TimeSignal], metadata: dict | None = None) -> str:
    meta = dict(metadata or {})
    meta.update({"dt": records[0].dt,
                 "seeds": [r.seed for r in records]})
    samples = np.stack([r.samples for r in records])
    return write_container(path, "time_records", {"samples": samples}, meta)


def load_time_records(path) -> list[TimeSignal]:
    arrays, meta, _ = read_container(path, expect_schema="time_records")
    seeds = meta["seeds"]
    return [TimeSignal(samples=row, dt=float(meta["dt"]), seed=seeds[i])
            for i, row in enumerate(arrays["samples"])]


def save_pca_basis(path, basis: PcaBasis, metadata: dict | None = None) -> str:
    meta = dict(metadata or {})
    meta.update({
        "block": basis.block,
        "channel_indices": list(basis.channel_indices),
        "n_keep": basis.n_keep,
        "basis_id": basis.basis_id,
        "floors": [ch.floor for ch in basis.channels],
        "degenerate": [bool(ch.degenerate) for ch in basis.channels],
        "total_variance": [ch.total_variance for ch in basis.channels],
    })
    arrays = {
        "means": np.stack([ch.mean for ch in basis.channels]),
        "components": np.stack([ch.components for ch in basis.channels]),
        "eigenvalues": np.stack([ch.eigenvalues for ch in basis.channels]),
    }
    return write_container(path, "pca_basis", arrays, meta)


def load_pca_basis(path) -> PcaBasis:
    arrays, meta, _ = read_container(path, expect_schema="pca_basis")
    channels = []
    for i in range(arrays["means"].shape[0]):
        channels.append(ChannelPca(
            mean=arrays["means"][i],
            components=arrays["components"][i],
            eigenvalues=arrays["eigenvalues"][i],
            total_variance=float(meta["total_variance"][i]),
            floor=float(meta["floors"][i]),
            degenerate=bool(meta["degenerate"][i])))
    return PcaBasis(block=meta["block"],
                    channel_indices=tuple(meta["channel_indices"]),
                    channels=tuple(channels), n_keep=int(meta["n_keep"]),
                    basis_id=meta["basis_id"])


def save_model(path, model: TrainedModel, metadata: dict | None = None) -> str:
    meta = dict(metadata or {})
    meta.update({
        "task": model.task,
        "basis_id": model.basis_id,
        "threshold": model.threshold,
        "target_mean": model.target_mean,
        "target_std": model.target_std,
        "sizes": list(model.net.sizes),
        "activations": [layer.activation for layer in model.net.layers],
        "training": model.metadata,
    })
    arrays = {"feature_mean": model.feature_mean, "feature_std": model.feature_std}
    for i, layer in enumerate(model.net.layers):
        arrays[f"weights_{i}"] = layer.weights
        arrays[f"bias_{i}"] = layer.bias
    return write_container(path, "mlp_model", arrays, meta)


def load_model(path) -> TrainedModel:
    arrays, meta, _ = read_container(path, expect_schema="mlp_model")
    layers = []
    for i, activation in enumerate(meta["activations"]):
        layers.append(Layer(weights=arrays[f"weights_{i}"],
                            bias=arrays[f"bias_{i}"], activation=activation))
    return TrainedModel(net=MlpNetwork(layers), task=meta["task"],
                        basis_id=meta["basis_id"],
                        feature_mean=arrays["feature_mean"],
                        feature_std=arrays["feature_std"],
                        target_mean=float(meta["target_mean"]),
                        target_std=float(meta["target_std"]),
                        threshold=float(meta["threshold"]),
                        metadata=meta.get("training", {}))
