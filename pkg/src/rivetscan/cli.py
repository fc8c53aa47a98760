"""Command-line pipeline driver.

Subcommands mirror the batch stages: ``simulate`` builds the measured-FRF
dataset, ``fit-pca`` fits the fingerprint bases on the training split,
``train`` fits one task network, ``evaluate`` scores the held-out split
and writes the report (text, JSON, CSV, and figures), ``infer`` runs one
saved network on one FRF file, and ``reproduce`` chains everything.

Exit codes: 0 success, 2 configuration error, 3 data error (missing or
corrupt artifacts), 4 contract violation (mismatched bases, bad inputs),
1 unexpected failure. All outputs are deterministic for a given config
and seed except ``run_log.txt``, the timing sidecar.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import artifacts, identify, pca, report as report_mod
from .config import (ConfigError, RunConfig, default_run_config, derive_seed,
                     load_run_config, resolve_panel_config, save_panel_config,
                     save_run_config)
from .container import ContainerError
from .identify import (BasisMismatchError, IdentifyError, SEVERITY_KINDS,
                       dataset_from_artifacts, scenario_grid)
from .mlp import MlpError
from .panel import PanelError, build_panel
from .pca import PcaError
from .signals import FrequencyGrid, SignalError

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONTRACT = 4

SEVERITY_UNITS = report_mod.SEVERITY_UNITS


class StageError(Exception):
    def __init__(self, stage: str, message: str, code: int):
        super().__init__(f"[{stage}] {message}")
        self.code = code


def _log(args, message: str) -> None:
    if args.verbose:
        print(message, file=sys.stderr)


def _load_config(args) -> RunConfig:
    if args.config:
        cfg = load_run_config(args.config)
    else:
        cfg = default_run_config()
    if args.seed is not None:
        cfg = _replace(cfg, master_seed=args.seed)
    if args.out is not None:
        cfg = _replace(cfg, out_dir=args.out)
    if getattr(args, "threshold", None) is not None:
        cfg = _replace(cfg, threshold=args.threshold)
    return cfg


def _replace(cfg: RunConfig, **kw) -> RunConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Path, stage: str) -> Path:
    if not path.is_file():
        raise StageError(stage, f"missing upstream artifact {path}", EXIT_DATA)
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args) -> Path:
    out = _out_dir(cfg)
    panel_cfg = resolve_panel_config(cfg)
    save_panel_config(panel_cfg, out / "panel.cfg")
    # the resolved copy lives in the run directory: normalize the
    # self-referential paths so copies are byte-identical across locations
    # and the pair (run.cfg, panel.cfg) is self-contained
    save_run_config(_replace(cfg, out_dir=".", panel_config_path="panel.cfg"),
                    out / "run.cfg")
    model = build_panel(panel_cfg)
    scenarios = scenario_grid(cfg.scenarios.crack_lengths_mm,
                              cfg.scenarios.hole_expansion_fractions,
                              cfg.scenarios.added_masses_kg,
                              cfg.scenarios.n_healthy)
    grid = FrequencyGrid(cfg.signal.f_max_hz, cfg.signal.n_bins)
    n_modes = min(panel_cfg.n_modes, model.n_dof)
    values = np.empty((len(scenarios), model.sensor_layout.n_channels, grid.n_bins),
                      dtype=np.complex128)
    freq = None
    for i, scenario in enumerate(scenarios):
        frf = identify.estimate_scenario_frf(
            model, scenario, grid, n_modes, cfg.signal.n_records,
            cfg.signal.sigma_n, cfg.signal.snr_db,
            excitation_seed=derive_seed(cfg.master_seed, "excitation", i),
            noise_seed=derive_seed(cfg.master_seed, "noise", i * cfg.signal.n_records))
        values[i] = frf.values
        freq = frf.freq_bins
        if args.verbose and (i + 1) % 50 == 0:
            _log(args, f"  simulated {i + 1}/{len(scenarios)} scenarios")
    train_idx, val_idx, test_idx = identify.split_indices(
        len(scenarios), (cfg.split.train, cfg.split.val, cfg.split.test),
        derive_seed(cfg.master_seed, "split"))
    path = out / "dataset.frfd"
    artifacts.save_frf_dataset(
        path, values, freq, model.sensor_layout.channel_kinds, scenarios,
        {"train": train_idx, "val": val_idx, "test": test_idx},
        metadata={"master_seed": cfg.master_seed,
                  "n_records": cfg.signal.n_records,
                  "snr_db": cfg.signal.snr_db,
                  "sigma_n": cfg.signal.sigma_n})
    _log(args, f"wrote {path}")
    return path


def _load_dataset(out: Path, stage: str):
    values, freq, kinds, scenarios, splits, meta = artifacts.load_frf_dataset(
        _require(out / "dataset.frfd", stage))
    n_avg = int(meta.get("n_records", 1))
    frfs = [artifacts.frf_from_dataset(values, freq, kinds, i, n_avg)
            for i in range(values.shape[0])]
    return frfs, scenarios, splits, meta


def cmd_fit_pca(cfg: RunConfig, args) -> tuple[Path, Path]:
    out = _out_dir(cfg)
    frfs, scenarios, splits, _ = _load_dataset(out, "fit-pca")
    training = [frfs[i] for i in splits["train"]]
    accel = pca.fit_basis(training, "accelerance", cfg.pca.accel_components,
                              cfg.pca.rel_floor)
    strain = pca.fit_basis(training, "strain", cfg.pca.strain_components,
                               cfg.pca.rel_floor)
    pa = out / "basis_accel.frfd"
    ps = out / "basis_strain.frfd"
    artifacts.save_pca_basis(pa, accel)
    artifacts.save_pca_basis(ps, strain)
    _log(args, f"wrote {pa} and {ps}")
    return pa, ps


def _load_fingerprints(cfg: RunConfig, out: Path, stage: str):
    frfs, scenarios, splits, _ = _load_dataset(out, stage)
    accel = artifacts.load_pca_basis(_require(out / "basis_accel.frfd", stage))
    strain = artifacts.load_pca_basis(_require(out / "basis_strain.frfd", stage))
    return dataset_from_artifacts(frfs, scenarios, splits, accel, strain)


def _model_filename(task: str) -> str:
    return "model_" + task.replace(":", "_") + ".frfd"


def cmd_train(cfg: RunConfig, args, task: str) -> Path:
    valid = ["localize"] + [f"severity:{k}" for k in SEVERITY_KINDS]
    if task not in valid:
        raise StageError("train", f"unknown task {task!r} (expected one of {valid})",
                         EXIT_CONFIG)
    out = _out_dir(cfg)
    dataset = _load_fingerprints(cfg, out, "train")
    seed = derive_seed(cfg.master_seed, "training")
    if task == "localize":
        model, history = identify.train_localizer(
            dataset, cfg.localizer, cfg.threshold, derive_seed(seed, "localize"))
    else:
        kind = task.split(":", 1)[1]
        model, history = identify.train_severity(dataset, kind, cfg.severity,
                                                 derive_seed(seed, kind))
    path = out / _model_filename(task)
    artifacts.save_model(path, model)
    report_mod.write_history_csv(history, out / f"history_{task.replace(':', '_')}.csv")
    _log(args, f"wrote {path}")
    return path


def _load_system(cfg: RunConfig, out: Path, stage: str) -> identify.DamageIdSystem:
    accel = artifacts.load_pca_basis(_require(out / "basis_accel.frfd", stage))
    strain = artifacts.load_pca_basis(_require(out / "basis_strain.frfd", stage))
    localizer = artifacts.load_model(_require(out / _model_filename("localize"), stage))
    severity = {}
    for kind in SEVERITY_KINDS:
        severity[kind] = artifacts.load_model(
            _require(out / _model_filename(f"severity:{kind}"), stage))
    panel_cfg = resolve_panel_config(cfg)
    model = build_panel(panel_cfg)
    adjacency = identify.rivet_adjacency(model)
    return identify.DamageIdSystem(accel_basis=accel, strain_basis=strain,
                                   localizer=localizer, severity_models=severity,
                                   adjacency=adjacency)


def cmd_evaluate(cfg: RunConfig, args) -> identify.EvaluationReport:
    out = _out_dir(cfg)
    dataset = _load_fingerprints(cfg, out, "evaluate")
    system = _load_system(cfg, out, "evaluate")
    if system.localizer.basis_id != dataset.basis_id:
        raise BasisMismatchError(
            "trained models and current fingerprints use different bases")
    test_features = [dataset.features[i] for i in dataset.test_idx]
    test_scenarios = [dataset.scenarios[i] for i in dataset.test_idx]
    result = identify.evaluate(system, test_features, test_scenarios)
    report_mod.write_report_text(result, out / "report.txt")
    report_mod.write_report_json(result, out / "report.json")
    report_mod.write_records_csv(result, out / "records.csv")

    histories = {}
    for task in ["localize"] + [f"severity:{k}" for k in SEVERITY_KINDS]:
        hist_path = out / f"history_{task.replace(':', '_')}.csv"
        if hist_path.is_file():
            rows = hist_path.read_text().strip().splitlines()[1:]
            histories[task] = [float(r.split(",")[1]) for r in rows]
    fingerprints = _fingerprint_examples(dataset)
    report_mod.render_report_figures(result, histories, fingerprints, out / "figures")
    _log(args, f"wrote report files under {out}")
    return result


def _fingerprint_examples(dataset) -> dict[str, np.ndarray]:
    """A healthy fingerprint plus crack fingerprints at spread-out rivets."""
    out = {}
    want_rivets = (2, 16, 25)
    for i, scenario in enumerate(dataset.scenarios):
        if scenario.kind == "healthy" and "healthy" not in out:
            out["healthy"] = dataset.features[i].values
        elif (scenario.kind == "crack" and len(scenario.rivets) == 1
              and scenario.rivets[0] in want_rivets):
            label = f"crack rivet {scenario.rivets[0]}"
            if label not in out and abs(scenario.severity[0] - 11.5) < 1e-9:
                out[label] = dataset.features[i].values
    return out


def cmd_infer(args) -> int:
    model = artifacts.load_model(_require(Path(args.model), "infer"))
    frf_path = _require(Path(args.frf), "infer")
    arrays_meta = None
    try:
        frf = artifacts.load_frf_matrix(frf_path)
    except ContainerError:
        values, freq, kinds, scenarios, splits, meta = artifacts.load_frf_dataset(frf_path)
        frf = artifacts.frf_from_dataset(values, freq, kinds, args.index,
                                         int(meta.get("n_records", 1)))
        arrays_meta = meta
    model_dir = Path(args.model).parent
    accel = artifacts.load_pca_basis(
        Path(args.basis_accel) if args.basis_accel else model_dir / "basis_accel.frfd")
    strain = artifacts.load_pca_basis(
        Path(args.basis_strain) if args.basis_strain else model_dir / "basis_strain.frfd")
    feature = pca.project(frf, accel, strain)

    lines = [f"inference report ({model.task})",
             f"fingerprint basis : {feature.basis_id[:16]}"]
    if model.task == "localize":
        rv = identify.localize(feature, model, threshold=args.threshold)
        flagged = ", ".join(str(r) for r in rv.flagged) if rv.flagged else "none"
        lines.append(f"threshold         : {rv.threshold}")
        lines.append(f"flagged rivets    : {flagged}")
        top = ", ".join(f"r{r}={rv.scores[r]:.3f}" for r in rv.top_ranked[:5])
        lines.append(f"top-5 scores      : {top}")
    else:
        kind = model.task.split(":", 1)[1]
        est = identify.estimate_severity(feature, model, kind)
        lines.append(f"damage kind       : {kind}")
        lines.append(f"estimated severity: {est.value:.4f} {SEVERITY_UNITS[kind]}")
    if arrays_meta is not None:
        lines.append(f"(scenario index {args.index} of dataset {frf_path.name})")
    print("\n".join(lines))
    return EXIT_OK


def cmd_reproduce(cfg: RunConfig, args) -> identify.EvaluationReport:
    out = _out_dir(cfg)
    log_lines = []

    def stage(name, fn):
        t0 = time.perf_counter()
        result = fn()
        elapsed = time.perf_counter() - t0
        log_lines.append(f"{name}: {elapsed:.1f} s")
        _log(args, f"stage {name} done in {elapsed:.1f} s")
        return result, elapsed

    _, t_sim = stage("simulate", lambda: cmd_simulate(cfg, args))
    _, t_pca = stage("fit-pca", lambda: cmd_fit_pca(cfg, args))
    for task in ["localize"] + [f"severity:{k}" for k in SEVERITY_KINDS]:
        stage(f"train:{task}", lambda t=task: cmd_train(cfg, args, t))
    result, _ = stage("evaluate", lambda: cmd_evaluate(cfg, args))

    d = report_mod.report_as_dict(result)
    sev_lines = []
    for kind in SEVERITY_KINDS:
        err = d["severity_mean_rel_err_pct"][kind]
        sev_lines.append(f"severity_rel_err_{kind}_pct = "
                         + ("nan" if err is None else f"{err:.4f}"))
    summary = "\n".join([
        "reproduce summary",
        "=================",
        f"master_seed = {cfg.master_seed}",
        f"scenarios = {len(artifacts.load_frf_dataset(out / 'dataset.frfd')[3])}",
        f"test_scenarios = {d['n_scenarios']}",
        f"misclassification_pct = {d['misclassification_pct']:.4f}",
        f"localization_hit_rate = {d['localization_hit_rate']:.4f}",
        *sev_lines,
        "",
    ])
    (out / "summary.txt").write_text(summary)
    # wall-clock sidecar: the single non-deterministic output
    (out / "run_log.txt").write_text(
        "\n".join([f"started_unix: {time.time():.0f}"] + log_lines) + "\n")
    print(summary)
    return result


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rivetscan",
        description="FRF-fingerprint damage localization pipeline for a "
                    "riveted stiffened panel")
    parser.add_argument("--verbose", action="store_true", help="progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config file (INI); defaults built in")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--threshold", type=float, default=None,
                       help="override the localization decision threshold")
        p.add_argument("--verbose", action="store_true")

    common(sub.add_parser("simulate", help="synthesize the measured-FRF dataset"))
    common(sub.add_parser("fit-pca", help="fit fingerprint bases on the training split"))
    p_train = sub.add_parser("train", help="train one task network")
    common(p_train)
    p_train.add_argument("--task", required=True,
                         help="localize or severity:<crack|hole_expansion|added_mass>")
    common(sub.add_parser("evaluate", help="score the test split and write reports"))
    common(sub.add_parser("reproduce", help="run the whole pipeline and summarize"))

    p_infer = sub.add_parser("infer", help="run one saved model on one FRF file")
    p_infer.add_argument("--model", required=True)
    p_infer.add_argument("--frf", required=True)
    p_infer.add_argument("--index", type=int, default=0,
                         help="scenario index when --frf is a dataset file")
    p_infer.add_argument("--threshold", type=float, default=None)
    p_infer.add_argument("--basis-accel", default=None)
    p_infer.add_argument("--basis-strain", default=None)
    p_infer.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "infer":
            return cmd_infer(args)
        cfg = _load_config(args)
        if args.command == "simulate":
            cmd_simulate(cfg, args)
        elif args.command == "fit-pca":
            cmd_fit_pca(cfg, args)
        elif args.command == "train":
            cmd_train(cfg, args, args.task)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args)
        elif args.command == "reproduce":
            cmd_reproduce(cfg, args)
        return EXIT_OK
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContainerError as exc:
        print(f"error: [data] {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: [data] {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BasisMismatchError, IdentifyError, PanelError, SignalError,
            PcaError, MlpError) as exc:
        print(f"error: [contract] {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except Exception as exc:  # keep a stable nonzero code for the unexpected
        print(f"error: [unexpected] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
