"""Run configuration, INI schemas, and deterministic seed fan-out.

Two key-value files drive a batch run:

* the panel file (sections ``[grid] [material] [rivets] [sensors]``)
  fixing the surrogate structure, and
* the run file (sections ``[run] [scenarios] [signal] [pca] [split]
  [localizer] [severity]``) fixing the scenario grid, signal processing,
  fingerprint, and training parameters.

Every random stage draws its seed from one master seed through
:func:`derive_seed`, a counter scheme over SHA-256, so any stage can be
re-run in isolation and still reproduce the batch bit for bit.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from hashlib import sha256
from pathlib import Path

from .panel import PanelConfig, default_panel_config


class ConfigError(ValueError):
    """Unreadable or inconsistent configuration input."""


def derive_seed(master_seed: int, stage: str, counter: int = 0) -> int:
    """Stage seed = first 8 little-endian bytes of SHA-256("master:stage:counter")."""
    digest = sha256(f"{master_seed}:{stage}:{counter}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class ScenarioGridParams:
    crack_lengths_mm: tuple[float, ...] = (2.5, 4.75, 7.0, 9.25, 11.5,
                                           13.75, 16.0, 18.25, 20.5, 22.75)
    hole_expansion_fractions: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    added_masses_kg: tuple[float, ...] = (0.004, 0.008, 0.012, 0.016, 0.02)
    n_healthy: int = 30


@dataclass(frozen=True)
class SignalParams:
    f_max_hz: float = 1000.0
    n_bins: int = 2048
    n_records: int = 10
    sigma_n: float = 1.0
    snr_db: float | None = 40.0


@dataclass(frozen=True)
class PcaParams:
    accel_components: int = 7
    strain_components: int = 4
    rel_floor: float = 0.45


@dataclass(frozen=True)
class SplitParams:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15

    def __post_init__(self):
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {total}")
        if min(self.train, self.val, self.test) <= 0:
            raise ConfigError("split fractions must be positive")


@dataclass(frozen=True)
class TaskParams:
    hidden: int = 30
    alpha: float = 0.05
    max_epochs: int = 400
    target_mse: float = 1e-4
    lambda_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2)
    trial_epochs: int = 60
    n_restarts: int = 3


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 20260811
    out_dir: str = "runs/default"
    panel_config_path: str | None = None   # None -> built-in default panel
    scenarios: ScenarioGridParams = field(default_factory=ScenarioGridParams)
    signal: SignalParams = field(default_factory=SignalParams)
    pca: PcaParams = field(default_factory=PcaParams)
    split: SplitParams = field(default_factory=SplitParams)
    localizer: TaskParams = field(default_factory=TaskParams)
    severity: TaskParams = field(default_factory=lambda: TaskParams(
        alpha=0.01, lambda_grid=(1e-4,), n_restarts=1, target_mse=1e-5))
    threshold: float = 0.5


def default_run_config() -> RunConfig:
    return RunConfig()


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------

def _floats(text: str) -> tuple[float, ...]:
    items = [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]
    try:
        return tuple(float(t) for t in items)
    except ValueError as exc:
        raise ConfigError(f"expected a float list, got {text!r}") from exc


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(round(v)) for v in _floats(text))


def _pairs(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for token in text.replace("\n", ",").split(","):
        token = token.strip()
        if not token:
            continue
        parts = token.split(":")
        if len(parts) != 2:
            raise ConfigError(f"expected dof:dof pair, got {token!r}")
        out.append((int(parts[0]), int(parts[1])))
    return tuple(out)


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return parser


def _get(parser, section, key, conv=str, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"missing [{section}] {key}")
        return default
    try:
        return conv(parser.get(section, key))
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc


# ---------------------------------------------------------------------------
# panel config file
# ---------------------------------------------------------------------------

def load_panel_config(path) -> PanelConfig:
    """Parse a panel INI file into a PanelConfig."""
    p = _read_ini(path)
    try:
        base = PanelConfig(
            nx=_get(p, "grid", "nx", int, required=True),
            ny=_get(p, "grid", "ny", int, required=True),
            stiffener_rows=_get(p, "grid", "stiffener_rows", _ints, required=True),
            panel_node_mass=_get(p, "material", "panel_node_mass", float, required=True),
            stiffener_node_mass=_get(p, "material", "stiffener_node_mass", float, required=True),
            plate_stiffness=_get(p, "material", "plate_stiffness", float, required=True),
            stiffener_stiffness=_get(p, "material", "stiffener_stiffness", _floats, required=True),
            rivet_stiffness=_get(p, "material", "rivet_stiffness", float, required=True),
            support_stiffness=_get(p, "material", "support_stiffness", _floats, required=True),
            damping_ratio=_get(p, "material", "damping_ratio", float, required=True),
            n_modes=_get(p, "material", "n_modes", int, required=True),
            rivet_pairs=_get(p, "rivets", "pairs", _pairs, required=True),
            accel_channels=_parse_accel(_get(p, "sensors", "accel_channels", str, required=True)),
            strain_channels=_parse_strain(_get(p, "sensors", "strain_channels", str, required=True)),
            force_dof=_get(p, "sensors", "force_dof", int, required=True),
        )
    except configparser.Error as exc:
        raise ConfigError(f"malformed panel config {path}: {exc}") from exc
    if len(base.stiffener_rows) != 2:
        raise ConfigError("stiffener_rows needs exactly two entries")
    if len(base.stiffener_stiffness) != 2 or len(base.support_stiffness) != 2:
        raise ConfigError("stiffener_stiffness and support_stiffness need two entries each")
    return base


def _parse_accel(text: str) -> tuple[tuple[int, str], ...]:
    out = []
    for token in text.replace("\n", ",").split(","):
        token = token.strip()
        if not token:
            continue
        parts = token.split(":")
        if len(parts) != 2:
            raise ConfigError(f"expected dof:axis, got {token!r}")
        out.append((int(parts[0]), parts[1].strip()))
    return tuple(out)


def _parse_strain(text: str) -> tuple[tuple[int, int, float], ...]:
    out = []
    for token in text.replace("\n", ",").split(","):
        token = token.strip()
        if not token:
            continue
        parts = token.split(":")
        if len(parts) != 3:
            raise ConfigError(f"expected dofA:dofB:gauge_len, got {token!r}")
        out.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return tuple(out)


def save_panel_config(cfg: PanelConfig, path) -> None:
    lines = [
        "# Surrogate stiffened-panel description. Dof numbering:",
        "#   panel node (x, y)      -> y * nx + x",
        "#   stiffener s, node i    -> nx * ny + s * nx + i",
        "[grid]",
        f"nx = {cfg.nx}",
        f"ny = {cfg.ny}",
        f"stiffener_rows = {', '.join(str(r) for r in cfg.stiffener_rows)}",
        "",
        "[material]",
        f"panel_node_mass = {cfg.panel_node_mass!r}",
        f"stiffener_node_mass = {cfg.stiffener_node_mass!r}",
        f"plate_stiffness = {cfg.plate_stiffness!r}",
        f"stiffener_stiffness = {', '.join(repr(v) for v in cfg.stiffener_stiffness)}",
        f"rivet_stiffness = {cfg.rivet_stiffness!r}",
        f"support_stiffness = {', '.join(repr(v) for v in cfg.support_stiffness)}",
        f"damping_ratio = {cfg.damping_ratio!r}",
        f"n_modes = {cfg.n_modes}",
        "",
        "[rivets]",
        "pairs = " + ",\n    ".join(f"{a}:{b}" for a, b in cfg.rivet_pairs),
        "",
        "[sensors]",
        "accel_channels = " + ", ".join(f"{d}:{ax}" for d, ax in cfg.accel_channels),
        "strain_channels = " + ", ".join(f"{a}:{b}:{g!r}" for a, b, g in cfg.strain_channels),
        f"force_dof = {cfg.force_dof}",
        "",
    ]
    Path(path).write_text("\n".join(lines))


# ---------------------------------------------------------------------------
# run config file
# ---------------------------------------------------------------------------

def load_run_config(path) -> RunConfig:
    """Parse a run INI file; unset keys fall back to the built-in defaults."""
    p = _read_ini(path)
    d = default_run_config()
    snr_raw = _get(p, "signal", "snr_db", str, default=None)
    if snr_raw is not None:
        snr_raw = snr_raw.strip().lower()
    snr = d.signal.snr_db if snr_raw is None else (None if snr_raw == "none" else float(snr_raw))
    panel_path = _get(p, "run", "panel_config", str, default=None)
    if panel_path is not None and panel_path.strip().lower() in ("", "builtin"):
        panel_path = None
    elif panel_path is not None:
        base = Path(path).parent
        panel_path = str((base / panel_path).resolve())
        if not Path(panel_path).is_file():
            raise ConfigError(f"panel config path {panel_path} not resolvable")

    cfg = RunConfig(
        master_seed=_get(p, "run", "master_seed", int, default=d.master_seed),
        out_dir=_get(p, "run", "out_dir", str, default=d.out_dir),
        panel_config_path=panel_path,
        scenarios=ScenarioGridParams(
            crack_lengths_mm=_get(p, "scenarios", "crack_lengths_mm", _floats,
                                  default=d.scenarios.crack_lengths_mm),
            hole_expansion_fractions=_get(p, "scenarios", "hole_expansion_fractions",
                                          _floats, default=d.scenarios.hole_expansion_fractions),
            added_masses_kg=_get(p, "scenarios", "added_masses_kg", _floats,
                                 default=d.scenarios.added_masses_kg),
            n_healthy=_get(p, "scenarios", "n_healthy", int, default=d.scenarios.n_healthy),
        ),
        signal=SignalParams(
            f_max_hz=_get(p, "signal", "f_max_hz", float, default=d.signal.f_max_hz),
            n_bins=_get(p, "signal", "n_bins", int, default=d.signal.n_bins),
            n_records=_get(p, "signal", "n_records", int, default=d.signal.n_records),
            sigma_n=_get(p, "signal", "sigma_n", float, default=d.signal.sigma_n),
            snr_db=snr,
        ),
        pca=PcaParams(
            accel_components=_get(p, "pca", "accel_components", int,
                                  default=d.pca.accel_components),
            strain_components=_get(p, "pca", "strain_components", int,
                                   default=d.pca.strain_components),
            rel_floor=_get(p, "pca", "rel_floor", float, default=d.pca.rel_floor),
        ),
        split=SplitParams(
            train=_get(p, "split", "train", float, default=d.split.train),
            val=_get(p, "split", "val", float, default=d.split.val),
            test=_get(p, "split", "test", float, default=d.split.test),
        ),
        localizer=_task_params(p, "localizer", d.localizer),
        severity=_task_params(p, "severity", d.severity),
        threshold=_get(p, "localizer", "threshold", float, default=d.threshold),
    )
    if cfg.master_seed is None:
        raise ConfigError("master_seed is required")
    return cfg


def _task_params(parser, section, d: TaskParams) -> TaskParams:
    return TaskParams(
        hidden=_get(parser, section, "hidden", int, default=d.hidden),
        alpha=_get(parser, section, "alpha", float, default=d.alpha),
        max_epochs=_get(parser, section, "max_epochs", int, default=d.max_epochs),
        target_mse=_get(parser, section, "target_mse", float, default=d.target_mse),
        lambda_grid=_get(parser, section, "lambda_grid", _floats, default=d.lambda_grid),
        trial_epochs=_get(parser, section, "trial_epochs", int, default=d.trial_epochs),
        n_restarts=_get(parser, section, "n_restarts", int, default=d.n_restarts),
    )


def save_run_config(cfg: RunConfig, path) -> None:
    snr = "none" if cfg.signal.snr_db is None else repr(cfg.signal.snr_db)
    lines = [
        "# Batch-run parameters. Any key omitted falls back to built-in defaults.",
        "[run]",
        f"master_seed = {cfg.master_seed}",
        f"out_dir = {cfg.out_dir}",
        f"panel_config = {cfg.panel_config_path or 'builtin'}",
        "",
        "[scenarios]",
        "crack_lengths_mm = " + ", ".join(repr(v) for v in cfg.scenarios.crack_lengths_mm),
        "hole_expansion_fractions = " + ", ".join(
            repr(v) for v in cfg.scenarios.hole_expansion_fractions),
        "added_masses_kg = " + ", ".join(repr(v) for v in cfg.scenarios.added_masses_kg),
        f"n_healthy = {cfg.scenarios.n_healthy}",
        "",
        "[signal]",
        f"f_max_hz = {cfg.signal.f_max_hz!r}",
        f"n_bins = {cfg.signal.n_bins}",
        f"n_records = {cfg.signal.n_records}",
        f"sigma_n = {cfg.signal.sigma_n!r}",
        f"snr_db = {snr}",
        "",
        "[pca]",
        f"accel_components = {cfg.pca.accel_components}",
        f"strain_components = {cfg.pca.strain_components}",
        f"rel_floor = {cfg.pca.rel_floor!r}",
        "",
        "[split]",
        f"train = {cfg.split.train!r}",
        f"val = {cfg.split.val!r}",
        f"test = {cfg.split.test!r}",
        "",
        "[localizer]",
        f"hidden = {cfg.localizer.hidden}",
        f"alpha = {cfg.localizer.alpha!r}",
        f"max_epochs = {cfg.localizer.max_epochs}",
        f"target_mse = {cfg.localizer.target_mse!r}",
        "lambda_grid = " + ", ".join(repr(v) for v in cfg.localizer.lambda_grid),
        f"trial_epochs = {cfg.localizer.trial_epochs}",
        f"n_restarts = {cfg.localizer.n_restarts}",
        f"threshold = {cfg.threshold!r}",
        "",
        "[severity]",
        f"hidden = {cfg.severity.hidden}",
        f"alpha = {cfg.severity.alpha!r}",
        f"max_epochs = {cfg.severity.max_epochs}",
        f"target_mse = {cfg.severity.target_mse!r}",
        "lambda_grid = " + ", ".join(repr(v) for v in cfg.severity.lambda_grid),
        f"trial_epochs = {cfg.severity.trial_epochs}",
        f"n_restarts = {cfg.severity.n_restarts}",
        "",
    ]
    Path(path).write_text("\n".join(lines))


def resolve_panel_config(cfg: RunConfig) -> PanelConfig:
    if cfg.panel_config_path is None:
        return default_panel_config()
    return load_panel_config(cfg.panel_config_path)
