"""Lumped-parameter surrogate of a riveted stiffened panel.

The structure is a rectangular lattice of point masses carrying one
transverse degree of freedom each, coupled by linear springs. Two
stiffeners run along the panel as chains of extra masses, each attached
to the panel through 34 discrete rivet springs. Damage acts on those
joints: cracks and rivet-hole expansion degrade a joint's stiffness,
redundant mass loads its two end nodes.

Degree-of-freedom numbering (documented because configs and sensor
placements reference raw dof indices):

    panel node (x, y)        -> dof = y * nx + x          (0 <= x < nx, 0 <= y < ny)
    stiffener s, position i  -> dof = nx * ny + s * nx + i  (s in {0, 1})

Modal data comes from the generalized symmetric eigenproblem
K phi = lambda M phi; FRFs are synthesized by modal superposition with a
uniform modal damping ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .signals import ACCELERANCE, STRAIN, FrequencyGrid, FrfMatrix

N_RIVETS = 34
N_ACCEL_CHANNELS = 12
N_STRAIN_CHANNELS = 4
CRACK_LENGTH_REF_MM = 25.0
DAMAGE_KINDS = ("crack", "hole_expansion", "added_mass", "healthy")


class PanelError(ValueError):
    """Invalid panel configuration, damage scenario, or solver failure."""


@dataclass(frozen=True)
class SensorLayout:
    """Measurement channel map: 12 accelerometer channels (four tri-axial
    pickups, one dof per axis channel) and 4 strain gauges reading relative
    displacement across a dof pair divided by gauge length (m)."""
    accel_channels: tuple[tuple[int, str], ...]
    strain_channels: tuple[tuple[int, int, float], ...]
    force_dof: int

    def __post_init__(self):
        object.__setattr__(self, "accel_channels",
                           tuple((int(d), str(a)) for d, a in self.accel_channels))
        object.__setattr__(self, "strain_channels",
                           tuple((int(a), int(b), float(g)) for a, b, g in self.strain_channels))
        if len(self.accel_channels) != N_ACCEL_CHANNELS:
            raise PanelError(
                f"need exactly {N_ACCEL_CHANNELS} accelerometer channels, "
                f"got {len(self.accel_channels)}")
        if len(self.strain_channels) != N_STRAIN_CHANNELS:
            raise PanelError(
                f"need exactly {N_STRAIN_CHANNELS} strain channels, "
                f"got {len(self.strain_channels)}")
        for a, b, gauge in self.strain_channels:
            if not gauge > 0:
                raise PanelError(f"gauge length must be positive, got {gauge}")

    def max_dof(self) -> int:
        dofs = [d for d, _ in self.accel_channels]
        dofs += [d for pair in self.strain_channels for d in pair[:2]]
        dofs.append(self.force_dof)
        return max(dofs)

    @property
    def n_channels(self) -> int:
        return len(self.accel_channels) + len(self.strain_channels)

    @property
    def channel_kinds(self) -> tuple[str, ...]:
        return (ACCELERANCE,) * len(self.accel_channels) + (STRAIN,) * len(self.strain_channels)


@dataclass(frozen=True)
class DamageScenario:
    """One damage state: kind, affected rivet indices, per-rivet severity.

    Severity units by kind: crack length in mm (< 25), stiffness-loss
    fraction in [0, 1) for hole expansion, added mass in kg.
    """
    kind: str
    rivets: tuple[int, ...] = ()
    severity: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rivets", tuple(int(r) for r in self.rivets))
        object.__setattr__(self, "severity", tuple(float(s) for s in self.severity))
        if self.kind not in DAMAGE_KINDS:
            raise PanelError(f"unknown damage kind {self.kind!r}")
        if self.kind == "healthy":
            if self.rivets or self.severity:
                raise PanelError("healthy scenario must not list rivets or severities")
            return
        if len(self.rivets) != len(self.severity):
            raise PanelError("severity list length must equal rivet list length")
        if not self.rivets:
            raise PanelError(f"{self.kind} scenario needs at least one rivet")
        if len(set(self.rivets)) != len(self.rivets):
            raise PanelError("duplicate rivet indices in one scenario")
        for r in self.rivets:
            if not 0 <= r < N_RIVETS:
                raise PanelError(f"rivet index {r} out of range [0, {N_RIVETS})")
        for s in self.severity:
            if self.kind == "crack" and not 0.0 <= s <= CRACK_LENGTH_REF_MM:
                raise PanelError(f"crack length {s} mm outside [0, {CRACK_LENGTH_REF_MM}]")
            if self.kind == "hole_expansion" and not 0.0 <= s < 1.0:
                raise PanelError(f"stiffness-loss fraction {s} outside [0, 1)")
            if self.kind == "added_mass" and s < 0.0:
                raise PanelError(f"added mass {s} must be >= 0")

    @property
    def is_damaged(self) -> bool:
        return self.kind != "healthy"


@dataclass(frozen=True)
class RivetJoint:
    """One rivet: the dof pair it couples and its pristine joint stiffness."""
    dof_a: int
    dof_b: int
    stiffness: float


@dataclass(frozen=True)
class PanelConfig:
    """Everything needed to assemble the surrogate panel deterministically.

    The two stiffeners carry different section stiffnesses and the two
    supported edges different grip stiffnesses. That asymmetry is load
    bearing: a mirror-symmetric panel would give mirror-image rivet
    positions identical damage fingerprints.
    """
    nx: int = 17
    ny: int = 5
    stiffener_rows: tuple[int, int] = (1, 3)
    panel_node_mass: float = 0.02                                # kg
    stiffener_node_mass: float = 0.04                            # kg
    plate_stiffness: float = 1.75e6                              # N/m, lattice springs
    stiffener_stiffness: tuple[float, float] = (4.025e6, 4.62875e6)  # N/m, per line
    rivet_stiffness: float = 6.125e5                             # N/m, per joint
    support_stiffness: tuple[float, float] = (1.5e6, 8.5e5)      # N/m, left/right edge grip
    damping_ratio: float = 0.07
    n_modes: int = 30
    rivet_pairs: tuple[tuple[int, int], ...] = ()
    accel_channels: tuple[tuple[int, str], ...] = ()
    strain_channels: tuple[tuple[int, int, float], ...] = ()
    force_dof: int = -1

    @property
    def n_panel_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def n_dof(self) -> int:
        return self.nx * self.ny + 2 * self.nx

    def panel_dof(self, x: int, y: int) -> int:
        if not (0 <= x < self.nx and 0 <= y < self.ny):
            raise PanelError(f"panel node ({x}, {y}) outside {self.nx} x {self.ny} grid")
        return y * self.nx + x

    def stiffener_dof(self, s: int, i: int) -> int:
        if s not in (0, 1) or not 0 <= i < self.nx:
            raise PanelError(f"stiffener node ({s}, {i}) out of range")
        return self.nx * self.ny + s * self.nx + i


def default_panel_config() -> PanelConfig:
    """Shipped default geometry: 17 x 5 panel lattice, two stiffeners with
    17 rivets each, four tri-axial accelerometers, four strain gauges.

    Sensor placements are deliberately asymmetric so mirror-image rivet
    positions produce distinguishable fingerprints.
    """
    cfg = PanelConfig()
    pd = cfg.panel_dof
    rivets = []
    for s, row in enumerate(cfg.stiffener_rows):
        for i in range(cfg.nx):
            rivets.append((pd(i, row), cfg.stiffener_dof(s, i)))
    # tri-axial pickup surrogate: z reads the mount node (on a stiffener
    # line, where joint damage is most visible), x reads an adjacent node
    # along the line, y reads the centre-row node at the mount. Placements
    # are asymmetric in both directions and balanced so every channel has
    # comparable damage observability.
    accel = []
    for (x, y), x_step in [((2, 1), +1), ((5, 3), -1), ((11, 1), +1), ((13, 3), -1)]:
        accel.append((pd(x, y), "z"))
        accel.append((pd(x + x_step, y), "x"))
        accel.append((pd(x, 2), "y"))
    strain = (
        (pd(3, 1), pd(4, 1), 0.05),
        (pd(9, 1), pd(10, 1), 0.05),
        (pd(5, 3), pd(6, 3), 0.05),
        (pd(13, 3), pd(14, 3), 0.05),
    )
    return replace(cfg,
                   rivet_pairs=tuple(rivets),
                   accel_channels=tuple(accel),
                   strain_channels=strain,
                   force_dof=pd(8, 2))


@dataclass(frozen=True)
class PanelModel:
    """Assembled mass/stiffness description plus rivet and sensor maps."""
    n_dof: int
    mass_matrix: np.ndarray       # kg, symmetric positive definite
    stiffness_matrix: np.ndarray  # N/m, symmetric positive semidefinite
    rivet_map: tuple[RivetJoint, ...]
    damping_ratio: float
    sensor_layout: SensorLayout

    def __post_init__(self):
        m = np.asarray(self.mass_matrix, dtype=np.float64)
        k = np.asarray(self.stiffness_matrix, dtype=np.float64)
        object.__setattr__(self, "mass_matrix", m)
        object.__setattr__(self, "stiffness_matrix", k)
        object.__setattr__(self, "rivet_map", tuple(self.rivet_map))
        n = self.n_dof
        if m.shape != (n, n) or k.shape != (n, n):
            raise PanelError("matrix shapes must be n_dof x n_dof")
        for name, a in (("mass", m), ("stiffness", k)):
            scale = np.max(np.abs(a))
            if np.max(np.abs(a - a.T)) > 1e-12 * max(scale, 1e-300):
                raise PanelError(f"{name} matrix is not symmetric")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise PanelError("mass matrix is not positive definite") from None
        if len(self.rivet_map) != N_RIVETS:
            raise PanelError(f"rivet map must have exactly {N_RIVETS} entries")
        pairs = {(j.dof_a, j.dof_b) for j in self.rivet_map}
        if len(pairs) != N_RIVETS:
            raise PanelError("rivet dof pairs must be distinct")
        for j in self.rivet_map:
            if not (0 <= j.dof_a < n and 0 <= j.dof_b < n) or j.dof_a == j.dof_b:
                raise PanelError(f"rivet pair ({j.dof_a}, {j.dof_b}) invalid")
        if not 0.0 < self.damping_ratio < 0.2:
            raise PanelError(f"damping ratio {self.damping_ratio} outside (0, 0.2)")
        if self.sensor_layout.max_dof() >= n:
            raise PanelError("sensor layout references a dof outside the model")


@dataclass(frozen=True)
class ModalBasis:
    """Mass-normalized modal data of one panel state."""
    natural_frequencies: np.ndarray  # Hz, ascending
    mode_shapes: np.ndarray          # columns, Phi^T M Phi = I
    n_modes: int

    def __post_init__(self):
        f = np.asarray(self.natural_frequencies, dtype=np.float64)
        phi = np.asarray(self.mode_shapes, dtype=np.float64)
        object.__setattr__(self, "natural_frequencies", f)
        object.__setattr__(self, "mode_shapes", phi)
        if f.shape != (self.n_modes,) or phi.shape[1] != self.n_modes:
            raise PanelError("modal basis shape mismatch")
        if np.any(f < 0) or np.any(np.diff(f) < 0):
            raise PanelError("natural frequencies must be ascending and >= 0")


def _add_spring(k: np.ndarray, a: int, b: int, stiffness: float) -> None:
    k[a, a] += stiffness
    k[b, b] += stiffness
    k[a, b] -= stiffness
    k[b, a] -= stiffness


def build_panel(config: PanelConfig) -> PanelModel:
    """Assemble mass and stiffness matrices from a configuration.

    Deterministic: identical configs produce bitwise-identical matrices.
    """
    if config.nx < 2 or config.ny < 1:
        raise PanelError(f"grid {config.nx} x {config.ny} too small")
    for name, v in (("panel_node_mass", config.panel_node_mass),
                    ("stiffener_node_mass", config.stiffener_node_mass),
                    ("plate_stiffness", config.plate_stiffness),
                    ("stiffener_stiffness", min(config.stiffener_stiffness)),
                    ("rivet_stiffness", config.rivet_stiffness),
                    ("support_stiffness", min(config.support_stiffness))):
        if not v > 0:
            raise PanelError(f"{name} must be positive, got {v}")
    if len(config.rivet_pairs) != N_RIVETS:
        raise PanelError(
            f"config must place exactly {N_RIVETS} rivets, got {len(config.rivet_pairs)}")
    for row in config.stiffener_rows:
        if not 0 <= row < config.ny:
            raise PanelError(f"stiffener row {row} outside grid")

    n = config.n_dof
    mass = np.zeros((n, n))
    for y in range(config.ny):
        for x in range(config.nx):
            mass[config.panel_dof(x, y), config.panel_dof(x, y)] = config.panel_node_mass
    for s in (0, 1):
        for i in range(config.nx):
            d = config.stiffener_dof(s, i)
            mass[d, d] = config.stiffener_node_mass

    stiff = np.zeros((n, n))
    for y in range(config.ny):
        for x in range(config.nx):
            if x + 1 < config.nx:
                _add_spring(stiff, config.panel_dof(x, y), config.panel_dof(x + 1, y),
                            config.plate_stiffness)
            if y + 1 < config.ny:
                _add_spring(stiff, config.panel_dof(x, y), config.panel_dof(x, y + 1),
                            config.plate_stiffness)
    for s in (0, 1):
        for i in range(config.nx - 1):
            _add_spring(stiff, config.stiffener_dof(s, i), config.stiffener_dof(s, i + 1),
                        config.stiffener_stiffness[s])
    rivet_map = []
    for a, b in config.rivet_pairs:
        if not (0 <= a < n and 0 <= b < n):
            raise PanelError(f"rivet pair ({a}, {b}) references absent dofs")
        _add_spring(stiff, a, b, config.rivet_stiffness)
        rivet_map.append(RivetJoint(a, b, config.rivet_stiffness))
    # edge columns sit in the test frame; the two grips differ on purpose
    for y in range(config.ny):
        for edge, x in enumerate((0, config.nx - 1)):
            d = config.panel_dof(x, y)
            stiff[d, d] += config.support_stiffness[edge]

    layout = SensorLayout(accel_channels=config.accel_channels,
                          strain_channels=config.strain_channels,
                          force_dof=config.force_dof)
    if layout.max_dof() >= n or config.force_dof < 0:
        raise PanelError("sensor layout references a dof outside the model")

    return PanelModel(n_dof=n, mass_matrix=mass, stiffness_matrix=stiff,
                      rivet_map=tuple(rivet_map), damping_ratio=config.damping_ratio,
                      sensor_layout=layout)


def apply_damage(model: PanelModel, scenario: DamageScenario) -> PanelModel:
    """Return a new model with the scenario's perturbation applied.

    Crack of length L mm scales the affected joint stiffness by
    (1 - L / 25); hole expansion scales it by (1 - loss fraction);
    added mass splits its kg equally onto the joint's two dofs. The
    rivet map keeps pristine (nominal) stiffnesses for reference.
    """
    if scenario.kind == "healthy":
        return model
    k = model.stiffness_matrix.copy()
    m = model.mass_matrix.copy()
    for rivet, severity in zip(scenario.rivets, scenario.severity):
        joint = model.rivet_map[rivet]
        if scenario.kind == "crack":
            if severity >= CRACK_LENGTH_REF_MM:
                raise PanelError(
                    f"crack length {severity} mm >= reference {CRACK_LENGTH_REF_MM} mm "
                    "would zero or negate the joint stiffness")
            _add_spring(k, joint.dof_a, joint.dof_b,
                        -(severity / CRACK_LENGTH_REF_MM) * joint.stiffness)
        elif scenario.kind == "hole_expansion":
            _add_spring(k, joint.dof_a, joint.dof_b, -severity * joint.stiffness)
        elif scenario.kind == "added_mass":
            m[joint.dof_a, joint.dof_a] += severity / 2.0
            m[joint.dof_b, joint.dof_b] += severity / 2.0
    return PanelModel(n_dof=model.n_dof, mass_matrix=m, stiffness_matrix=k,
                      rivet_map=model.rivet_map, damping_ratio=model.damping_ratio,
                      sensor_layout=model.sensor_layout)


def modal_solve(model: PanelModel, n_modes: int) -> ModalBasis:
    """Lowest ``n_modes`` solutions of K phi = lambda M phi, mass-normalized.

    Frequencies are sqrt(lambda) / 2 pi in Hz. Raises on an indefinite mass
    matrix or a non-converging eigensolver.
    """
    if not 1 <= n_modes <= model.n_dof:
        raise PanelError(f"n_modes {n_modes} outside [1, {model.n_dof}]")
    try:
        np.linalg.cholesky(model.mass_matrix)
    except np.linalg.LinAlgError:
        raise PanelError("mass matrix is not positive definite") from None
    try:
        lam, phi = scipy.linalg.eigh(model.stiffness_matrix, model.mass_matrix)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise PanelError(f"eigensolver did not converge: {exc}") from exc
    lam = lam[:n_modes]
    phi = phi[:, :n_modes]
    scale = abs(lam[-1]) if lam.size else 1.0
    if np.any(lam < -1e-10 * max(scale, 1.0)):
        raise PanelError(f"negative eigenvalue {lam.min()} in an SPD pencil")
    lam = np.clip(lam, 0.0, None)

    # contracts the synthesis path relies on
    gram = phi.T @ model.mass_matrix @ phi
    if np.max(np.abs(gram - np.eye(n_modes))) > 1e-8:
        raise PanelError("mode shapes lost mass-orthonormality")
    kmod = phi.T @ model.stiffness_matrix @ phi
    off = kmod - np.diag(np.diag(kmod))
    if np.max(np.abs(off)) > 1e-8 * max(np.max(np.abs(np.diag(kmod))), 1.0):
        raise PanelError("modal stiffness is not diagonal")

    freqs = np.sqrt(lam) / (2.0 * np.pi)
    return ModalBasis(natural_frequencies=freqs, mode_shapes=phi, n_modes=n_modes)


def _modal_inv_denominator(basis: ModalBasis, grid: FrequencyGrid,
                           damping_ratio: float) -> np.ndarray:
    """1 / (w_r^2 - w^2 + 2 i zeta w_r w) per (mode, bin)."""
    w = 2.0 * np.pi * grid.freq_bins
    w_r = 2.0 * np.pi * basis.natural_frequencies
    den = (w_r[:, None] ** 2 - w[None, :] ** 2
           + 2j * damping_ratio * w_r[:, None] * w[None, :])
    if np.any(den == 0):
        raise PanelError("grid bin coincides with an undamped resonance")
    return 1.0 / den


def receptance(basis: ModalBasis, response_dofs, force_dof: int,
               grid: FrequencyGrid, damping_ratio: float) -> np.ndarray:
    """Displacement-per-force FRF rows by modal superposition:

    H_qp(w) = sum_r phi_qr phi_pr / (w_r^2 - w^2 + 2 i zeta w_r w)
    """
    response_dofs = np.asarray(response_dofs, dtype=np.intp)
    inv_den = _modal_inv_denominator(basis, grid, damping_ratio)
    participation = basis.mode_shapes[response_dofs, :] * basis.mode_shapes[force_dof, :]
    return participation @ inv_den


def analytic_frf(basis: ModalBasis, layout: SensorLayout, grid: FrequencyGrid,
                 damping_ratio: float) -> FrfMatrix:
    """Exact sensor-channel FRFs of the modeled panel on the given grid.

    Accelerance channels are -w^2 times the receptance at the pickup dof;
    strain channels are the receptance difference across the gauge pair
    divided by gauge length.
    """
    if basis.n_modes < 1:
        raise PanelError("modal basis is empty")
    p = layout.force_dof
    phi = basis.mode_shapes
    inv_den = _modal_inv_denominator(basis, grid, damping_ratio)
    accel_dofs = np.asarray([d for d, _ in layout.accel_channels], dtype=np.intp)
    w = 2.0 * np.pi * grid.freq_bins
    h_accel = -(w ** 2)[None, :] * ((phi[accel_dofs, :] * phi[p, :]) @ inv_den)
    rows = [h_accel]
    for a, b, gauge in layout.strain_channels:
        participation = (phi[a, :] - phi[b, :]) * phi[p, :] / gauge
        rows.append((participation @ inv_den)[None, :])
    return FrfMatrix(values=np.vstack(rows), freq_bins=grid.freq_bins,
                     channel_kinds=layout.channel_kinds)
