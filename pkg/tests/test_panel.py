import numpy as np
import pytest
from dataclasses import replace

from rivetscan.panel import (CRACK_LENGTH_REF_MM, DamageScenario, ModalBasis, PanelError,
                             PanelModel, analytic_frf, apply_damage, build_panel,
                             default_panel_config, modal_solve, receptance)
from rivetscan.signals import FrequencyGrid

from conftest import make_sdof


def char_poly_eigenvalues_2x2(k_mat, m_mat):
    """Oracle: roots of det(K - lambda M) for the 2x2 pencil."""
    a = m_mat[0, 0] * m_mat[1, 1] - m_mat[0, 1] * m_mat[1, 0]
    b = -(k_mat[0, 0] * m_mat[1, 1] + k_mat[1, 1] * m_mat[0, 0]
          - k_mat[0, 1] * m_mat[1, 0] - k_mat[1, 0] * m_mat[0, 1])
    c = k_mat[0, 0] * k_mat[1, 1] - k_mat[0, 1] * k_mat[1, 0]
    disc = np.sqrt(b * b - 4 * a * c)
    return np.sort(np.array([(-b - disc) / (2 * a), (-b + disc) / (2 * a)]))


# ---------------------------------------------------------------------------
# build_panel
# ---------------------------------------------------------------------------

def test_default_panel_has_34_rivets_and_16_channels(panel_model):
    assert len(panel_model.rivet_map) == 34
    assert panel_model.sensor_layout.n_channels == 16
    assert len(panel_model.sensor_layout.accel_channels) == 12
    assert len(panel_model.sensor_layout.strain_channels) == 4


def test_build_rejects_zero_mass():
    cfg = replace(default_panel_config(), panel_node_mass=0.0)
    with pytest.raises(PanelError):
        build_panel(cfg)


def test_build_rejects_missing_rivets():
    cfg = default_panel_config()
    cfg = replace(cfg, rivet_pairs=cfg.rivet_pairs[:33])
    with pytest.raises(PanelError):
        build_panel(cfg)


def test_build_rejects_sensor_outside_model():
    cfg = default_panel_config()
    bad = ((cfg.n_dof, "z"),) + cfg.accel_channels[1:]
    cfg = replace(cfg, accel_channels=bad)
    with pytest.raises(PanelError):
        build_panel(cfg)


def test_build_deterministic_bitwise():
    a = build_panel(default_panel_config())
    b = build_panel(default_panel_config())
    assert np.array_equal(a.mass_matrix, b.mass_matrix)
    assert np.array_equal(a.stiffness_matrix, b.stiffness_matrix)


def test_matrices_symmetric(panel_model):
    k = panel_model.stiffness_matrix
    m = panel_model.mass_matrix
    assert np.max(np.abs(k - k.T)) <= 1e-12 * np.max(np.abs(k))
    assert np.max(np.abs(m - m.T)) <= 1e-12 * np.max(np.abs(m))


# ---------------------------------------------------------------------------
# apply_damage
# ---------------------------------------------------------------------------

def test_zero_crack_is_identity(panel_model):
    out = apply_damage(panel_model, DamageScenario("crack", (3,), (0.0,)))
    assert np.array_equal(out.stiffness_matrix, panel_model.stiffness_matrix)
    assert np.array_equal(out.mass_matrix, panel_model.mass_matrix)


def test_healthy_returns_model_unchanged(panel_model):
    assert apply_damage(panel_model, DamageScenario("healthy")) is panel_model


def test_crack_at_rivet7_lowers_first_frequency(panel_model):
    healthy = modal_solve(panel_model, 10).natural_frequencies
    cracked = apply_damage(panel_model, DamageScenario("crack", (7,), (10.88,)))
    damaged = modal_solve(cracked, 10).natural_frequencies
    assert damaged[0] < healthy[0]


def test_added_mass_weakly_lowers_all_frequencies(panel_model):
    healthy = modal_solve(panel_model, panel_model.n_dof).natural_frequencies
    loaded = apply_damage(panel_model, DamageScenario("added_mass", (3,), (0.1,)))
    damaged = modal_solve(loaded, panel_model.n_dof).natural_frequencies
    assert np.all(damaged <= healthy * (1.0 + 1e-12))


def test_crack_growth_monotone_frequency_drop(panel_model):
    prev = modal_solve(panel_model, 40).natural_frequencies
    for length in (5.0, 10.0, 15.0, 20.0, 24.0):
        cur = modal_solve(apply_damage(
            panel_model, DamageScenario("crack", (12,), (length,))), 40).natural_frequencies
        assert np.all(cur <= prev * (1.0 + 1e-12))
        prev = cur


def test_added_mass_sweep_monotone(panel_model):
    prev = modal_solve(panel_model, 40).natural_frequencies
    for mass in (0.01, 0.03, 0.06, 0.1):
        cur = modal_solve(apply_damage(
            panel_model, DamageScenario("added_mass", (20,), (mass,))), 40).natural_frequencies
        assert np.all(cur <= prev * (1.0 + 1e-12))
        prev = cur


def test_crack_at_reference_length_rejected(panel_model):
    with pytest.raises(PanelError):
        apply_damage(panel_model, DamageScenario("crack", (0,), (CRACK_LENGTH_REF_MM,)))


def test_scenario_validation():
    with pytest.raises(PanelError):
        DamageScenario("crack", (40,), (5.0,))      # rivet out of range
    with pytest.raises(PanelError):
        DamageScenario("crack", (1, 2), (5.0,))     # length mismatch
    with pytest.raises(PanelError):
        DamageScenario("hole_expansion", (1,), (1.0,))
    with pytest.raises(PanelError):
        DamageScenario("added_mass", (1,), (-0.1,))
    with pytest.raises(PanelError):
        DamageScenario("healthy", (1,), (0.1,))


def test_disjoint_damage_commutes(panel_model):
    a = DamageScenario("crack", (2,), (8.0,))
    b = DamageScenario("crack", (25,), (15.0,))
    ab = apply_damage(apply_damage(panel_model, a), b)
    ba = apply_damage(apply_damage(panel_model, b), a)
    assert np.array_equal(ab.stiffness_matrix, ba.stiffness_matrix)


def test_hole_expansion_scales_joint_spring(panel_model):
    joint = panel_model.rivet_map[4]
    out = apply_damage(panel_model, DamageScenario("hole_expansion", (4,), (0.5,)))
    delta = panel_model.stiffness_matrix - out.stiffness_matrix
    assert delta[joint.dof_a, joint.dof_a] == pytest.approx(0.5 * joint.stiffness)
    assert delta[joint.dof_a, joint.dof_b] == pytest.approx(-0.5 * joint.stiffness)
    # nothing else touched
    mask = np.ones_like(delta, dtype=bool)
    for i in (joint.dof_a, joint.dof_b):
        for j in (joint.dof_a, joint.dof_b):
            mask[i, j] = False
    assert np.all(delta[mask] == 0.0)


def test_severity_zero_idempotent(panel_model):
    scen = DamageScenario("hole_expansion", (5,), (0.0,))
    once = apply_damage(panel_model, scen)
    twice = apply_damage(once, scen)
    assert np.array_equal(once.stiffness_matrix, twice.stiffness_matrix)


# ---------------------------------------------------------------------------
# modal_solve
# ---------------------------------------------------------------------------

def test_sdof_frequency():
    # f = sqrt(k/m) / 2 pi with k = (2 pi)^2, m = 1 -> 1 Hz
    lam = modal_solve_1dof(39.4784, 1.0)
    assert abs(lam - 1.0) < 1e-6


def modal_solve_1dof(k, m):
    # the eigen path without PanelModel overhead (which pins 34 rivets)
    import scipy.linalg
    val = scipy.linalg.eigh(np.array([[k]]), np.array([[m]]))[0][0]
    return np.sqrt(val) / (2 * np.pi)


def test_two_dof_chain_matches_char_poly_oracle():
    k = np.array([[2.0, -1.0], [-1.0, 2.0]])
    m = np.eye(2)
    oracle = char_poly_eigenvalues_2x2(k, m)
    assert np.allclose(oracle, [1.0, 3.0], atol=1e-12)
    import scipy.linalg
    lam = scipy.linalg.eigh(k, m)[0]
    assert np.allclose(np.sort(lam), oracle, atol=1e-9)


def test_modal_solve_healthy_panel(panel_model):
    basis = modal_solve(panel_model, 30)
    f = basis.natural_frequencies
    assert f.shape == (30,)
    assert np.all(f >= 0)
    assert np.all(np.diff(f) >= 0)
    # mass orthonormality and modal stiffness diagonality
    gram = basis.mode_shapes.T @ panel_model.mass_matrix @ basis.mode_shapes
    assert np.max(np.abs(gram - np.eye(30))) < 1e-8
    kmod = basis.mode_shapes.T @ panel_model.stiffness_matrix @ basis.mode_shapes
    off = kmod - np.diag(np.diag(kmod))
    assert np.max(np.abs(off)) < 1e-8 * np.max(np.abs(np.diag(kmod)))


def test_modal_solve_bounds(panel_model):
    with pytest.raises(PanelError):
        modal_solve(panel_model, panel_model.n_dof + 1)
    with pytest.raises(PanelError):
        modal_solve_indefinite(panel_model)


def modal_solve_indefinite(panel_model):
    m = panel_model.mass_matrix.copy()
    m[0, 0] = -1.0
    fake = object.__new__(PanelModel)
    object.__setattr__(fake, "n_dof", panel_model.n_dof)
    object.__setattr__(fake, "mass_matrix", m)
    object.__setattr__(fake, "stiffness_matrix", panel_model.stiffness_matrix)
    object.__setattr__(fake, "rivet_map", panel_model.rivet_map)
    object.__setattr__(fake, "damping_ratio", panel_model.damping_ratio)
    object.__setattr__(fake, "sensor_layout", panel_model.sensor_layout)
    return modal_solve(fake, 5)


# ---------------------------------------------------------------------------
# analytic_frf
# ---------------------------------------------------------------------------

def test_accelerance_zero_at_dc(panel_model, small_grid):
    basis = modal_solve(panel_model, 20)
    frf = analytic_frf(basis, panel_model.sensor_layout, small_grid,
                       panel_model.damping_ratio)
    assert np.all(frf.values[:12, 0] == 0.0)
    assert frf.values.shape == (16, small_grid.n_bins)


def test_sdof_resonance_magnitude():
    # peak receptance of a lightly damped oscillator is 1 / (2 zeta k)
    grid = FrequencyGrid(f_max=1000.0, n_bins=1000)  # bins land on integer Hz
    basis, m, zeta, k = make_sdof(f_n=250.0, zeta=0.01, k=1.0e4)
    h = receptance(basis, [0], 0, grid, zeta)[0]
    bin_at_fn = 250
    assert abs(grid.freq_bins[bin_at_fn] - 250.0) < 1e-12
    expected = 1.0 / (2 * zeta * k)
    assert abs(abs(h[bin_at_fn]) - expected) / expected < 1e-3


def test_reciprocity(panel_model, small_grid):
    basis = modal_solve(panel_model, 25)
    q, p = 10, 57
    h_qp = receptance(basis, [q], p, small_grid, 0.01)[0]
    h_pq = receptance(basis, [p], q, small_grid, 0.01)[0]
    scale = np.abs(h_qp)
    scale[scale == 0] = 1.0
    assert np.max(np.abs(h_qp - h_pq) / scale) < 1e-10


def test_default_grid_spans_advertised_range():
    grid = FrequencyGrid()
    assert grid.f_max == 1000.0
    assert grid.n_bins == 2048
    assert grid.freq_bins[0] == 0.0
    assert grid.freq_bins[-1] < 1000.0
    assert abs(grid.freq_bins[-1] - (1000.0 - grid.df)) < 1e-9
