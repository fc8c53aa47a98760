"""Acceptance gates for the full pipeline.

Each test prints one PASS/FAIL line (run with ``pytest -v -s``). The
desk-scale end-to-end run executes once per session through the real CLI
and feeds the criteria that score it:

  1. backprop gradients vs central finite differences, < 1e-6 relative
  2. eigensolver vs characteristic-polynomial roots; projection vs dense
     brute force; full-basis reconstruction
  3. H1 estimator vs analytic FRF, noiseless and at 20 dB / 10 records
  4. 7-component variance concentration per accelerance channel >= 99%,
     fingerprint length exactly 100
  5. rivet-bit misclassification < 20%, neighbourhood hit rate >= 80%,
     end-to-end under 15 minutes
  6. severity error <= 35% per kind, monotone crack-length sweep
  7. XOR trainability and localization validation MSE < 0.05
  8. byte-identical repeated runs, container round-trip, basis mismatch
     rejection
  9. reciprocity, Parseval, monotone frequency shifts
"""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from rivetscan import artifacts, cli
from rivetscan.config import default_run_config, derive_seed, load_run_config, save_run_config
from rivetscan.identify import (dataset_from_artifacts, estimate_scenario_frf, localize,
                                estimate_severity)
from rivetscan.mlp import (TrainingSet, TrainParams, backward, cost, forward,
                           init_network, train)
from rivetscan.panel import (DamageScenario, apply_damage, build_panel,
                             default_panel_config, modal_solve, receptance)
from rivetscan.pca import eig_sym, fit_basis, log_magnitude, project, variance_explained_per_channel
from rivetscan.signals import (FrequencyGrid, estimate_frf, fft_forward, gen_white_noise,
                               simulate_response, white_noise_records, TimeSignal)

from conftest import sdof_receptance


def gate(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPT {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# session-scoped desk-scale run
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_run")
    t0 = time.perf_counter()
    rc = cli.main(["reproduce", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert rc == 0, "reproduce exited nonzero"
    stage_times = {}
    for line in (out / "run_log.txt").read_text().splitlines():
        if ":" in line and not line.startswith("started"):
            name, val = line.rsplit(":", 1)
            stage_times[name.strip()] = float(val.strip().rstrip(" s"))
    return {"out": out, "elapsed": elapsed, "stage_times": stage_times,
            "cfg": default_run_config()}


def _load_desk_dataset(out: Path):
    values, freq, kinds, scenarios, splits, meta = artifacts.load_frf_dataset(
        out / "dataset.frfd")
    frfs = [artifacts.frf_from_dataset(values, freq, kinds, i,
                                       int(meta.get("n_records", 1)))
            for i in range(values.shape[0])]
    accel = artifacts.load_pca_basis(out / "basis_accel.frfd")
    strain = artifacts.load_pca_basis(out / "basis_strain.frfd")
    return dataset_from_artifacts(frfs, scenarios, splits, accel, strain)


# ---------------------------------------------------------------------------
# criterion 1: gradient correctness
# ---------------------------------------------------------------------------

def test_c1_gradient_correctness():
    rng = np.random.default_rng(100)
    shapes = [(2, 3, 1), (4, 6, 3), (3, 5, 4, 2), (6, 8, 5)] * 5 + [
        (100, 30, 34), (100, 30, 34)]
    assert len(shapes) >= 20
    t0 = time.perf_counter()
    worst = 0.0
    for trial, sizes in enumerate(shapes):
        acts = ["sigmoid"] * (len(sizes) - 1)
        if trial % 3 == 2:
            acts[-1] = "linear"
        net = init_network(sizes, acts, seed=1000 + trial)
        x = rng.normal(size=sizes[0])
        d = rng.normal(size=sizes[-1])
        y, cache = forward(net, x)
        grads = backward(net, cache, d, alpha=1.0)
        step = 1e-6
        for li, layer in enumerate(net.layers):
            w = layer.weights
            flat_idx = rng.choice(w.size, size=min(w.size, 40), replace=False)
            fd = np.zeros(flat_idx.size)
            for j, fi in enumerate(flat_idx):
                idx = np.unravel_index(fi, w.shape)
                orig = w[idx]
                w[idx] = orig + step
                ep = cost(forward(net, x)[0], d)
                w[idx] = orig - step
                em = cost(forward(net, x)[0], d)
                w[idx] = orig
                fd[j] = (ep - em) / (2 * step)
            bp = grads.delta_w[li].reshape(-1)[flat_idx]
            ref = max(np.max(np.abs(fd)), 1e-10)
            worst = max(worst, np.max(np.abs(bp + fd)) / ref)
    elapsed = time.perf_counter() - t0
    gate("C1 gradient-correctness",
         worst < 1e-6 and elapsed < 30.0,
         f"max rel err {worst:.3e}, {len(shapes)} nets in {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# criterion 2: eigen / PCA oracle equivalence
# ---------------------------------------------------------------------------

def test_c2_eigen_pca_oracles():
    rng = np.random.default_rng(200)
    worst_eig = 0.0
    for _ in range(10):
        a2 = rng.normal(size=(2, 2)); a2 = (a2 + a2.T) / 2
        a3 = rng.normal(size=(3, 3)); a3 = (a3 + a3.T) / 2
        for a in (a2, a3):
            lam, _ = eig_sym(a)
            roots = np.sort(np.roots(np.poly(a)).real)[::-1]
            worst_eig = max(worst_eig, np.max(np.abs(lam - roots)))

    from rivetscan.signals import ACCELERANCE, STRAIN, FrfMatrix
    kinds = (ACCELERANCE,) * 12 + (STRAIN,) * 4
    frfs = [FrfMatrix(values=rng.normal(size=(16, 10)) + 1j * rng.normal(size=(16, 10)),
                      freq_bins=np.arange(10.0), channel_kinds=kinds)
            for _ in range(25)]
    basis = fit_basis(frfs, ACCELERANCE, n_keep=10)
    worst_proj = 0.0
    worst_recon = 0.0
    test_frf = frfs[3]
    for idx, ch in zip(basis.channel_indices, basis.channels):
        feats = log_magnitude(test_frf.values[idx], ch.floor)
        centered = feats - ch.mean
        proj = centered @ ch.components
        rows = np.stack([log_magnitude(f.values[idx], ch.floor) for f in frfs])
        brute = (rows[3] - rows.mean(axis=0)) @ ch.components
        worst_proj = max(worst_proj, np.max(np.abs(proj - brute)))
        recon = ch.components @ proj
        worst_recon = max(worst_recon, np.max(np.abs(recon - centered)))
    gate("C2 eigen/pca-oracles",
         worst_eig < 1e-9 and worst_proj < 1e-10 and worst_recon < 1e-9,
         f"eig err {worst_eig:.2e}, proj err {worst_proj:.2e}, recon err {worst_recon:.2e}")


# ---------------------------------------------------------------------------
# criterion 3: FRF estimator fidelity
# ---------------------------------------------------------------------------

def test_c3_estimator_fidelity():
    grid = FrequencyGrid(1000.0, 512)
    frf = sdof_receptance(grid)
    x = gen_white_noise(grid.record_length, 1.0, seed=301, dt=grid.dt)
    est = estimate_frf([x], [simulate_response(frf, x)], frf.channel_kinds)
    nb = grid.n_bins
    rel_noiseless = np.max(np.abs(est.values[0, 1:nb] - frf.values[0, 1:nb])
                           / np.abs(frf.values[0, 1:nb]))

    peak = int(np.argmax(np.abs(frf.values[0])))
    worst_noisy = 0.0
    for master in (1, 2, 3, 4, 5):
        inputs = white_noise_records(10, grid.record_length, 1.0,
                                     seed=3000 + 77 * master, dt=grid.dt)
        outs = [simulate_response(frf, rec, 20.0, noise_seed=4000 + 911 * master + j)
                for j, rec in enumerate(inputs)]
        est10 = estimate_frf(inputs, outs, frf.channel_kinds)
        err = abs(abs(est10.values[0, peak]) - abs(frf.values[0, peak]))
        worst_noisy = max(worst_noisy, err / abs(frf.values[0, peak]))
    gate("C3 estimator-fidelity",
         rel_noiseless < 1e-8 and worst_noisy < 0.05,
         f"noiseless {rel_noiseless:.2e}, 20 dB x10 records {worst_noisy:.3f}")


# ---------------------------------------------------------------------------
# criterion 4: variance concentration and fingerprint length
# ---------------------------------------------------------------------------

def test_c4_variance_concentration(desk_run):
    accel = artifacts.load_pca_basis(desk_run["out"] / "basis_accel.frfd")
    va = variance_explained_per_channel(accel, 7)
    dataset = _load_desk_dataset(desk_run["out"])
    lengths = {f.values.size for f in dataset.features}
    fit_time = desk_run["stage_times"].get("fit-pca", float("inf"))
    gate("C4 variance-concentration",
         bool(np.all(va >= 0.99)) and lengths == {100} and fit_time < 120.0,
         f"accel 7-PC min {va.min():.4f}, fingerprint length {lengths}, "
         f"fit {fit_time:.0f} s")


# ---------------------------------------------------------------------------
# criteria 5 and 6: localization and severity on the held-out split
# ---------------------------------------------------------------------------

def test_c5_localization(desk_run):
    import json
    report = json.loads((desk_run["out"] / "report.json").read_text())
    ok = (report["misclassification_pct"] < 20.0
          and report["localization_hit_rate"] >= 0.80
          and desk_run["elapsed"] < 15 * 60)
    gate("C5 localization",
         ok,
         f"misclassification {report['misclassification_pct']:.3f} %, "
         f"hit rate {report['localization_hit_rate']:.3f}, "
         f"end-to-end {desk_run['elapsed']:.0f} s")


def test_c6_severity(desk_run):
    import json
    report = json.loads((desk_run["out"] / "report.json").read_text())
    errs = report["severity_mean_rel_err_pct"]
    ok_err = all(errs[k] is not None and errs[k] <= 35.0 for k in errs)

    # monotone spot check: crack sweep at one rivet, fresh seeds
    cfg = desk_run["cfg"]
    model = build_panel(default_panel_config())
    grid = FrequencyGrid(cfg.signal.f_max_hz, cfg.signal.n_bins)
    accel = artifacts.load_pca_basis(desk_run["out"] / "basis_accel.frfd")
    strain = artifacts.load_pca_basis(desk_run["out"] / "basis_strain.frfd")
    sev_model = artifacts.load_model(desk_run["out"] / "model_severity_crack.frfd")
    sweep = [0.0, 4.5, 9.0, 13.5, 18.0, 22.5]
    preds = []
    for j, length in enumerate(sweep):
        scen = DamageScenario("crack", (10,), (length,))
        frf = estimate_scenario_frf(model, scen, grid, 30, cfg.signal.n_records,
                                    cfg.signal.sigma_n, cfg.signal.snr_db,
                                    excitation_seed=derive_seed(999, "sweep-exc", j),
                                    noise_seed=derive_seed(999, "sweep-noise", j))
        feature = project(frf, accel, strain)
        preds.append(estimate_severity(feature, sev_model, "crack").value)
    steps = np.diff(preds)
    n_up = int(np.sum(steps >= 0))

    # healthy fingerprints must sit below the smallest trained severity
    dataset = _load_desk_dataset(desk_run["out"])
    healthy_preds = [
        estimate_severity(dataset.features[i], sev_model, "crack").value
        for i in dataset.test_idx if not dataset.scenarios[i].is_damaged]
    healthy_ok = bool(healthy_preds) and max(healthy_preds) < min(
        cfg.scenarios.crack_lengths_mm)
    gate("C6 severity",
         ok_err and n_up >= 4 and healthy_ok,
         f"rel err % {errs}, sweep {np.round(preds, 2).tolist()} "
         f"non-decreasing {n_up}/5 steps, healthy band max "
         f"{max(healthy_preds):.2f} mm")


# ---------------------------------------------------------------------------
# criterion 7: training sanity
# ---------------------------------------------------------------------------

def test_c7_training_sanity(desk_run):
    wins = 0
    xor_in = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    xor_out = np.array([[0.0], [1.0], [1.0], [0.0]])
    data = TrainingSet(xor_in, xor_out)
    for seed in range(5):
        params = TrainParams(alpha=1.0, max_epochs=5000, target_mse=0.01,
                             shuffle_seed=seed, init_seed=seed)
        _, history = train(init_network((2, 4, 1), seed=seed), data, params)
        wins += history[-1] < 0.01
    loc_model = artifacts.load_model(desk_run["out"] / "model_localize.frfd")
    val_mse = float(loc_model.metadata["val_mse"])
    gate("C7 training-sanity",
         wins >= 4 and val_mse < 0.05,
         f"XOR {wins}/5 seeds, localization validation MSE {val_mse:.5f}")


# ---------------------------------------------------------------------------
# criterion 8: determinism and persistence
# ---------------------------------------------------------------------------

def _compact_config(out_dir):
    cfg = default_run_config()
    from rivetscan.config import ScenarioGridParams, SignalParams, TaskParams
    return replace(
        cfg, out_dir=str(out_dir),
        scenarios=ScenarioGridParams(crack_lengths_mm=(8.0, 16.0),
                                     hole_expansion_fractions=(0.3,),
                                     added_masses_kg=(0.012,), n_healthy=6),
        signal=SignalParams(n_bins=256, n_records=4, snr_db=cfg.signal.snr_db),
        localizer=TaskParams(hidden=12, alpha=0.05, max_epochs=60,
                             lambda_grid=(1e-3,), n_restarts=2, trial_epochs=10),
        severity=TaskParams(hidden=8, alpha=0.01, max_epochs=60,
                            lambda_grid=(1e-4,), n_restarts=1, trial_epochs=10))


def test_c8_determinism_and_persistence(tmp_path):
    cfg_file = tmp_path / "compact.cfg"
    runs = []
    for name in ("one", "two"):
        out = tmp_path / name
        save_run_config(_compact_config(out), cfg_file)
        rc = cli.main(["reproduce", "--config", str(cfg_file)])
        assert rc == 0
        runs.append(out)
    diffs = []
    for rel in sorted(p.relative_to(runs[0]).as_posix()
                      for p in runs[0].rglob("*") if p.is_file()):
        if rel == "run_log.txt":
            continue  # the timing sidecar is the one non-deterministic file
        a = (runs[0] / rel).read_bytes()
        b = (runs[1] / rel).read_bytes()
        if a != b:
            diffs.append(rel)

    # container round-trip, bitwise
    rng = np.random.default_rng(801)
    sig = TimeSignal(rng.normal(size=256), dt=1e-3, seed=5)
    artifacts.save_time_records(tmp_path / "rt.frfd", [sig])
    back = artifacts.load_time_records(tmp_path / "rt.frfd")[0]
    roundtrip_ok = np.array_equal(back.samples, sig.samples)

    # deliberate basis mismatch must be rejected
    from rivetscan.identify import BasisMismatchError, TrainedModel
    from rivetscan.mlp import Layer, MlpNetwork
    from rivetscan.pca import FeatureVector
    net = MlpNetwork([Layer(np.zeros((100, 34)), np.zeros(34), "sigmoid")])
    model = TrainedModel(net=net, task="localize", basis_id="basis-x",
                         feature_mean=np.zeros(100), feature_std=np.ones(100))
    try:
        localize(FeatureVector(np.zeros(100), "basis-y"), model)
        mismatch_rejected = False
    except BasisMismatchError:
        mismatch_rejected = True

    gate("C8 determinism-persistence",
         not diffs and roundtrip_ok and mismatch_rejected,
         f"differing files {diffs or 'none'}, round-trip {roundtrip_ok}, "
         f"mismatch rejected {mismatch_rejected}")


# ---------------------------------------------------------------------------
# criterion 9: physics invariants
# ---------------------------------------------------------------------------

def test_c9_physics_invariants():
    model = build_panel(default_panel_config())
    basis = modal_solve(model, 25)
    grid = FrequencyGrid(1000.0, 512)

    q, p = 12, 60
    h_qp = receptance(basis, [q], p, grid, model.damping_ratio)[0]
    h_pq = receptance(basis, [p], q, grid, model.damping_ratio)[0]
    scale = np.abs(h_qp)
    scale[scale == 0] = 1.0
    recip = float(np.max(np.abs(h_qp - h_pq) / scale))

    rng = np.random.default_rng(901)
    pars_worst = 0.0
    for n in (256, 2048):
        x = rng.normal(size=n)
        spec = fft_forward(TimeSignal(x, dt=1e-3))
        te = np.sum(x ** 2)
        fe = np.sum(np.abs(spec) ** 2) / n
        pars_worst = max(pars_worst, abs(te - fe) / te)

    healthy = modal_solve(model, model.n_dof).natural_frequencies
    mono_ok = True
    prev = healthy
    for length in (4.0, 9.0, 14.0, 19.0, 24.0):
        cur = modal_solve(apply_damage(
            model, DamageScenario("crack", (7,), (length,))),
            model.n_dof).natural_frequencies
        mono_ok &= bool(np.all(cur <= prev * (1 + 1e-12)))
        prev = cur
    prev = healthy
    for mass in (0.004, 0.01, 0.016, 0.02):
        cur = modal_solve(apply_damage(
            model, DamageScenario("added_mass", (20,), (mass,))),
            model.n_dof).natural_frequencies
        mono_ok &= bool(np.all(cur <= prev * (1 + 1e-12)))
        prev = cur

    gate("C9 physics-invariants",
         recip < 1e-10 and pars_worst < 1e-10 and mono_ok,
         f"reciprocity {recip:.2e}, Parseval {pars_worst:.2e}, "
         f"monotone sweeps {mono_ok}")
