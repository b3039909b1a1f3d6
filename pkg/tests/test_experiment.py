import numpy as np
import pytest
from scipy.stats import spearmanr

from tiephase.config import ExperimentConfig
from tiephase.experiment import Simulation, calibrate, read_table, recenter, run_experiment
from tiephase.optics import PhaseMap

SMALL = dict(frames=3, dz_um=[50.0, 100.0], calibration_frames=10, images=False, plots=False)


def test_minimal_run_emits_one_row_and_one_image(tmp_path):
    cfg = ExperimentConfig(frames=1, modes=["classical"], dz_um=[50.0], calibration_frames=4,
                           plots=False, out_dir=str(tmp_path))
    report = run_experiment(cfg)
    assert len(report.rows) == 1
    rows = read_table(tmp_path / "metrics.csv")
    assert len(rows) == 1
    assert set(rows[0]) == {"dz_um", "mode", "d", "frame_seed", "pearson", "phase_step", "alpha", "k_opt"}
    images = sorted(p.name for p in (tmp_path / "images").iterdir())
    assert images == ["phase_dz50_classical_d4.pgm", "reference.pgm"]
    assert report.provenance["config_hash"] == cfg.config_hash()


def test_quantum_with_zero_gain_reproduces_classical():
    cfg = ExperimentConfig(modes=["classical", "quantum"], k_override=0.0, **SMALL)
    report = run_experiment(cfg, write=False)
    c = report.select(mode="classical")
    q = report.select(mode="quantum")
    assert [r["pearson"] for r in c] == [r["pearson"] for r in q]
    assert [r["phase_step"] for r in c] == [r["phase_step"] for r in q]


def test_pool_matches_serial(tmp_path):
    base = ExperimentConfig(modes=["classical", "quantum"], **SMALL)
    a = run_experiment(base.replace(out_dir=str(tmp_path / "a"), threads=1))
    b = run_experiment(base.replace(out_dir=str(tmp_path / "b"), threads=2))
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a.provenance == b.provenance


def test_rows_are_ordered_by_dz_mode_frame():
    cfg = ExperimentConfig(modes=["quantum", "classical"], **SMALL)
    rows = run_experiment(cfg, write=False).rows
    keys = [(r["dz_um"], r["mode"]) for r in rows]
    assert keys[:3] == [(50.0, "quantum")] * 3
    assert keys[3:6] == [(50.0, "classical")] * 3


def test_calibration_with_perfect_twins():
    cfg = ExperimentConfig(eta0=1.0, sigma_corr_um=0.0, read_noise_e=0.0, filter_d=[1, 4])
    rec = calibrate(cfg, 20)
    for d in (1, 4):
        assert rec.k_opt[d] == pytest.approx(1.0, rel=0.01)
        assert rec.noise_reduction[d] < 1e-6


def test_calibration_at_default_efficiency():
    cfg = ExperimentConfig()
    rec = calibrate(cfg, 100)
    assert rec.noise_reduction[4] == pytest.approx(0.675, abs=0.02)
    assert rec.eta_measured[4] == pytest.approx(0.57, abs=0.02)
    assert 1e-3 <= rec.alpha[100.0] <= 1e-2


def test_recenter_undoes_half_pixel_shift():
    cfg = ExperimentConfig()
    g = cfg.grid()
    x, y = g.coords()
    blob = np.exp(-(x**2 + y**2) / 200.0)
    shifted = np.exp(-((x + 2.5) ** 2 + (y + 2.5) ** 2) / 200.0)  # half a 5 um pixel
    np.testing.assert_allclose(recenter(PhaseMap(g, shifted), 4).values, blob, atol=1e-6)
    odd = PhaseMap(g, blob)
    assert recenter(odd, 3) is odd


def test_noiseless_simulation_step_is_nominal():
    sim = Simulation(ExperimentConfig())
    ip, im = sim.defocus_pair(50.0)
    assert ip.shape == (80, 80)
    assert ip.mean() == pytest.approx(1000.0, rel=0.01)
    assert sim.in_focus.mean() == pytest.approx(1000.0)


def test_multi_frame_pearson_grows_with_frame_count():
    ns = [1, 4, 16, 64]
    cfg = ExperimentConfig(frames=8, dz_um=[100.0], modes=[f"multi_frame({n})" for n in ns],
                           calibration_frames=4, images=False, plots=False)
    report = run_experiment(cfg, write=False)
    trends = []
    for idx in range(cfg.frames):
        vals = [report.select(mode=f"multi_frame({n})")[idx]["pearson"] for n in ns]
        trends.append(spearmanr(ns, vals).statistic)
    assert np.mean(trends) > 0


def test_step_estimate_unbiased_near_focus_and_low_far_out():
    cfg = ExperimentConfig(frames=20, dz_um=[100.0, 400.0], modes=["multi_frame(100)"],
                           calibration_frames=4, images=False, plots=False)
    summary = {r["dz_um"]: r for r in run_experiment(cfg, write=False).summary}
    near, far = summary[100.0], summary[400.0]
    assert abs(near["step_mean"] - 0.230) < 3 * near["step_se"] + 0.005
    assert far["step_mean"] < 0.230 - 5 * far["step_se"]
