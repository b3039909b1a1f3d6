import json

import numpy as np
import pytest

from tiephase.cli import main
from tiephase.config import ExperimentConfig
from tiephase.errors import AliasingError, ConfigError
from tiephase.io import read_map
from tiephase.photons import heralding_efficiency


def test_defaults_resolve():
    cfg = ExperimentConfig()
    cfg.validate()
    src = cfg.source()
    assert heralding_efficiency(4 * cfg.pitch_um, (0, 0), src.sigma_corr, src.eta0) == pytest.approx(0.57)
    assert cfg.parsed_modes() == [("classical", 1), ("quantum", 1), ("multi_frame(100)", 100)]
    assert cfg.resolved_coherence_sigma() == pytest.approx(2 * cfg.sigma_corr_um)


def test_hash_ignores_key_order_and_output_fields():
    a = ExperimentConfig.from_dict({"frames": 3, "seed": 9, "dz_um": [50]})
    b = ExperimentConfig.from_dict({"dz_um": [50.0], "seed": 9, "frames": 3, "out_dir": "elsewhere"})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != a.replace(seed=10).config_hash()


def test_validation_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"nonsense": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dz_um": [-5]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"frames": 0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"modes": ["multi_frame(0)"]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"sample_kind": "custom-file", "sample_path": str(tmp_path / "none.csv")})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"heralding_eta": 0.99})
    with pytest.raises(AliasingError, match="dz=9000"):
        ExperimentConfig.from_dict({"dz_um": [50, 9000]})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_load_with_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"frames": 4, "dz_um": [50, 100]}))
    cfg = ExperimentConfig.load(path, {"frames": 2})
    assert cfg.frames == 2 and cfg.dz_um == [50.0, 100.0]
    assert ExperimentConfig.from_dict({"modes": ["multi_frame:10"]}).parsed_modes() == [("multi_frame(10)", 10)]


def test_cli_sample_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["sample", "--sample-kind", "squares", "--step-rad", "0.4", "-o", str(out)]) == 0
    assert set(np.unique(read_map(out))) == {0.0, 0.4}
    assert main(["sweep", "--modes", "bogus", "--out-dir", str(tmp_path)]) == 2
    assert main(["sweep", "--dz-um", "6000", "--out-dir", str(tmp_path)]) == 3
    assert "max safe" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sweep", "--config", str(bad)]) == 2


def test_cli_sweep_calibrate_plot(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dz_um": [50, 100], "frames": 2, "calibration_frames": 4,
                               "modes": ["classical", "quantum"], "out_dir": str(tmp_path / "run")}))
    assert main(["sweep", "--config", str(cfg), "--seed", "3"]) == 0
    run = tmp_path / "run"
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["seed"] == 3
    for f in manifest["files"]:
        assert (run / f).exists()
    assert (run / "figures" / "pearson_vs_dz.png").exists()
    assert main(["plot", str(run)]) == 0
    assert main(["calibrate", "--config", str(cfg), "--n-frames", "3", "--out-dir", str(tmp_path / "cal")]) == 0
    assert "k_opt" in json.loads((tmp_path / "cal" / "calibration.json").read_text())
    assert main(["plot", str(tmp_path / "nothing")]) == 2


def test_cli_simulate_then_reconstruct(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--dz-um", "100", "--frames", "1", "--calibration-frames", "2",
                 "--out-dir", str(sim)]) == 0
    plus, minus = sim / "dz100_plus_f0000", sim / "dz100_minus_f0000"
    out = tmp_path / "phase.csv"
    args = ["reconstruct", "--plus", str(plus / "signal.csv"), "--minus", str(minus / "signal.csv"),
            "--dz-um", "100", "--in-focus", str(plus / "mean_idler.csv"), "--d", "4", "-o", str(out)]
    assert main(args) == 0
    assert read_map(out).shape == (80, 80)
    # an idler set is all-or-nothing
    assert main(args + ["--idler-plus", str(plus / "idler.csv")]) == 2
