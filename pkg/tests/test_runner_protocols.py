import json

import numpy as np
import pytest

from nlspec.cli import main
from nlspec.config import load_config
from nlspec.runner import run_experiment

TORIC = {
    "kind": "toric_code",
    "parameters": {"l_x": 2, "l_y": 2, "j_star": 1.0, "j_plaquette": 1.0},
    "boundary": "periodic",
}
SMALL_GRID = {"start": 0.3, "stop": 1.5, "points": 3}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def load_meta(out_dir):
    return json.loads((out_dir / "run_metadata.json").read_text())


class TestPumpProbeProtocol:
    def _config(self, tmp_path, pump, probe_1, probe_2):
        payload = {
            "protocol": "pump_probe",
            "model": TORIC,
            "pumps": [{"kind": "pauli_string", "factors": pump, "times": [0.0]}],
            "probe_1": probe_1,
            "probe_2": probe_2,
            "orders": [1, 3, 5],
            "eta_ref": 0.3,
            "evolver": {"kind": "exact"},
            "time_grid": SMALL_GRID,
        }
        return load_config(write_config(tmp_path, payload))

    def test_channel_clouds_and_winding(self, tmp_path):
        # probes compose to the pump string itself: odd orders are supported
        config = self._config(
            tmp_path, {"0": "X", "2": "Z", "4": "Z"}, {"0": "X"}, {"2": "Z", "4": "Z"}
        )
        result = run_experiment(config, output_dir=tmp_path / "out")
        meta = load_meta(tmp_path / "out")
        assert meta["excluded_contrast_points"] == 9  # reference correlator vanishes
        assert np.isfinite(meta["pca_slopes"]["s13"])
        orders = np.loadtxt(tmp_path / "out" / "correlator_orders.csv", delimiter=",", skiprows=1)
        assert orders.shape == (9, 8)  # t1, t2 + (re, im) x 3 orders
        assert np.max(np.abs(orders[:, 2:4])) > 1e-3  # first order is alive

    def test_stabilizer_probes_give_exact_contrast(self, tmp_path):
        # probes are two full stars; the XZZ pump anticommutes with their
        # product, pinning R = -2 at every sample
        config = self._config(
            tmp_path,
            {"0": "X", "2": "Z", "4": "Z"},
            {"0": "X", "1": "X", "2": "X", "6": "X"},
            {"2": "X", "4": "X", "5": "X", "6": "X"},
        )
        run_experiment(config, output_dir=tmp_path / "out")
        meta = load_meta(tmp_path / "out")
        assert meta["excluded_contrast_points"] == 0
        assert meta["mean_contrast"][0] == pytest.approx(-2.0, abs=1e-10)
        contrast = np.loadtxt(tmp_path / "out" / "contrast.csv", delimiter=",", skiprows=1)
        assert np.max(np.abs(contrast[:, 2] + 2.0)) < 1e-10


class TestSweepProtocol:
    def _payload(self):
        return {
            "protocol": "sweep",
            "model": TORIC,
            "pumps": [
                {
                    "kind": "cosine_profile",
                    "momentum": 0,
                    "axis": "Y",
                    "sites": [0, 2, 3, 4],
                    "times": [0.0],
                }
            ],
            "probe_1": {"0": "X"},
            "probe_2": {"0": "Z"},
            "orders": [1, 3, 5],
            "eta_ref": 0.3,
            "evolver": {"kind": "exact"},
            "time_grid": SMALL_GRID,
            "sweep_values": [-0.5, 0.0, 0.5],
        }

    def test_slope_table(self, tmp_path):
        config = load_config(write_config(tmp_path, self._payload()))
        run_experiment(config, output_dir=tmp_path / "out")
        table = np.loadtxt(tmp_path / "out" / "s35_vs_g.csv", delimiter=",", skiprows=1)
        assert table.shape == (3, 3)  # g, s13, s35
        assert np.all(np.isfinite(table))
        assert np.array_equal(table[:, 0], [-0.5, 0.0, 0.5])

    def test_threads_agree_with_serial(self, tmp_path):
        config = load_config(write_config(tmp_path, self._payload()))
        run_experiment(config, output_dir=tmp_path / "serial", threads=1)
        run_experiment(config, output_dir=tmp_path / "parallel", threads=2)
        a = (tmp_path / "serial" / "s35_vs_g.csv").read_bytes()
        b = (tmp_path / "parallel" / "s35_vs_g.csv").read_bytes()
        assert a == b


class Test2DOSProtocol:
    def test_dimer_spectrum_artifacts(self, tmp_path):
        n_pts = 13
        dt = 8 * np.pi / n_pts
        grid = {"start": dt, "stop": n_pts * dt, "points": n_pts}
        payload = {
            "protocol": "2dos",
            "model": {
                "kind": "tls_dimer",
                "parameters": {"omega_0": 0.5, "omega_1": 1.0, "j_exchange": 0.8},
            },
            "pumps": [{"kind": "cosine_profile", "momentum": 0, "axis": "X", "times": [0.0]}],
            "evolver": {"kind": "exact"},
            "time_grid": grid,
            "t1_grid": grid,
            "t3_grid": grid,
            "t2": 0.5,
            "method": "shift_rule",
        }
        config = load_config(write_config(tmp_path, payload))
        run_experiment(config, output_dir=tmp_path / "out")
        meta = load_meta(tmp_path / "out")
        assert meta["p_diag"] > 0 and meta["p_off"] > 0
        s3 = np.loadtxt(tmp_path / "out" / "s3_time.csv", delimiter=",", skiprows=1)
        assert s3.shape == (n_pts * n_pts, 3)
        weights = np.loadtxt(
            tmp_path / "out" / "spectral_weights.csv", delimiter=",", skiprows=1
        )
        assert weights[0] == pytest.approx(meta["p_diag"])


class TestEntropyProtocol:
    def test_artifacts_and_delta_sweep(self, tmp_path):
        payload = {
            "protocol": "entropy",
            "model": {
                "kind": "xxz",
                "parameters": {"n_sites": 6, "delta": 1.0, "h_field": 0.0},
                "boundary": "periodic",
            },
            "pumps": [{"kind": "cosine_profile", "momentum": 1, "axis": "X", "times": [0.0]}],
            "evolver": {"kind": "trotter1", "n_steps": 5},
            "time_grid": {"start": 0.0, "stop": 2.0, "points": 5},
            "eta_grid": [-0.04, -0.02, 0.0, 0.02, 0.04],
            "eta_eval": [0.02],
            "entropy_time": 1.0,
            "block_size": 3,
            "max_order": 2,
            "delta_values": [0.5, 1.0, 1.5],
        }
        config = load_config(write_config(tmp_path, payload))
        run_experiment(config, output_dir=tmp_path / "out")
        for name in (
            "entropy_vs_eta.csv",
            "entropy_coefficients.csv",
            "entropy_profile.csv",
            "entropy_coeffs_vs_delta.csv",
            "entropy_half_vs_delta.csv",
        ):
            assert (tmp_path / "out" / name).exists(), name
        profile = np.loadtxt(tmp_path / "out" / "entropy_profile.csv", delimiter=",", skiprows=1)
        assert profile.shape == (5, 2)  # blocks 1..5
        assert np.all(profile[:, 1] > 0)  # the driven chain is entangled


class TestEnvironmentOverrides:
    def test_out_dir_and_threads_env(self, tmp_path, monkeypatch):
        payload = {
            "protocol": "response",
            "model": {"kind": "xxz", "parameters": {"n_sites": 3, "delta": 1.0, "h_field": 0.2}},
            "pumps": [{"kind": "local_pauli", "site": 0, "axis": "X", "times": [0.0]}],
            "observables": [{"kind": "single_site_pauli", "sites": [1], "axis": "X"}],
            "orders": [1],
            "evolver": {"kind": "exact"},
            "time_grid": {"start": 0.0, "stop": 2.0, "points": 5},
        }
        path = write_config(tmp_path, payload)
        target = tmp_path / "env_out"
        monkeypatch.setenv("NLSPEC_OUT_DIR", str(target))
        monkeypatch.setenv("NLSPEC_THREADS", "1")
        assert main(["run", "--config", str(path)]) == 0
        assert (target / "run_metadata.json").exists()
