"""End-to-end tests of the command line, run in-process through main().

Exit code contract: 0 success, 1 tolerance failure, 2 bad input or config.
"""

import json
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from srlite import image, network, reparam
from srlite.cli import main
from srlite.network import NetworkConfig


def write_config(path, **overrides):
    cfg = NetworkConfig(**overrides)
    path.write_text(cfg.to_json())
    return cfg


def write_png(path, shape=(16, 24, 3), seed=0):
    arr = np.random.default_rng(seed).integers(0, 255, size=shape, endpoint=True)
    image.save_png(path, arr.astype(np.uint8))
    return path


class TestInfo:
    def test_reports_versions_and_default_config(self, capsys):
        assert main(["info"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("srlite ")
        assert '"model_dim": 64' in out
        assert '"attention_variant": "shrinking"' in out


class TestParamCount:
    def test_default_config_total(self, capsys):
        assert main(["param-count"]) == 0
        last = capsys.readouterr().out.strip().splitlines()[-1]
        assert int(last) == network.param_count(NetworkConfig())

    def test_override_flags(self, capsys):
        code = main(["param-count", "--model-dim", "16", "--heads", "4",
                     "--decoder-layers", "0", "--in-channels", "1"])
        assert code == 0
        last = capsys.readouterr().out.strip().splitlines()[-1]
        cfg = NetworkConfig(model_dim=16, heads=4, decoder_layers=0, in_channels=1)
        assert int(last) == network.param_count(cfg)

    def test_fused_flag(self, capsys):
        assert main(["param-count", "--model-dim", "16", "--heads", "4", "--fused"]) == 0
        last = capsys.readouterr().out.strip().splitlines()[-1]
        cfg = NetworkConfig(model_dim=16, heads=4, fuse_rirbs=True)
        assert int(last) == network.param_count(cfg)

    def test_config_file_plus_override(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        write_config(path, model_dim=16, heads=4, decoder_layers=2)
        assert main(["param-count", "--config", str(path), "--decoder-layers", "1"]) == 0
        last = capsys.readouterr().out.strip().splitlines()[-1]
        cfg = NetworkConfig(model_dim=16, heads=4, decoder_layers=1)
        assert int(last) == network.param_count(cfg)

    def test_verbose_breakdown(self, capsys):
        assert main(["param-count", "--model-dim", "16", "--heads", "4", "--verbose"]) == 0
        out = capsys.readouterr().out
        assert "per_decoder_layer:" in out
        assert int(out.strip().splitlines()[-1]) > 0

    def test_invalid_override_is_exit_2(self, capsys):
        assert main(["param-count", "--model-dim", "10", "--heads", "4"]) == 2
        assert "error:" in capsys.readouterr().err


class TestVerifyFusion:
    def test_passes_at_default_tolerance(self, capsys):
        assert main(["verify-fusion", "--channels", "8", "--trials", "5"]) == 0
        assert "-> pass" in capsys.readouterr().out

    def test_fails_at_impossible_tolerance(self, capsys):
        code = main(["verify-fusion", "--channels", "8", "--trials", "5",
                     "--tol", "1e-12"])
        assert code == 1
        assert "-> FAIL" in capsys.readouterr().out

    def test_f64_meets_tight_tolerance(self, capsys):
        code = main(["verify-fusion", "--channels", "8", "--trials", "5",
                     "--dtype", "f64", "--tol", "1e-10"])
        assert code == 0

    def test_saved_block_dir(self, tmp_path, capsys):
        p = reparam.make_random_rirb(4, seed=3)
        reparam.save_rirb(tmp_path / "blk", p)
        assert main(["verify-fusion", "--params-dir", str(tmp_path / "blk")]) == 0

    def test_missing_dir_is_exit_2(self, capsys):
        assert main(["verify-fusion", "--params-dir", "/no/such/dir"]) == 2
        assert "error:" in capsys.readouterr().err


class TestFuse:
    def test_fuse_saved_block(self, tmp_path, capsys):
        p = reparam.make_random_rirb(4, ratio=2, seed=1)
        reparam.save_rirb(tmp_path / "blk", p)
        assert main(["fuse", str(tmp_path / "blk"), str(tmp_path / "fused")]) == 0
        assert "fused 4->8->4 block" in capsys.readouterr().out

        sidecar = json.loads((tmp_path / "fused" / "fused.json").read_text())
        assert sidecar == {"in_ch": 4, "out_ch": 4, "ksize": 3, "pad": 1}
        loaded = reparam.load_fused_conv(tmp_path / "fused")
        expected = reparam.fuse_rirb(p)
        assert_array_equal(loaded.kernel.weight, expected.kernel.weight)
        assert_array_equal(loaded.kernel.bias, expected.kernel.bias)

    def test_missing_input_is_exit_2(self, tmp_path, capsys):
        assert main(["fuse", str(tmp_path / "nope"), str(tmp_path / "out")]) == 2


class TestBenchCommands:
    def test_attn_json_file(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(["bench-attn", "--n", "8", "16", "--d", "2", "--heads", "2",
                     "--repeats", "1", "--json", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert len(doc["entries"]) == 6  # 2 lengths x 3 variants
        assert doc["environment"]["thread_count"] == 1

    def test_attn_csv_stdout(self, capsys):
        code = main(["bench-attn", "--n", "8", "--d", "2", "--heads", "2",
                     "--variants", "kernel", "--repeats", "1", "--csv"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "label,n,d,heads,wall_time_ms,aux_bytes_peak,max_abs_err"
        assert len(lines) == 2
        assert lines[1].startswith("kernel,8,2,2,")

    def test_attn_table_default(self, capsys):
        code = main(["bench-attn", "--n", "8", "--d", "2", "--heads", "2",
                     "--repeats", "1"])
        assert code == 0
        assert "label" in capsys.readouterr().out

    def test_fusion_csv_file(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        code = main(["bench-fusion", "--shapes", "4x6x8", "--repeats", "1",
                     "--csv", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "label,n,d,heads,wall_time_ms,aux_bytes_peak,max_abs_err"
        assert len(lines) == 3
        assert {row.split(",")[0] for row in lines[1:]} == {"fused", "unfused"}

    def test_bad_shape_is_exit_2(self, capsys):
        assert main(["bench-fusion", "--shapes", "4x6", "--repeats", "1"]) == 2
        assert "error:" in capsys.readouterr().err


class TestForward:
    def setup_case(self, tmp_path, **cfg_overrides):
        cfg_path = tmp_path / "cfg.json"
        cfg = write_config(cfg_path, model_dim=16, heads=4, decoder_layers=1,
                           **cfg_overrides)
        png = write_png(tmp_path / "in.png")
        return cfg, cfg_path, png

    def test_upscales_and_matches_library(self, tmp_path, capsys):
        cfg, cfg_path, png = self.setup_case(tmp_path)
        out_png = tmp_path / "out.png"
        code = main(["forward", "--config", str(cfg_path), "--input", str(png),
                     "--output", str(out_png)])
        assert code == 0
        assert "24x16 -> 48x32" in capsys.readouterr().out

        produced = image.load_png(out_png)
        assert produced.shape == (32, 48, 3)
        lr = image.to_tensor(image.load_png(png))
        hr = network.super_resolve(network.init_params(cfg), cfg, lr)
        assert_array_equal(produced, image.from_tensor(hr))

    def test_idempotent_output_bytes(self, tmp_path, capsys):
        _, cfg_path, png = self.setup_case(tmp_path)
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        assert main(["forward", "--config", str(cfg_path), "--input", str(png),
                     "--output", str(a)]) == 0
        assert main(["forward", "--config", str(cfg_path), "--input", str(png),
                     "--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_saved_params_round_trip(self, tmp_path, capsys):
        cfg, cfg_path, png = self.setup_case(tmp_path)
        params = network.init_params(cfg)
        network.save_params(tmp_path / "ckpt", params, cfg)
        out_png = tmp_path / "out.png"
        code = main(["forward", "--config", str(cfg_path), "--input", str(png),
                     "--output", str(out_png), "--params", str(tmp_path / "ckpt")])
        assert code == 0
        lr = image.to_tensor(image.load_png(png))
        hr = network.super_resolve(params, cfg, lr)
        assert_array_equal(image.load_png(out_png), image.from_tensor(hr))

    def test_params_config_mismatch_is_exit_2(self, tmp_path, capsys):
        cfg, cfg_path, png = self.setup_case(tmp_path)
        other = replace(cfg, seed=99)
        network.save_params(tmp_path / "ckpt", network.init_params(other), other)
        code = main(["forward", "--config", str(cfg_path), "--input", str(png),
                     "--output", str(tmp_path / "out.png"),
                     "--params", str(tmp_path / "ckpt")])
        assert code == 2
        assert "different config" in capsys.readouterr().err

    def test_non_rgb_config_is_exit_2(self, tmp_path, capsys):
        _, cfg_path, png = self.setup_case(tmp_path, in_channels=1)
        code = main(["forward", "--config", str(cfg_path), "--input", str(png),
                     "--output", str(tmp_path / "out.png")])
        assert code == 2
        assert "in_channels" in capsys.readouterr().err

    def test_unknown_config_key_is_exit_2(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        payload = json.loads(NetworkConfig().to_json())
        payload["window_size"] = 7
        cfg_path.write_text(json.dumps(payload))
        png = write_png(tmp_path / "in.png")
        code = main(["forward", "--config", str(cfg_path), "--input", str(png),
                     "--output", str(tmp_path / "out.png")])
        assert code == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_missing_input_is_exit_2(self, tmp_path, capsys):
        _, cfg_path, _ = self.setup_case(tmp_path)
        code = main(["forward", "--config", str(cfg_path),
                     "--input", str(tmp_path / "missing.png"),
                     "--output", str(tmp_path / "out.png")])
        assert code == 2


class TestParsing:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["upscale-everything"])
        assert exc.value.code == 2

    def test_no_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
