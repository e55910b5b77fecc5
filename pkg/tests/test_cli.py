import json
import logging
import os

import pytest

from ddpm_inversion import build_parser, main, overrides_from_args, summary_line


def _run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path), "--no-plots"])


def test_reconstruct_prints_error(tmp_path, capsys):
    assert _run(tmp_path, "reconstruct", "--samples", "2", "--steps", "10") == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("max abs reconstruction error:")
    assert float(line.split(":")[1]) < 1e-8
    assert os.path.exists(tmp_path / "manifest.json")
    assert os.path.exists(tmp_path / "logs" / "ddpm_inversion.log")


def test_invalid_eta_exits_2(tmp_path, capsys):
    assert _run(tmp_path, "sample", "--eta", "1.5") == 2
    assert "InvalidConfigError" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert _run(tmp_path, "sample", "--config", str(tmp_path / "absent.json")) == 2


@pytest.mark.parametrize("edits", [
    {"shift": {"distances": ["x"]}},
    {"color": {"mask": {"rows": [1]}}},
])
def test_malformed_edits_exit_2(tmp_path, capsys, edits):
    config = tmp_path / "edits.json"
    config.write_text(json.dumps({"edits": edits}), encoding="utf-8")
    assert _run(tmp_path, "shift", "--config", str(config)) == 2
    assert "InvalidConfigError" in capsys.readouterr().err


def test_deterministic_inversion_request_exits_3(tmp_path):
    assert _run(tmp_path, "invert", "--eta", "0", "--steps", "10") == 3


def test_unknown_kind_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        _run(tmp_path, "paint")
    assert excinfo.value.code == 2


def test_invert_then_reconstruct_from_file(tmp_path, capsys):
    latent = str(tmp_path / "code.efnz")
    assert _run(tmp_path / "invert", "invert", "--steps", "10", "--latent", latent,
                "--method", "cyclediffusion") == 0
    assert os.path.exists(latent)
    config = tmp_path / "toy.json"
    config.write_text(json.dumps({"model": {"type": "isotropic_gaussian", "mean": [10.0, 10.0]}}),
                      encoding="utf-8")
    assert _run(tmp_path / "reconstruct", "reconstruct", "--config", str(config), "--steps", "10",
                "--latent", latent) == 0
    assert "max abs reconstruction error" in capsys.readouterr().out


def test_missing_latent_exits_2(tmp_path, capsys):
    assert _run(tmp_path, "reconstruct", "--steps", "10", "--latent", str(tmp_path / "absent.efnz")) == 2
    captured = capsys.readouterr()
    assert "max abs reconstruction error" not in captured.out
    assert "latent file not found" in captured.err


def test_rerun_from_manifest_matches(tmp_path):
    assert _run(tmp_path / "first", "toy2d-stats", "--samples", "4", "--steps", "10", "--seed", "3") == 0
    manifest = tmp_path / "first" / "manifest.json"
    assert main(["--config", str(manifest), "--out", str(tmp_path / "second")]) == 0
    with open(manifest, encoding="utf-8") as first, \
            open(tmp_path / "second" / "manifest.json", encoding="utf-8") as second:
        first, second = json.load(first), json.load(second)
    assert first["artifacts"] == second["artifacts"]
    assert second["config"]["experiment"]["seed"] == 3


def test_logger_is_released_after_run(tmp_path):
    _run(tmp_path, "sample", "--samples", "1", "--steps", "5")
    assert logging.getLogger("core").handlers == []


def test_overrides_only_carry_given_flags():
    args = build_parser().parse_args(["shift", "--seed", "4", "--steps", "50", "--no-plots", "--log-level", "debug"])
    overrides = overrides_from_args(args)
    assert overrides["experiment"] == {"seed": 4, "plots": False}
    assert overrides["schedule"] == {"respacing": 50}
    assert overrides["logging"] == {"level": "DEBUG"}
    assert overrides_from_args(build_parser().parse_args([])) == {"experiment": {}, "schedule": {}}


def test_summary_line():
    assert summary_line("reconstruct", {"max_abs_error": 2.5e-15}) == "max abs reconstruction error: 2.500e-15"
    assert summary_line("flip", {"samples": 3}) == "flip: samples=3"
