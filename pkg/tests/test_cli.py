import json

import pytest

from koopcompress import cli

TINY = {
    "dictionary": {"max_degree": 2},
    "dataset": {"n_train_traj": 4, "n_eval_traj": 3, "seed": 7},
    "ratios": [[1.0, 1.0], [0.5, 0.5]],
    "svd_ranks": [5],
    "horizon": 20,
    "bench_ratios": [1.0, 0.5],
}


def write_tiny(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY))
    return path


def run(tmp_path, cfg_path, command, *extra):
    return cli.main(["--config", str(cfg_path), "--out-dir", str(tmp_path),
                     *extra, command])


def test_defaults_are_deep_copied():
    cfg = cli.load_config(None, {})
    cfg["dataset"]["seed"] = -1
    assert cli.DEFAULT_CONFIG["dataset"]["seed"] != -1


def test_unknown_keys_rejected():
    with pytest.raises(cli.CommandError) as err:
        cli.load_config(None, {"typo": 1})
    assert err.value.category == "config"
    with pytest.raises(cli.CommandError):
        cli.load_config(None, {"dataset": {"typo": 1}})


def test_override_precedence(tmp_path):
    path = write_tiny(tmp_path)
    cfg = cli.load_config(path, {"dataset": {"seed": 99}})
    assert cfg["dataset"]["seed"] == 99          # flag beats file
    assert cfg["dataset"]["n_train_traj"] == 4   # file beats default
    assert cfg["cartpole"]["dt"] == 0.05         # default survives


def test_value_validation():
    for bad in ({"ratios": [[0.0, 1.0]]},
                {"svd_ranks": [0]},
                {"horizon": 0},
                {"bench_steps": 10},
                {"dataset": {"n_train_traj": 0}}):
        with pytest.raises(cli.CommandError):
            cli.load_config(None, bad)


def test_content_address_keys():
    base = cli.load_config(None, {})
    other_tol = cli.load_config(None, {"svd_tolerance": 1e-3})
    other_seed = cli.load_config(None, {"dataset": {"seed": 1}})
    ws = cli.Workspace("out", base)
    ws_tol = cli.Workspace("out", other_tol)
    ws_seed = cli.Workspace("out", other_seed)
    assert ws.data_key == ws_tol.data_key       # data ignores the fit knob
    assert ws.model_key != ws_tol.model_key
    assert ws.data_key != ws_seed.data_key
    assert cli.Workspace("out", base).model_key == ws.model_key


def test_parse_ratio_pairs():
    assert cli._parse_ratio_pairs("0.8:0.8,0.4:0.2") == [[0.8, 0.8], [0.4, 0.2]]
    import argparse
    with pytest.raises(argparse.ArgumentTypeError):
        cli._parse_ratio_pairs("0.8")


def test_pipeline_end_to_end(tmp_path, capsys):
    cfg = write_tiny(tmp_path)
    assert run(tmp_path, cfg, "generate") == 0
    out = capsys.readouterr().out
    assert "train: 4 trajectories, 400 snapshot pairs" in out
    assert "eval: 3 trajectories" in out

    assert run(tmp_path, cfg, "train") == 0
    assert "dictionary size D = 15" in capsys.readouterr().out

    assert run(tmp_path, cfg, "compress") == 0
    out = capsys.readouterr().out
    assert "[1, 1] -> K' 15x15" in out
    assert "[0.5, 0.5] -> K' 7x7" in out
    # second run hits the cache and stays byte-identical
    assert run(tmp_path, cfg, "compress") == 0
    assert "cached" in capsys.readouterr().out

    assert run(tmp_path, cfg, "evaluate") == 0
    capsys.readouterr()
    ws = cli.Workspace(tmp_path, cli.load_config(cfg, {}))
    summary = json.loads(ws.report_file("accuracy-summary", "json").read_text())
    assert {"simulator", "full", "ratio-1-1", "ratio-0.5-0.5",
            "svd-5"} <= set(summary)
    assert summary["simulator"]["mse_mean"]["theta"] == 0.0
    assert (summary["ratio-1-1"]["mse_mean"]["theta"]
            == summary["full"]["mse_mean"]["theta"])
    sizes = json.loads(ws.report_file("sizes", "json").read_text())
    assert sizes["full"] == 225
    assert sizes["ratio-0.5-0.5"] == 49
    assert sizes["svd-5"] == 150
    assert "simulator" not in sizes

    assert run(tmp_path, cfg, "bench") == 0
    capsys.readouterr()
    timing = ws.report_file("timing", "csv").read_text().splitlines()
    assert timing[0] == "row_ratio,col_1,col_0.5"
    assert len(timing) == 3

    assert run(tmp_path, cfg, "report") == 0
    out = capsys.readouterr().out
    assert "predictor" in out
    report = json.loads(ws.report_file("report", "json").read_text())
    assert report["dimension"] == 15
    assert report["memory_matched"]
    assert "timing" in report


def test_generate_is_bit_identical(tmp_path):
    cfg = write_tiny(tmp_path)
    assert run(tmp_path, cfg, "generate") == 0
    ws = cli.Workspace(tmp_path, cli.load_config(cfg, {}))
    first = ws.data_csv("train").read_bytes()
    assert run(tmp_path, cfg, "generate") == 0
    assert ws.data_csv("train").read_bytes() == first


def test_missing_artifact_exit_code(tmp_path, capsys):
    cfg = write_tiny(tmp_path)
    assert run(tmp_path, cfg, "train") == 1
    assert "missing-artifact" in capsys.readouterr().err
    assert run(tmp_path, cfg, "evaluate") == 1
    assert "missing-artifact" in capsys.readouterr().err


def test_bad_config_file_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["--config", str(bad), "--out-dir", str(tmp_path),
                     "generate"]) == 1
    assert "error: config:" in capsys.readouterr().err
    missing = tmp_path / "nope.json"
    assert cli.main(["--config", str(missing), "--out-dir", str(tmp_path),
                     "generate"]) == 1
    assert "not found" in capsys.readouterr().err


def test_dictionary_mismatch_detected(tmp_path, capsys):
    cfg = write_tiny(tmp_path)
    assert run(tmp_path, cfg, "generate") == 0
    assert run(tmp_path, cfg, "train") == 0
    ws = cli.Workspace(tmp_path, cli.load_config(cfg, {}))
    sidecar_path = f"{ws.koopman_prefix()}.json"
    doc = json.loads(open(sidecar_path).read())
    doc["dict_hash"] = "0" * len(doc["dict_hash"])
    with open(sidecar_path, "w") as fh:
        json.dump(doc, fh)
    capsys.readouterr()
    assert run(tmp_path, cfg, "compress") == 1
    assert "artifact-mismatch" in capsys.readouterr().err


def test_rank_above_dictionary_size_rejected(tmp_path, capsys):
    cfg = write_tiny(tmp_path)
    for command in ("generate", "train", "compress"):
        assert run(tmp_path, cfg, command) == 0
    capsys.readouterr()
    assert run(tmp_path, cfg, "evaluate", "--svd-ranks", "99") == 1
    assert "exceeds D = 15" in capsys.readouterr().err
