import json
import os
import time

import pytest
import yaml

from srattack.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_OK, EXIT_PARSE, EXIT_RUNTIME, EXIT_USAGE, run
from srattack.harness.campaigns import report_from_records
from srattack.harness.records import CampaignStore


def _write(path, d):
    path.write_text(yaml.safe_dump(d))
    return str(path)


def _models(cfg):
    return os.path.join(cfg["paths"]["output_dir"], "models")


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-corpus -> train -> enroll -> calibrate on the generated WAV directory."""
    root = tmp_path_factory.mktemp("cli")
    t0 = time.perf_counter()
    gen = _write(root / "gen.yaml", {"version": 1, "master_seed": 3, "paths": {"output_dir": str(root)}})
    assert run(["gen-corpus", "--config", gen]) == EXIT_OK
    cfg = {"version": 1, "master_seed": 3, "corpus": {"wav_dir": str(root / "corpus")},
           "system": {"task": "osi"}, "attack": {"n_trials": 3, "fakebob": {"epsilon": 0.01}},
           "paths": {"output_dir": str(root / "run")}}
    path = _write(root / "exp.yaml", cfg)
    for cmd in ("train", "enroll", "calibrate"):
        assert run([cmd, "--config", path]) == EXIT_OK
    return root, path, cfg, t0


def test_full_pipeline_under_ten_minutes(pipeline, capsys):
    root, path, _, t0 = pipeline
    capsys.readouterr()
    code, out, _ = _run(capsys, "attack", "--config", path)
    assert code == EXIT_OK
    code, rep, _ = _run(capsys, "report", "--records", out["out_dir"])
    assert code == EXIT_OK
    assert time.perf_counter() - t0 < 600
    # report over the persisted log equals the in-process aggregate
    assert rep["report"] == out["report"]
    records = CampaignStore(out["out_dir"]).load()
    assert rep["report"] == report_from_records(records).to_dict()
    assert len(records) == 3 and all(os.path.exists(CampaignStore(out["out_dir"]).wav_path(r)) for r in records)


def test_calibrated_threshold_and_evaluate(pipeline, capsys):
    _, path, _, _ = pipeline
    code, out, _ = _run(capsys, "calibrate", "--config", path)
    assert code == EXIT_OK and abs(out["calibration_far"]["all"] - 0.10) <= 0.03
    code, out, _ = _run(capsys, "evaluate", "--config", path)
    assert code == EXIT_OK and "far" in out["report"] and "frr" in out["report"]


def test_attack_without_recognizer_is_config_error(pipeline, tmp_path, capsys):
    _, _, cfg, _ = pipeline
    bad = dict(cfg, paths={"output_dir": str(tmp_path / "out"), "recognizer": str(tmp_path / "nope.npz")})
    code, out, err = _run(capsys, "attack", "--config", _write(tmp_path / "bad.yaml", bad))
    assert code == EXIT_CONFIG and err["error"]["category"] == "config" and out is None
    assert not (tmp_path / "out").exists()


def test_error_categories_are_distinct(pipeline, tmp_path, capsys):
    _, path, cfg, _ = pipeline
    code, _, err = _run(capsys, "attack", "--config", path, "--bogus")
    assert code == EXIT_USAGE and err["error"]["category"] == "usage"
    code, _, err = _run(capsys, "attack", "--config", str(tmp_path / "missing.yaml"))
    assert code == EXIT_MISSING and err["error"]["category"] == "missing-file"
    code, _, err = _run(capsys, "attack", "--config", _write(tmp_path / "v.yaml", dict(cfg, version=9)))
    assert code == EXIT_CONFIG
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"not a model")
    code, _, err = _run(capsys, "attack", "--config",
                        _write(tmp_path / "j.yaml", dict(cfg, paths={"recognizer": str(junk)})))
    assert code == EXIT_PARSE and err["error"]["category"] == "parse"
    silent = dict(cfg, defense={"kind": "quantize", "q": 32767},
                  paths={**cfg["paths"], "output_dir": str(tmp_path / "q"), "models_dir": _models(cfg)})
    code, _, err = _run(capsys, "defend", "--setting", "s2", "--config", _write(tmp_path / "q.yaml", silent))
    assert code == EXIT_RUNTIME and "NoVoicedFrames" in err["error"]["message"]
    assert len({EXIT_USAGE, EXIT_CONFIG, EXIT_MISSING, EXIT_PARSE, EXIT_RUNTIME}) == 5


def test_estimate_threshold_and_defend(pipeline, tmp_path, capsys):
    _, _, cfg, _ = pipeline
    d = dict(cfg, attack={"n_trials": 1, "fakebob": {"epsilon": 0.01}}, defense={"kind": "median", "k": 7},
             paths={**cfg["paths"], "output_dir": str(tmp_path / "d"), "models_dir": _models(cfg)})
    path = _write(tmp_path / "d.yaml", d)
    code, out, _ = _run(capsys, "estimate-threshold", "--config", path)
    (row,) = out["estimates"]
    assert code == EXIT_OK and row["theta_hat"] >= row["theta"]
    code, out, _ = _run(capsys, "attack", "--config", path)
    assert code == EXIT_OK
    code, s1, _ = _run(capsys, "defend", "--setting", "s1", "--config", path, "--records", out["out_dir"])
    assert code == EXIT_OK and "utr" in s1["defended"]
    code, s2, _ = _run(capsys, "defend", "--setting", "s2", "--config", path)
    assert code == EXIT_OK and os.path.exists(os.path.join(s2["out_dir"], "defended_model.npz"))
