import csv
import json

import pytest

from edgesac.cli import COMPARISON_HEADER, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC, EXIT_OK, main
from edgesac.config import ExperimentConfig
from edgesac.errors import ConfigError
from edgesac.sensors import CHANNELS

SMALL = {
    "pipeline": {"athletes": 1, "duration_s": 1, "window_len": 25, "stride": 25},
    "classifier": {"windows_per_class": 10, "epochs": 5},
    "workload": {"episode_s": 8},
    "sac": {"episodes": 2, "warmup_steps": 4, "batch_size": 4, "buffer_size": 40, "hidden": [8]},
    "seeds": {"eval_episodes": 2},
}


def write_config(tmp_path, doc=None, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(SMALL if doc is None else doc))
    return str(path)


def run(cfg, out, *cmd, extra=()):
    return main([*cmd, "--config", cfg, "--out", str(out), *extra])


def csv_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_generate_row_counts_and_manifest(tmp_path):
    cfg = write_config(tmp_path)
    assert run(cfg, tmp_path / "o", "generate") == EXIT_OK
    for ch in CHANNELS:
        rows = (tmp_path / "o" / "streams" / "athlete_000" / f"{ch}.csv").read_text().splitlines()
        assert rows[0] == "timestamp_ms,channel,value" and len(rows) == 1 + 50
    man = json.loads((tmp_path / "o" / "manifest_generate.json").read_text())
    assert man["config_hash"] == ExperimentConfig.load(cfg).digest()
    assert len(man["artifacts"]) == len(CHANNELS)


def test_ten_athletes_tagged_round_robin(tmp_path):
    doc = dict(SMALL, pipeline={"athletes": 10, "duration_s": 0.2})
    cfg = write_config(tmp_path, doc)
    assert run(cfg, tmp_path / "o", "generate") == EXIT_OK
    man = json.loads((tmp_path / "o" / "manifest_generate.json").read_text())
    classes = [a["class"] for a in man["athletes"]]
    assert len(classes) == 10 and classes[:7] == ["A01", "A02", "A03", "A04", "A05", "A06", "A01"]


def test_sensor_pipeline_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        for cmd in ("generate", "extract", "classify"):
            assert run(cfg, out, cmd) == EXIT_OK
        outs.append(csv_bytes(out))
    assert outs[0] == outs[1]
    assert "confusion.csv" in outs[0] and "features/athlete_000.csv" in outs[0]
    test_rows = outs[0]["test.csv"].decode().splitlines()
    assert len(test_rows) == 1 + 18


def test_sac_pipeline_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run(cfg, out, "train-sac") == EXIT_OK
        assert run(cfg, out, "compare") == EXIT_OK
        outs.append(csv_bytes(out))
    assert outs[0] == outs[1]
    with open(tmp_path / "run0" / "comparison.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == COMPARISON_HEADER
    assert [r[0] for r in rows[1:]] == ["sac", "average", "frequency"]
    summary = (tmp_path / "run0" / "summary.md").read_text()
    assert "mean_response_ms: best =" in summary


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path)
    run(cfg, tmp_path / "a", "generate", extra=("--seed", "1"))
    run(cfg, tmp_path / "b", "generate", extra=("--seed", "2"))
    assert csv_bytes(tmp_path / "a") != csv_bytes(tmp_path / "b")


def test_no_op_sac_training_keeps_init(tmp_path):
    doc = dict(SMALL, sac=dict(SMALL["sac"], episodes=1, gradient_steps=0))
    cfg = write_config(tmp_path, doc)
    assert run(cfg, tmp_path / "o", "train-sac") == EXIT_OK
    rows = (tmp_path / "o" / "learning_curve.csv").read_text().splitlines()
    assert len(rows) == 2
    from edgesac.sac import SacAgent

    ckpt = SacAgent.load(tmp_path / "o" / "sac_checkpoint.json")
    fresh = SacAgent(ckpt.obs_dim, ckpt.act_dim, ckpt.config, seed=0)
    for p, q in zip(ckpt.actor.params, fresh.actor.params):
        assert p.tobytes() == q.tobytes()


def test_compare_single_policy_and_missing_checkpoint(tmp_path):
    cfg = write_config(tmp_path)
    assert run(cfg, tmp_path / "o", "compare", extra=("--policies", "average")) == EXIT_OK
    rows = (tmp_path / "o" / "comparison.csv").read_text().splitlines()
    assert len(rows) == 2
    assert run(cfg, tmp_path / "o", "compare", extra=("--policies", "sac,average")) == EXIT_MISSING


def test_extract_without_streams_is_missing_prerequisite(tmp_path):
    assert run(write_config(tmp_path), tmp_path / "o", "extract") == EXIT_MISSING


def test_config_errors_exit_one(tmp_path, capsys):
    bad = write_config(tmp_path, {"sac": {"batch_sise": 3}}, "bad.json")
    assert run(bad, tmp_path / "o", "generate") == EXIT_CONFIG
    assert "batch_sise" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{not json")
    assert run(str(tmp_path / "broken.json"), tmp_path / "o", "generate") == EXIT_CONFIG
    cfg = write_config(tmp_path)
    assert run(cfg, tmp_path / "o", "compare", extra=("--policies", "ppo")) == EXIT_CONFIG
    (tmp_path / "file").write_text("")
    assert run(cfg, tmp_path / "file" / "sub", "generate") == EXIT_CONFIG


def test_numeric_failure_exit_two(tmp_path, monkeypatch):
    from edgesac import cli
    from edgesac.errors import NumericError

    def boom(*args, **kwargs):
        raise NumericError("loss became nan", snapshot={"updates": 3})

    monkeypatch.setattr(cli, "train", boom)
    assert run(write_config(tmp_path), tmp_path / "o", "train-sac") == EXIT_NUMERIC
    diag = json.loads((tmp_path / "o" / "sac_failure.json").read_text())
    assert diag["snapshot"] == {"updates": 3}


def test_strict_config_parsing():
    with pytest.raises(ConfigError, match="colour"):
        ExperimentConfig.from_dict({"colour": 1})
    with pytest.raises(ConfigError, match="rate_hz"):
        ExperimentConfig.from_dict({"pipeline": {"rate_hz": -1}})
    with pytest.raises(ConfigError, match="nodes"):
        ExperimentConfig.from_dict({"nodes": []})
    cfg = ExperimentConfig.from_dict({"nodes": [{"cpu_hz": 2e9}, {}]})
    assert [n.id for n in cfg.nodes] == [0, 1] and cfg.nodes[0].cpu_hz == 2e9


def test_config_round_trip_and_defaults():
    cfg = ExperimentConfig()
    back = ExperimentConfig.from_dict(cfg.to_dict())
    assert back.digest() == cfg.digest()
    assert cfg.sac.buffer_size == 500 and cfg.classifier.lr == 0.001 and cfg.classifier.dropout == 0.5
    assert len(cfg.nodes) == 5 and cfg.seeds.eval_seeds()[0] not in cfg.seeds.train_seeds(cfg.sac.episodes)


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("generate", "extract", "classify", "train-sac", "compare"):
        assert cmd in out
