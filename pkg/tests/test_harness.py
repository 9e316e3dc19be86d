import json

import numpy as np
import pytest

from dagflow.errors import CompatibilityError, ConfigError
from dagflow.harness.checkpoint import (
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from dagflow.harness.cli import main
from dagflow.harness.config import RunConfig, dump_config, parse_config, parse_config_text
from dagflow.harness.metrics import MetricsWriter, encode_record, read_metrics, truncate_after
from dagflow.harness.svg import Series, compare_runs, render_svg

SMALL_DISCRETE = """
[task]
chain = discrete
S = 6
T = 3

[reward]
id = table
beta_max = 1.0
table = [0.1, 0.5, 0.2, 0.9, 0.4, 0.3]

[algorithm]
algorithm = {algo}
lr_policy = 0.05
lr_flow = 0.05
rollouts_per_epoch = 32
opt_steps_per_epoch = 4

[run]
seed = 3
epochs = {epochs}
eval_every = 2
"""


def write_config(tmp_path, algo="dag-db", epochs=4, name="c.ini"):
    path = tmp_path / name
    path.write_text(SMALL_DISCRETE.format(algo=algo, epochs=epochs))
    return path


# -- config -------------------------------------------------------------------

def test_unknown_key_reports_line(tmp_path):
    path = tmp_path / "x.ini"
    path.write_text("[task]\nchain = discrete\n\n[algorithm]\nlearing_rate = 0.1\n")
    with pytest.raises(ConfigError, match=r"x\.ini:5: unknown key 'learing_rate' in \[algorithm\]"):
        parse_config(path)


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text("[tasks]\nT = 3\n")


def test_bad_value():
    with pytest.raises(ConfigError, match="bad value for 'T'"):
        parse_config_text("[task]\nT = five\n")


def test_missing_dataset(tmp_path):
    path = tmp_path / "d.ini"
    path.write_text("[task]\ndataset = nowhere.csv\n")
    with pytest.raises(ConfigError, match="dataset file not found"):
        parse_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.ini")


def test_invariant_violation():
    with pytest.raises(ConfigError):
        parse_config_text("[algorithm]\nrollouts_per_epoch = 10\nopt_steps_per_epoch = 3\n")


@pytest.mark.parametrize("name", ["discrete.ini", "ring.ini"])
def test_dump_is_idempotent(configs_dir, name):
    once = dump_config(parse_config(configs_dir / name))
    twice = dump_config(parse_config_text(once))
    assert once == twice


def test_defaults_fill_in():
    cfg = parse_config_text("")
    assert cfg.algorithm.lr_policy == 3e-4 and cfg.algorithm.clip_eps == 1e-4
    assert cfg.algorithm.rollouts_per_epoch == 512 and cfg.algorithm.epochs == 100
    assert cfg.reward.id == "ring"


def test_digest_ignores_output_location():
    cfg = RunConfig()
    assert cfg.digest() == cfg.with_out("elsewhere").digest()
    assert cfg.digest() != cfg.with_seed(1).digest()


# -- metrics ------------------------------------------------------------------

def test_metrics_key_order_and_append(tmp_path):
    w = MetricsWriter(tmp_path / "m.jsonl", truncate=True)
    w.write({"reward_mean": 1.5, "epoch": 0, "step": 1, "phase": "align", "zeta": 2})
    w.write({"epoch": 1, "step": 2, "reward_mean": 2.0})
    lines = (tmp_path / "m.jsonl").read_text().splitlines()
    assert lines[0] == '{"phase":"align","epoch":0,"step":1,"reward_mean":1.5,"zeta":2}'
    with pytest.raises(ValueError):
        w.write({"epoch": 0, "step": 5})


def test_metrics_reject_nan():
    with pytest.raises(ValueError):
        encode_record({"loss": float("nan")})


def test_torn_trailing_line_is_dropped(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"epoch":0}\n{"epoch":1}\n{"epo')
    assert read_metrics(p) == [{"epoch": 0}, {"epoch": 1}]


def test_truncate_after(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("".join(json.dumps({"epoch": e}) + "\n" for e in range(5)))
    assert truncate_after(p, 3) == 3
    assert [r["epoch"] for r in read_metrics(p)] == [0, 1, 2]


# -- checkpoints --------------------------------------------------------------

def sample_checkpoint():
    rng = np.random.default_rng(0)
    arrays = {"theta/b": rng.normal(size=3), "theta/a": rng.normal(size=(2, 2)), "phi/x": np.array(1.5)}
    return Checkpoint({"kind": "align", "epoch": 2}, arrays, "0123456789abcdef")


def test_checkpoint_round_trip_is_exact(tmp_path):
    ck = sample_checkpoint()
    save_checkpoint(tmp_path / "a.ckpt", ck)
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.meta == ck.meta and back.config_hash == ck.config_hash
    assert list(back.arrays) == list(ck.arrays)
    assert all(np.array_equal(back.arrays[k], ck.arrays[k]) for k in ck.arrays)
    assert list(back.group("theta")) == ["b", "a"]
    save_checkpoint(tmp_path / "b.ckpt", back)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


@pytest.mark.parametrize("damage", ["magic", "truncate", "trailing", "version"])
def test_damaged_checkpoint(tmp_path, damage):
    save_checkpoint(tmp_path / "a.ckpt", sample_checkpoint())
    data = bytearray((tmp_path / "a.ckpt").read_bytes())
    if damage == "magic":
        data[0:1] = b"X"
    elif damage == "truncate":
        data = data[:-5]
    elif damage == "trailing":
        data += b"\x00"
    else:
        data[8] = 99
    (tmp_path / "a.ckpt").write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "a.ckpt")


# -- svg / compare ------------------------------------------------------------

def test_render_is_deterministic():
    s = [Series("a", (1.0, 2.0, 3.0), (0.1, 0.4, 0.2)), Series("b", (1.0, 3.0), (-1.0, 0.5))]
    one = render_svg(s, "t", "x", "y")
    assert one == render_svg(s, "t", "x", "y")
    assert "<svg" in one and one.count("<polyline") == 2


def test_compare_three_runs(tmp_path):
    paths = []
    for i, algo in enumerate(["dag-db", "dag-kl", "ddpo"]):
        d = tmp_path / algo
        w = MetricsWriter(d / "metrics.jsonl", truncate=True)
        for e in range(3):
            w.write({"phase": "align", "epoch": e, "step": e + 1, "trajectories": 8 * (e + 1),
                     "algorithm": algo, "reward_mean": 0.1 * e + i, "task": "discrete/table"})
        paths.append(d / "metrics.jsonl")
    svg, csv_path, warnings = compare_runs(paths, tmp_path / "cmp")
    first = (svg.read_bytes(), csv_path.read_bytes())
    compare_runs(paths, tmp_path / "cmp")
    assert (svg.read_bytes(), csv_path.read_bytes()) == first
    assert warnings == []
    assert svg.read_text().count("<polyline") == 3
    assert len(csv_path.read_text().splitlines()) == 1 + 9


def test_compare_warns_on_mixed_tasks(tmp_path):
    for name, task in (("a", "discrete/table"), ("b", "gaussian/ring")):
        MetricsWriter(tmp_path / name / "metrics.jsonl", truncate=True).write(
            {"epoch": 0, "step": 1, "trajectories": 8, "reward_mean": 0.0, "task": task})
    _, _, warnings = compare_runs([tmp_path / "a" / "metrics.jsonl", tmp_path / "b" / "metrics.jsonl"],
                                  tmp_path / "cmp")
    assert warnings and "different tasks" in warnings[0]


# -- command line -------------------------------------------------------------

def run_cli(*argv):
    return main([str(a) for a in argv])


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nsede = 1\n")
    assert run_cli("show-config", "--config", bad) == 1
    assert "unknown key 'sede'" in capsys.readouterr().err


def test_cli_show_config_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run_cli("show-config", "--config", cfg) == 0
    text = capsys.readouterr().out
    assert dump_config(parse_config_text(text)) == text


def test_cli_oracle_check_passes_and_fails_on_injection(tmp_path, capsys):
    assert run_cli("oracle-check", "--fd-points", 1, "--identity-instances", 20) == 0
    capsys.readouterr()
    code = run_cli("oracle-check", "--fd-points", 1, "--identity-instances", 5,
                   "--inject-flow-perturbation", 1e-3, "--out", tmp_path)
    assert code == 3
    records = [json.loads(s) for s in capsys.readouterr().out.splitlines()]
    db = next(r for r in records if r["check"] == "db_identity")
    assert not db["pass"] and db["max_residual"] == pytest.approx(1e-3, rel=1e-6)
    assert (tmp_path / "oracle_check.jsonl").exists()


def test_cli_align_without_pretrain_checkpoint(tmp_path):
    cfg = write_config(tmp_path)
    assert run_cli("align", "--config", cfg, "--out", tmp_path / "runs" / "a") == 1


def test_cli_pipeline_resume_and_eval(tmp_path, capsys):
    cfg = write_config(tmp_path, epochs=4)
    runs = tmp_path / "runs"
    assert run_cli("pretrain", "--config", cfg, "--out", runs / "pretrain") == 0
    assert run_cli("align", "--config", cfg, "--out", runs / "full") == 0
    assert run_cli("align", "--config", cfg, "--out", runs / "part", "--stop-after", 2) == 0
    assert len(read_metrics(runs / "part" / "metrics.jsonl")) == 2
    assert run_cli("align", "--config", cfg, "--out", runs / "part",
                   "--resume", runs / "part" / "align.ckpt") == 0
    full = (runs / "full" / "metrics.jsonl").read_bytes()
    assert (runs / "part" / "metrics.jsonl").read_bytes() == full
    a, b = load_checkpoint(runs / "part" / "align.ckpt"), load_checkpoint(runs / "full" / "align.ckpt")
    assert a.config_hash == b.config_hash and list(a.arrays) == list(b.arrays)
    assert all(np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)
    # the stored config text records each run's own output directory
    assert {k: v for k, v in a.meta.items() if k != "config"} == {k: v for k, v in b.meta.items() if k != "config"}
    capsys.readouterr()
    assert run_cli("eval", runs / "full" / "align.ckpt", "-n", 200) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "align" and report["n"] == 200 and "eval_tv_optimal" in report
    assert run_cli("compare", runs / "full" / "metrics.jsonl", "--out", tmp_path / "cmp") == 0
    assert (tmp_path / "cmp" / "compare.svg").exists()


def test_cli_resume_rejects_changed_config(tmp_path):
    cfg = write_config(tmp_path, epochs=4)
    runs = tmp_path / "runs"
    run_cli("pretrain", "--config", cfg, "--out", runs / "pretrain")
    run_cli("align", "--config", cfg, "--out", runs / "a", "--stop-after", 1)
    other = write_config(tmp_path, algo="dag-kl", epochs=4, name="other.ini")
    assert run_cli("align", "--config", other, "--out", runs / "a",
                   "--resume", runs / "a" / "align.ckpt") == 1


def test_incompatible_pretrain_checkpoint(tmp_path):
    from dagflow.harness.runner import run_align, run_pretrain
    cfg = parse_config(write_config(tmp_path))
    ck = run_pretrain(cfg, tmp_path / "p")
    bigger = parse_config_text(SMALL_DISCRETE.format(algo="dag-db", epochs=2).replace("S = 6", "S = 7")
                               .replace("table = [0.1, 0.5, 0.2, 0.9, 0.4, 0.3]",
                                        "table = [0.1, 0.5, 0.2, 0.9, 0.4, 0.3, 0.0]"))
    with pytest.raises(CompatibilityError):
        run_align(bigger, tmp_path / "a", init=ck)


def test_make_data(tmp_path, capsys):
    out = tmp_path / "d" / "data.csv"
    assert run_cli("make-data", "-n", 50, "--conditions", 4, "--out", out, "--seed", 1) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 50 and len(rows[0].split(",")) == 3
