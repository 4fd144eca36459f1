import json

import pytest

from graphllava.cli import run, toy_split_path
from graphllava.config import CliConfig, load_config, parse_assignments
from graphllava.errors import UsageError

SMALL = ["--set", "d_model=16", "--set", "n_heads=2", "--set", "d_ff=32", "--set", "d_g=8",
         "--set", "max_seq=160", "--set", "system_msg=graphs"]


def cli(capsys, *argv):
    code = run([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--help"])
    assert exc.value.code == 0
    assert "gen-data" in capsys.readouterr().out


def test_config_parsing(tmp_path):
    vals = parse_assignments(["# comment", "seed = 4  # trailing", "", "use_lora = off", "lr=0.01"])
    assert vals == {"seed": 4, "use_lora": False, "lr": 0.01}
    with pytest.raises(UsageError):
        parse_assignments(["no_such_key = 1"])
    with pytest.raises(UsageError):
        parse_assignments(["seed = four"])
    with pytest.raises(UsageError):
        parse_assignments(["seed 4"])
    (tmp_path / "c.cfg").write_text("seed = 3\nepochs = 2\n")
    cfg = load_config(tmp_path / "c.cfg", {"epochs": "5"})
    assert (cfg.seed, cfg.epochs) == (3, 5)
    with pytest.raises(UsageError):
        CliConfig(tasks="cycle,sorting")
    a, b = CliConfig(seed=1), CliConfig(seed=1)
    assert a.rng("graphs").random() == b.rng("graphs").random() != a.rng("split").random()


def test_unknown_key_exit_2(capsys, tmp_path):
    code, _, err = cli(capsys, "gen-data", "--out", tmp_path, "--set", "colour=blue")
    assert code == 2 and "colour" in err


def test_gen_data_deterministic(capsys, tmp_path):
    args = ["--graphs", 20, "--set", "max_nodes=8", "--seed", 5]
    assert cli(capsys, "gen-data", "--out", tmp_path / "a", *args)[0] == 0
    code, out, _ = cli(capsys, "gen-data", "--out", tmp_path / "b", *args)
    assert code == 0 and out.splitlines()[0] == "task,yes,total,yes_rate"
    for f in ("stage1.jsonl", "stage2.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    cli(capsys, "gen-data", "--out", tmp_path / "c", "--graphs", 20, "--set", "max_nodes=8", "--seed", 6)
    assert (tmp_path / "c" / "stage2.jsonl").read_bytes() != (tmp_path / "a" / "stage2.jsonl").read_bytes()


def test_eval_random_on_toy_split(capsys, tmp_path):
    assert toy_split_path().is_file()
    code, out, _ = cli(capsys, "eval", "--mode", "random", "--seed", 1, "--out", tmp_path / "r.json",
                       "--csv", tmp_path / "b.csv", "--figure", tmp_path / "b.png")
    assert code == 0
    acc = float(out.splitlines()[0].split(",")[1])
    assert 0.40 <= acc <= 0.60
    assert (tmp_path / "b.png").stat().st_size > 0
    assert json.loads((tmp_path / "r.json").read_text())["mode"] == "random"


def test_eval_graph_needs_checkpoint(capsys):
    code, _, err = cli(capsys, "eval", "--mode", "graph")
    assert code == 2 and "--checkpoint" in err


def test_gradcheck_exit_zero(capsys):
    code, out, _ = cli(capsys, "gradcheck", "--d-model", 16, "--samples", 6)
    assert code == 0 and out.startswith("max_rel_error,")


def test_oracle_verify(capsys):
    code, out, _ = cli(capsys, "oracle-verify", "--max-nodes", 4)
    assert code == 0 and "mismatches,0" in out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def test_train_pipeline_end_to_end(capsys, workspace):
    w = workspace
    assert cli(capsys, "gen-data", "--out", w / "d", "--graphs", 16, "--set", "max_nodes=6",
               "--set", "test_frac=0.25")[0] == 0
    assert cli(capsys, "build-vocab", "--data", w / "d" / "stage1.jsonl", w / "d" / "stage2.jsonl",
               "--out", w / "vocab.json", *SMALL)[0] == 0
    code, out, err = cli(capsys, "finetune", "--data", w / "d" / "stage2.jsonl", "--vocab", w / "vocab.json",
                         "--out", w / "bad", "--epochs", 1, *SMALL)
    assert code == 2 and "align" in err and not (w / "bad").exists()
    code, out, _ = cli(capsys, "align", "--data", w / "d" / "stage1.jsonl", "--vocab", w / "vocab.json",
                       "--out", w / "ck1", "--epochs", 1, "--figure", w / "loss.png", *SMALL)
    assert code == 0 and out.splitlines()[0] == "epoch,mean_loss" and (w / "loss.png").exists()
    code, out, _ = cli(capsys, "finetune", "--data", w / "d" / "stage2.jsonl", "--init", w / "ck1",
                       "--out", w / "ck2", "--epochs", 1, "--metrics", w / "m.csv", *SMALL)
    assert code == 0
    code, out, _ = cli(capsys, "inspect-checkpoint", w / "ck2")
    assert code == 0 and "history,align>finetune" in out and "config:d_model,16" in out
    code, out, _ = cli(capsys, "eval", "--mode", "graph", "--data", w / "d" / "stage2.jsonl", "--checkpoint",
                       w / "ck2", "--max-new", 4, "--out", w / "g.json", *SMALL)
    assert code == 0 and out.startswith("accuracy,")
    assert cli(capsys, "eval", "--mode", "random", "--data", w / "d" / "stage2.jsonl", "--out", w / "r.json")[0] == 0
    code, out, _ = cli(capsys, "judge-prompts", "--data", w / "d" / "stage2.jsonl", "--report-a", w / "g.json",
                       "--report-b", w / "r.json", "--out", w / "p.jsonl")
    assert code == 0
    prompts = [json.loads(x) for x in (w / "p.jsonl").read_text().splitlines()]
    (w / "resp.jsonl").write_text("\n".join(json.dumps({"id": p["id"], "response": "none"}) for p in prompts))
    code, out, _ = cli(capsys, "judge-tally", "--prompts", w / "p.jsonl", "--responses", w / "resp.jsonl")
    assert code == 0 and out.splitlines()[1].startswith("0.0000,0.0000,1.0000")


def test_missing_file_exit_1(capsys, tmp_path):
    code, _, err = cli(capsys, "inspect-checkpoint", tmp_path / "nope")
    assert code == 1
