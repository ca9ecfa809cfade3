import csv
import io

import pytest

from tsprl import cli
from tsprl.core import generate_instance, read_instance, write_instance


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_single_and_many(tmp_path, capsys):
    path = tmp_path / "one.txt"
    code, out, _ = run(capsys, "generate", "--n", "7", "--seed", "3", "--out", str(path))
    assert code == 0
    assert read_instance(path) == generate_instance(7, 3)
    code, out, _ = run(capsys, "generate", "--n", "5", "--count", "3", "--out", str(tmp_path / "many"))
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["path", "n", "seed"] and len(rows) == 4
    assert len(list((tmp_path / "many").iterdir())) == 3


def test_solve_writes_csv_and_figure(tmp_path, capsys):
    inst = tmp_path / "i.txt"
    write_instance(generate_instance(9, 1), inst)
    out = tmp_path / "tour.csv"
    code, _, err = run(capsys, "solve", "--instance", str(inst), "--solver", "two_opt", "--out", str(out))
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["solver", "n", "seed", "length", "tour"]
    assert sorted(map(int, rows[1][4].split())) == list(range(9))
    assert (tmp_path / "tour.png").stat().st_size > 0
    assert "two_opt" in err


def test_oracle_stdout(capsys):
    code, out, _ = run(capsys, "oracle", "--n", "6", "--count", "2", "--seed", "1")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 3 and rows[1][1] == "1"


def test_oracle_cap_is_an_error(capsys):
    code, _, err = run(capsys, "oracle", "--n", "16")
    assert code == 1 and "error" in err


def test_eval_csv_figure_and_no_figure(tmp_path, capsys):
    out = tmp_path / "eval.csv"
    code, _, err = run(capsys, "eval", "--solver", "nearest_insertion", "exact", "--n", "8", "--count", "5",
                       "--out", str(out))
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][0] == "solver" and len(rows) == 3
    assert rows[2][5] == "0.00"
    assert (tmp_path / "eval.png").exists()
    assert "vs exact" in err
    out2 = tmp_path / "plain.csv"
    run(capsys, "eval", "--solver", "random", "--n", "8", "--count", "2", "--out", str(out2), "--no-figure")
    assert not (tmp_path / "plain.png").exists()


def test_eval_policy_without_checkpoint_fails(capsys):
    code, _, err = run(capsys, "eval", "--solver", "policy", "--n", "8", "--count", "2")
    assert code == 1 and "checkpoint" in err


def test_unknown_solver_rejected_by_parser(capsys):
    with pytest.raises(SystemExit):
        cli.main(["eval", "--solver", "lkh", "--n", "8"])


def test_bad_instance_file(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("3\n0.1 0.2\n")
    code, _, err = run(capsys, "solve", "--instance", str(bad))
    assert code == 1 and "line 3" in err


def test_missing_checkpoint(tmp_path, capsys):
    code, _, err = run(capsys, "eval", "--solver", "policy", "--n", "8", "--count", "2",
                       "--checkpoint", str(tmp_path / "none.npz"))
    assert code == 1 and "checkpoint" in err


def test_train_then_eval_and_ablate(tmp_path, capsys):
    run_dir = tmp_path / "run"
    code, out, _ = run(capsys, "train", "--epochs", "1", "--steps", "2", "--batch-size", "3", "--n-min", "8",
                       "--n-max", "9", "--hidden", "8", "--n-gnn", "1", "--rounds", "2", "--out", str(run_dir))
    assert code == 0
    assert out.startswith("epoch,step,n,")
    assert (run_dir / "metrics.png").exists() and (run_dir / "config.json").exists()
    ckpt = run_dir / "checkpoint_e0001.npz"
    code, _, _ = run(capsys, "eval", "--solver", "policy+search", "--n", "9", "--count", "3",
                     "--checkpoint", str(ckpt))
    assert code == 0
    out_csv = tmp_path / "abl.csv"
    code, _, _ = run(capsys, "ablate", "--checkpoint", f"full={ckpt}", "--sizes", "9", "--count", "3",
                     "--out", str(out_csv))
    assert code == 0
    header = out_csv.read_text().splitlines()[0]
    assert header == "n,count,reference,full_length,full_gap_pct,wo_rl_length,wo_rl_gap_pct"
    assert (tmp_path / "abl.png").exists()


def test_train_config_file_and_flags(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"epochs": 1, "steps_per_epoch": 1, "batch_size": 2, "n_min": 8, "n_max": 8,'
                   ' "model": {"hidden": 8, "n_gnn": 1}}')
    code, _, _ = run(capsys, "train", "--config", str(cfg), "--seed", "4", "--ablation", "wo_baseline",
                     "--out", str(tmp_path / "r"), "--no-figure")
    assert code == 0
    text = (tmp_path / "r" / "config.json").read_text()
    assert '"baseline": "central-self-critic"' in text and '"seed": 4' in text
    cfg.write_text("{not json")
    code, _, err = run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "s"))
    assert code == 1 and "invalid JSON" in err
