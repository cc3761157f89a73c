import json
import os

import pytest

from doorpass_lab.cli.interface import main, parse_levels
from doorpass_lab.core.exceptions import ConfigError
from doorpass_lab.infra.storage import read_csv

TINY = [
    "--set", "env.num_envs=2",
    "--set", "env.episode_steps=12",
    "--set", "ppo.rollout_steps=6",
    "--set", "ppo.total_steps=24",
    "--set", "ppo.epochs=1",
    "--set", "ppo.minibatches=2",
    "--set", "ppo.hidden_sizes=[8]",
    "--set", "ppo.eval_envs=2",
    "--set", "distill.window=4",
    "--set", "distill.total_steps=16",
    "--set", "distill.encoder_hidden=8",
    "--set", "distill.gru_hidden=6",
    "--set", "eval.num_envs=2",
    "--set", "eval.episodes_per_env=1",
    "--set", "eval.episode_steps=10",
    "--set", "eval.repeat_trials=1",
]


def run(command, tmp_path, run_name, *extra):
    return main([command, "--out", str(tmp_path / "out"), "--run-name", run_name, *TINY, *extra])


def test_no_command_prints_help(capsys):
    assert main([]) == 1
    assert "train-teacher" in capsys.readouterr().out


def test_argument_errors_exit_with_usage():
    with pytest.raises(SystemExit) as exc:
        main(["eval"])
    assert exc.value.code == 2


def test_missing_checkpoint_is_reported(tmp_path, capsys):
    code = run("eval", tmp_path, "eval", "--ckpt", str(tmp_path / "absent.ckpt"))
    assert code == 1
    assert "Ошибка [checkpoint not found]" in capsys.readouterr().out
    # каталог запуска не создаётся до загрузки политики
    assert not os.path.exists(tmp_path / "out" / "eval")


def test_unknown_override_is_config_error(tmp_path, capsys):
    code = run("replay", tmp_path, "r", "--set", "env.speed=3", "--actions", "a.json")
    assert code == 1
    assert "Ошибка [config parse]" in capsys.readouterr().out


def test_parse_levels():
    assert parse_levels("0, 10,60") == [0.0, 10.0, 60.0]
    with pytest.raises(ConfigError):
        parse_levels("0,ten")


class TestReplay:
    @pytest.fixture
    def actions(self, tmp_path):
        path = tmp_path / "actions.json"
        steps = [[0.0] * 9 for _ in range(4)] + [[0.3, 0.0, 0.1, 0.2, -0.2, 0.0, 0.1, 0.0, 0.0]] * 4
        path.write_text(json.dumps(steps), encoding='utf-8')
        return str(path)

    def test_record_then_expect(self, tmp_path, actions, capsys):
        recorded = str(tmp_path / "trace.csv")
        assert run("replay", tmp_path, "first", "--actions", actions, "--record", recorded) == 0
        assert run("replay", tmp_path, "second", "--actions", actions, "--expect", recorded) == 0
        assert "Трасса совпадает с записью" in capsys.readouterr().out
        rows = read_csv(str(tmp_path / "out" / "second" / "replay_trace.csv"))
        assert len(rows) == 8
        assert rows[0]["t"] == "0"

    def test_modified_trace_is_a_mismatch(self, tmp_path, actions, capsys):
        recorded = tmp_path / "trace.csv"
        assert run("replay", tmp_path, "first", "--actions", actions, "--record", str(recorded)) == 0
        lines = recorded.read_text(encoding='utf-8').splitlines(keepends=True)
        lines[4] = lines[4].replace(",", ";", 1)
        recorded.write_text("".join(lines), encoding='utf-8')
        assert run("replay", tmp_path, "second", "--actions", actions, "--expect",
                   str(recorded)) == 1
        assert "Ошибка [replay mismatch]" in capsys.readouterr().out

    def test_wrong_action_width(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps([[0.0] * 8]), encoding='utf-8')
        assert run("replay", tmp_path, "bad", "--actions", str(path)) == 1
        assert "Ошибка [shape mismatch]" in capsys.readouterr().out


def test_pipeline(tmp_path):
    out = tmp_path / "out"
    assert run("train-teacher", tmp_path, "teacher") == 0
    teacher = str(out / "teacher" / "teacher_best.ckpt")
    for name in ("config.json", "config.sha1", "observation_layout.json", "teacher_curve.jsonl",
                 "teacher_last.ckpt", "summary_teacher.txt", "run_train-teacher.json"):
        assert os.path.exists(out / "teacher" / name), name

    assert run("eval", tmp_path, "eval", "--ckpt", teacher) == 0
    rows = read_csv(str(out / "eval" / "eval_grid.csv"))
    assert rows[-1]["door_type"] == "all"
    assert rows[-1]["episodes"] == "2"

    assert run("sweep", tmp_path, "sweep", "--ckpt", teacher, "--resistances", "0,60") == 0
    with open(out / "sweep" / "sweep_assertions.json", encoding='utf-8') as f:
        assert "all_passed" in json.load(f)

    assert run("repeat", tmp_path, "repeat", "--ckpt", teacher, "--trials", "1") == 0
    with open(out / "repeat" / "repeatability.json", encoding='utf-8') as f:
        assert json.load(f)["trials"] == 2

    assert run("train-student", tmp_path, "student", "--teacher", teacher) == 0
    student = str(out / "student" / "student_last.ckpt")
    assert run("export-type-probs", tmp_path, "probs", "--ckpt", student, "--episodes", "2") == 0
    probs = read_csv(str(out / "probs" / "type_probs.csv"))
    assert {row["env"] for row in probs} == {"0", "1"}
    assert run("export-hidden", tmp_path, "hidden", "--ckpt", student, "--episodes", "2") == 0
    assert os.path.exists(out / "hidden" / "hidden_states.csv")

    # экспорт требует ученика
    assert run("export-hidden", tmp_path, "hidden-teacher", "--ckpt", teacher) == 1


def test_teacher_runs_are_reproducible(tmp_path):
    assert run("train-teacher", tmp_path, "a", "--seed", "3") == 0
    assert run("train-teacher", tmp_path, "b", "--seed", "3") == 0
    with open(tmp_path / "out" / "a" / "teacher_last.ckpt", 'rb') as f1, \
            open(tmp_path / "out" / "b" / "teacher_last.ckpt", 'rb') as f2:
        assert f1.read() == f2.read()
    with open(tmp_path / "out" / "a" / "teacher_curve.jsonl", encoding='utf-8') as f1, \
            open(tmp_path / "out" / "b" / "teacher_curve.jsonl", encoding='utf-8') as f2:
        assert f1.read() == f2.read()
