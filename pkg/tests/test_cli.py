from __future__ import annotations

import csv
import textwrap

import pytest

from riemann_flow import cli, dynamics
from riemann_flow.datasets import load_graph_file
from riemann_flow.errors import NonFinite

SPEC = """\
n_source = 12
n_target = 12
min_nodes = 4
max_nodes = 6
feature_dim = 4
"""

RUN = """\
dim = 4
hidden = 6
layers = 2
field_hidden = 6
field_layers = 1
batch_size = 4
epochs = 1
steps_per_epoch = 2
lr = 0.001
source_path = "{source}"
target_path = "{target}"

[log]
level = "WARNING"
"""


def _generate(tmp_path, *extra: str) -> None:
    spec = tmp_path / "shift.toml"
    spec.write_text(SPEC, encoding="utf-8")
    assert cli.main(["gen", "--spec", str(spec), "--out", str(tmp_path / "data"), "--seed", "1", *extra]) == 0


def test_gen_writes_both_domains(tmp_path, capsys) -> None:
    _generate(tmp_path, "--unlabeled-target")
    source = load_graph_file(tmp_path / "data" / "source.graphs")
    target = load_graph_file(tmp_path / "data" / "target.graphs")
    assert len(source) == len(target) == 12
    assert all(g.label is not None for g in source)
    assert all(g.label is None for g in target)
    assert "mean_degree" in capsys.readouterr().out


def test_train_then_eval(tmp_path, capsys) -> None:
    _generate(tmp_path)
    config = tmp_path / "run.toml"
    config.write_text(
        textwrap.dedent(RUN).format(
            source=(tmp_path / "data" / "source.graphs").as_posix(),
            target=(tmp_path / "data" / "target.graphs").as_posix(),
        ),
        encoding="utf-8",
    )
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(config), "--out", str(out), "--ablation", "no_pe"]) == 0
    checkpoint = out / "epoch_001.ckpt"
    assert checkpoint.exists()
    assert (out / "metrics.csv").exists()

    capsys.readouterr()
    data = tmp_path / "data" / "target.graphs"
    assert cli.main(["eval", "--checkpoint", str(checkpoint), "--data", str(data)]) == 0
    accuracy = float(capsys.readouterr().out.strip().split("=")[1])
    assert 0.0 <= accuracy <= 1.0


def test_geom_check_writes_reports(tmp_path) -> None:
    out = tmp_path / "reports" / "volume.csv"
    assert cli.main(["geom-check", "--c", "-1", "--d", "3", "--out", str(out), "--cases", "50"]) == 0
    with out.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(row["radius"]) for row in rows] == [0.5, 1.0, 2.0, 4.0, 6.0, 8.0]
    assert (tmp_path / "reports" / "volume_checks.csv").exists()


def test_geom_check_on_the_sphere(tmp_path) -> None:
    out = tmp_path / "sphere.csv"
    assert cli.main(["geom-check", "--c", "1", "--d", "2", "--out", str(out), "--cases", "50"]) == 0
    with out.open(newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 6


def test_dynamics_modes(tmp_path, capsys) -> None:
    adversarial = tmp_path / "adv" / "trajectory.csv"
    adversarial.parent.mkdir()
    assert cli.main(["dynamics", "--mode", "adversarial", "--out", str(adversarial), "--steps", "500"]) == 0
    assert "oscillating=True" in capsys.readouterr().out
    assert (tmp_path / "adv" / "spectrum.csv").exists()

    flow = tmp_path / "flow" / "trajectory.csv"
    flow.parent.mkdir()
    assert cli.main(["dynamics", "--mode", "flow", "--out", str(flow), "--steps", "40"]) == 0
    assert "monotone=True" in capsys.readouterr().out


def test_bad_config_returns_2(tmp_path) -> None:
    config = tmp_path / "run.toml"
    config.write_text("no_such_key = 1\n", encoding="utf-8")
    assert cli.main(["train", "--config", str(config), "--out", str(tmp_path / "run")]) == 2
    assert cli.main(["eval", "--checkpoint", "x.ckpt", "--data", str(config)]) == 2


def test_numeric_abort_returns_3(tmp_path, monkeypatch, capsys) -> None:
    def explode(*args, **kwargs):
        raise NonFinite("loss is nan")

    monkeypatch.setattr(dynamics, "simulate_flow", explode)
    assert cli.main(["dynamics", "--mode", "flow", "--out", str(tmp_path / "t.csv")]) == 3
    assert "loss is nan" in capsys.readouterr().err


def test_unknown_command_exits() -> None:
    with pytest.raises(SystemExit):
        cli.main(["sing"])


def test_unknown_log_level_returns_2(tmp_path) -> None:
    out = tmp_path / "t.csv"
    assert cli.main(["--log-level", "shouty", "dynamics", "--mode", "adversarial", "--out", str(out)]) == 2
