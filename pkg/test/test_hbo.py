from pathlib import Path

import pytest

from artifacts import FileRunRepository, RunDirectory, RunRepository
from driver import TrajectoryRecord, write_trajectory
from errors import InvalidConfigError
from hbo import (
    CommandLineInputHandler,
    CompareCommand,
    GenerateCommand,
    Main,
    PlotdataCommand,
    Presenter,
    RunCommand,
)
from mixture import load_corpus

TINY_EXPERIMENT = """
[experiment]
seeds = [0, 1]

[corpus]
vocab_size = 8
seed = 1

[[corpus.subsets]]
kind = "markov-chain"
size = 24
response_length = 3

[[corpus.subsets]]
kind = "template-grammar"
size = 12
response_length = 3

[difficulty]
group_count = 2

[model]
context_window = 2
embedding_dim = 4
hidden_dim = 4

[actors]
update_frequency = 5
hidden_dim = 3

[rewards]
batch_size = 2

[run]
total_steps = 10
batch_size = 2
"""

STATIC_RECORD = (
    b'{"step":0,"subset":0,"group":null,"loss":1.0,'
    b'"global":[1.0],"local":null,"rewards":[]}'
)


def test_generate_writes_train_and_heldout(
    experiment_file, tmp_path, presenter, repository
):
    out = tmp_path / "data" / "corpus.jsonl"
    response = GenerateCommand(
        **request("generate", config=experiment_file, out=out),
        presenter=presenter,
        repository=repository,
    ).run()
    assert response == {"success": True}
    heldout = tmp_path / "data" / "corpus.heldout.jsonl"
    presenter.generated.assert_called_once_with(out, heldout)
    train = load_corpus(out)
    assert train.partitioned and train.group_count == 2
    assert load_corpus(heldout).sizes == [3, 2]


def test_generate_is_byte_identical(experiment_file, tmp_path, presenter, repository):
    outputs = []
    for name in ("one.jsonl", "two.jsonl"):
        out = tmp_path / name
        GenerateCommand(
            **request("generate", config=experiment_file, out=out),
            presenter=presenter,
            repository=repository,
        ).run()
        heldout = tmp_path / name.replace(".", ".heldout.")
        outputs.append((out.read_bytes(), heldout.read_bytes()))
    assert outputs[0] == outputs[1]


def test_run_saves_every_seed(experiment_file, presenter, repository):
    repository.save.side_effect = lambda config, prepared, seed, result: RunDirectory(
        Path("runs") / result.label / f"seed-{seed}"
    )
    response = RunCommand(
        **request("run", config=experiment_file),
        presenter=presenter,
        repository=repository,
    ).run()
    assert response == {"success": True}
    assert [c.args[2] for c in repository.save.call_args_list] == [0, 1]
    assert presenter.finished.call_count == 2
    presenter.error.assert_not_called()


def test_run_sweeps_every_value(tmp_path, presenter, repository):
    path = tmp_path / "sweep.toml"
    path.write_text(
        TINY_EXPERIMENT.replace("seeds = [0, 1]", "seeds = [0]")
        + '\n[sweep]\nparameter = "mode"\nvalues = ["static", "hbo"]\n'
    )
    RunCommand(
        **request("run", config=path), presenter=presenter, repository=repository
    ).run()
    labels = [c.args[3].label for c in repository.save.call_args_list]
    assert labels == ["Prop.[mode=static]", "HBO[mode=hbo]"]


def test_missing_config_is_reported(tmp_path, presenter, repository):
    response = RunCommand(
        **request("run", config=tmp_path / "absent.toml"),
        presenter=presenter,
        repository=repository,
    ).run()
    assert response == {"success": False}
    [exc] = presenter.error.call_args.args
    assert isinstance(exc, InvalidConfigError)
    repository.save.assert_not_called()


def test_compare_reads_through_the_repository(tmp_path, presenter, repository):
    manifest = tmp_path / "compare.toml"
    manifest.write_text('runs = ["runs/Prop.", "runs/HBO"]\n')
    repository.summaries.return_value = {}
    response = CompareCommand(
        **request("compare", manifest=manifest),
        presenter=presenter,
        repository=repository,
    ).run()
    assert response == {"success": False}
    repository.summaries.assert_called_once_with(tmp_path / "runs" / "Prop.")


def test_plotdata_writes_csv(tmp_path, presenter, repository):
    trajectory = write_trajectory(
        tmp_path / "trajectory.jsonl",
        [
            TrajectoryRecord(0, 0, 1, 2.0, (0.5, 0.5), ((0.5, 0.5), (0.5, 0.5))),
            TrajectoryRecord(1, 1, 0, 1.5),
        ],
    )
    out = tmp_path / "plots" / "table.csv"
    PlotdataCommand(
        **request("plotdata", trajectory=trajectory, out=out),
        presenter=presenter,
        repository=repository,
    ).run()
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].split(",")[:5] == ["step", "subset", "group", "loss", "global_p0"]
    table, destination = presenter.tabulated.call_args.args
    assert destination == out and len(table.rows) == 2


def test_command_line_requests():
    handler = CommandLineInputHandler(["-v", "plotdata", "t.jsonl", "-o", "t.csv"])
    assert handler.command_request() == {
        "command": "plotdata",
        "config": None,
        "out": Path("t.csv"),
        "manifest": None,
        "trajectory": Path("t.jsonl"),
        "verbose": True,
    }
    run = CommandLineInputHandler(["run", "x.toml"]).command_request()
    assert run["config"] == Path("x.toml")


def test_main_exit_codes(experiment_file, tmp_path, capsys):
    generate = ["generate", str(experiment_file), str(tmp_path / "c.jsonl")]
    assert Main(generate).run() == 0
    assert Main(["run", str(tmp_path / "absent.toml")]).run() == 1
    err = capsys.readouterr().err.splitlines()
    assert err[0] == "error: invalid-config"
    assert "absent.toml" in err[1]


@pytest.mark.parametrize(
    "body, line",
    [
        (STATIC_RECORD + b"\n\xff\xfe\n", 3),
        (STATIC_RECORD.replace(b"[1.0]", b"null") + b"\n", 2),
    ],
)
def test_plotdata_names_the_corrupt_line(tmp_path, capsys, body, line):
    path = tmp_path / "trajectory.jsonl"
    path.write_bytes(b'{"format":"hbo-trajectory","version":1}\n' + body)
    out = tmp_path / "table.csv"
    assert Main(["plotdata", str(path), "-o", str(out)]).run() == 1
    err = capsys.readouterr().err.splitlines()
    assert err[0] == "error: corrupt-file"
    assert f"trajectory.jsonl:{line}:" in err[1]
    assert not out.exists()


def test_main_run_writes_artifacts(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "experiment.toml"
    path.write_text(TINY_EXPERIMENT)
    assert Main(["run", str(path)]).run() == 0
    for seed in (0, 1):
        directory = RunDirectory.of(Path("runs"), "HBO", seed)
        assert directory.summary_path.exists()
        assert directory.trajectory_path.exists()
    summaries = FileRunRepository().summaries(Path("runs") / "HBO")
    assert sorted(summaries) == [0, 1]


def request(command, **kwargs):
    return {
        "command": command,
        "config": None,
        "out": None,
        "manifest": None,
        "trajectory": None,
        "verbose": False,
        **kwargs,
    }


@pytest.fixture
def experiment_file(tmp_path):
    path = tmp_path / "experiment.toml"
    path.write_text(TINY_EXPERIMENT)
    return path


@pytest.fixture
def presenter(mocker):
    return mocker.Mock(spec=Presenter)


@pytest.fixture
def repository(mocker):
    return mocker.Mock(spec=RunRepository)
