import logging
import sys
from abc import ABC, abstractmethod
from argparse import ArgumentParser, Namespace
from functools import cached_property
from pathlib import Path
from typing import Optional, Protocol, Sequence, TypedDict, cast

from typing_extensions import Unpack

from analysis import (
    CompareManifest,
    ComparisonReport,
    PlotTable,
    compare_manifest,
    plot_table,
)
from artifacts import FileRunRepository, RunDirectory, RunRepository
from driver import (
    RunResult,
    expand_sweep,
    heldout_path,
    load_config,
    prepare_corpus,
    read_trajectory,
    run_seeds,
)
from mixture import save_corpus

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


class CommandRequest(TypedDict):
    command: str
    config: Optional[Path]
    out: Optional[Path]
    manifest: Optional[Path]
    trajectory: Optional[Path]
    verbose: bool


class CommandResponse(TypedDict):
    success: bool


class InputHandler(Protocol):
    def command_request(self) -> CommandRequest:
        ...


class Presenter(Protocol):
    def generated(self, train: Path, heldout: Path) -> None:
        ...

    def finished(self, directory: RunDirectory, result: RunResult) -> None:
        ...

    def compared(self, report: ComparisonReport) -> None:
        ...

    def tabulated(self, table: PlotTable, out: Optional[Path]) -> None:
        ...

    def error(self, exc: BaseException) -> None:
        ...


class ConsolePresenter(Presenter):
    def generated(self, train: Path, heldout: Path) -> None:
        print(f"Corpus WROTE\t{train}\t{heldout}")

    def finished(self, directory: RunDirectory, result: RunResult) -> None:
        ppl = "n/a" if result.evaluation is None else f"{result.macro_perplexity:.4f}"
        print(f"Run DONE\t{result.label}\tmacro_ppl={ppl}\t{directory.root}")

    def compared(self, report: ComparisonReport) -> None:
        print("\n".join(report.lines()))

    def tabulated(self, table: PlotTable, out: Optional[Path]) -> None:
        if out is None:
            table.write_csv(sys.stdout)
        else:
            print(f"Table WROTE\t{len(table.rows)} rows\t{out}")

    def error(self, exc: BaseException) -> None:
        error_class = getattr(exc, "error_class", "internal-error")
        print(f"error: {error_class}", file=sys.stderr)
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(message, file=sys.stderr)
        logger.debug("Command failed", exc_info=exc)


class CommandArgs(CommandRequest):
    presenter: Presenter
    repository: RunRepository


class Command(ABC):
    def __init__(self, **kwargs: Unpack[CommandArgs]):
        self.presenter = kwargs["presenter"]
        self.repository = kwargs["repository"]
        self.request = cast(CommandRequest, kwargs)

    def run(self) -> CommandResponse:
        try:
            self.process()
            return {"success": True}
        except Exception as exc:
            self.presenter.error(exc)
            return {"success": False}

    @abstractmethod
    def process(self) -> None:
        ...


class GenerateCommand(Command):
    def process(self) -> None:
        config = load_config(self.request["config"])
        prepared = prepare_corpus(config)
        out = self.request["out"]
        provenance = {"config": config.to_dict(), "fingerprint": prepared.fingerprint}
        save_corpus(prepared.train, out, {**provenance, "part": "train"})
        save_corpus(
            prepared.heldout, heldout_path(out), {**provenance, "part": "heldout"}
        )
        self.presenter.generated(out, heldout_path(out))


class RunCommand(Command):
    def process(self) -> None:
        config = load_config(self.request["config"])
        # sweep values are validated before the first run starts
        variants = expand_sweep(config)
        for variant in variants:
            prepared = prepare_corpus(variant)
            for seed, result in run_seeds(variant, prepared):
                directory = self.repository.save(variant, prepared, seed, result)
                self.presenter.finished(directory, result)


class CompareCommand(Command):
    def process(self) -> None:
        manifest = CompareManifest.load(self.request["manifest"])
        self.presenter.compared(compare_manifest(manifest, self.repository))


class PlotdataCommand(Command):
    def process(self) -> None:
        _, trajectory = read_trajectory(self.request["trajectory"])
        table = plot_table(trajectory)
        out = self.request["out"]
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
            with out.open("w", encoding="utf-8", newline="") as target:
                table.write_csv(target)
        self.presenter.tabulated(table, out)


COMMANDS: dict[str, type[Command]] = {
    "generate": GenerateCommand,
    "run": RunCommand,
    "compare": CompareCommand,
    "plotdata": PlotdataCommand,
}


class CommandFactory:
    def __init__(self, /, input_handler: InputHandler, **command_args):
        self.command_args = command_args
        self.input_handler = input_handler

    def create(self) -> Command:
        request = self.input_handler.command_request()
        return COMMANDS[request["command"]](**self.command_args, **request)


class CommandLineInputHandler(InputHandler):
    def __init__(self, argv: Optional[Sequence[str]] = None):
        self.argv = argv

    def command_request(self) -> CommandRequest:
        args = self.args
        return {
            "command": args.command,
            "config": getattr(args, "config", None),
            "out": getattr(args, "out", None),
            "manifest": getattr(args, "manifest", None),
            "trajectory": getattr(args, "trajectory", None),
            "verbose": args.verbose,
        }

    @cached_property
    def args(self) -> Namespace:
        parser = ArgumentParser(
            prog="hbo",
            description="Hierarchical data-mixture balancing for a toy language model.",
        )
        parser.add_argument(
            "-v", "--verbose", action="store_true", help="log at DEBUG level"
        )
        commands = parser.add_subparsers(dest="command", required=True)

        generate = commands.add_parser("generate", help="generate and group a corpus")
        generate.add_argument("config", type=Path, help="experiment TOML file")
        generate.add_argument("out", type=Path, help="training corpus file to write")

        run = commands.add_parser("run", help="train every seed (and sweep value)")
        run.add_argument("config", type=Path, help="experiment TOML file")

        compare = commands.add_parser("compare", help="compare completed runs")
        compare.add_argument("manifest", type=Path, help="comparison manifest TOML")

        plotdata = commands.add_parser("plotdata", help="trajectory to a wide CSV")
        plotdata.add_argument("trajectory", type=Path, help="trajectory.jsonl")
        plotdata.add_argument(
            "-o", "--out", type=Path, default=None, help="CSV file (default stdout)"
        )
        return parser.parse_args(self.argv)


class Main:
    def __init__(self, argv: Optional[Sequence[str]] = None):
        self.input_handler = CommandLineInputHandler(argv)
        self.command_factory = CommandFactory(
            presenter=ConsolePresenter(),
            input_handler=self.input_handler,
            repository=FileRunRepository(),
        )

    def run(self) -> int:
        verbose = self.input_handler.command_request()["verbose"]
        logging.basicConfig(
            level=logging.DEBUG if verbose else logging.WARNING, format=LOG_FORMAT
        )
        response = self.command_factory.create().run()
        return 0 if response["success"] else 1


if __name__ == "__main__":
    sys.exit(Main().run())
