import inspect
from logging import getLogger
from pathlib import Path
from types import NoneType, UnionType
from typing import Awaitable, Callable

import numpy as np
from rich.console import Console, RenderableType
from rich.table import Table

from otfsbl.commands.parser import ArgumentType
from otfsbl.config import Scheme, load_config
from otfsbl.harness import Trial, collect_trials, efficiency, nmse_by_iteration, sweep
from otfsbl.settings import Settings
from otfsbl.util import NumericalError
from otfsbl.validation import run_invariant_suite

type CommandLeaf = Callable[..., Awaitable[RenderableType | None]]
type CommandTree = dict[str, CommandTree] | CommandLeaf

COMMAND_FUNCTION_SUFFIX = "_command"
ARGUMENT_TYPE_SIGNATURES = {
    int: ArgumentType.INT,
    float: ArgumentType.FLOAT,
    str: ArgumentType.STRING,
    Path: ArgumentType.STRING,
}
PROGRAM = "otfsbl"
ITERATIVE_SCHEMES = (Scheme.PA_BL, Scheme.DA_BL_ZF, Scheme.DA_BL_LMMSE)
CONVERGENCE_CHECKPOINTS = (1, 2, 3, 5, 10)


class CommandError(Exception):
    def __init__(self, message: str):
        super().__init__()
        self.message = message


def parameter_type(parameter: inspect.Parameter) -> type:
    """The value type of a command parameter, unwrapping `X | None`."""
    annotation = parameter.annotation
    if isinstance(annotation, UnionType):
        value_type, none = annotation.__args__
        assert none is NoneType and parameter.default is None
        return value_type
    return annotation


class Commands:
    logger = getLogger("commands")

    def __init__(self, settings: Settings, console: Console):
        self.settings = settings
        self.console = console
        self.tree: dict[str, CommandTree] = {}

        for method_name, method in inspect.getmembers(self, inspect.ismethod):
            if not method_name.endswith(COMMAND_FUNCTION_SUFFIX):
                continue
            path = method_name.removesuffix(COMMAND_FUNCTION_SUFFIX).split("_")
            parent: dict[str, CommandTree] = self.tree
            while len(path) > 1:
                node = path.pop(0)
                if node not in parent:
                    parent[node] = {}
                new_parent = parent[node]
                if not isinstance(new_parent, dict):
                    raise Exception("A command group cannot itself be a command")
                parent = new_parent
            leaf = path[0]
            if leaf in parent:
                raise Exception(f"A command or group named {leaf} already exists in {parent}")
            parent[leaf] = method

    async def help_command(self, name: str | None = None):
        """Display parameters and help for a command."""
        if name is None:
            return f"Commands: {", ".join(self.tree.keys())}. Use `{PROGRAM} help <command>` for details."
        target = self.tree.get(name)
        if target is None:
            raise CommandError(f'There is no command named "{name}".')
        if isinstance(target, dict):
            return f"Subcommands of {name} are: {", ".join(target.keys())}"

        doc = " ".join(target.__doc__.split()) if target.__doc__ is not None else "(no help)"
        parameters = []
        for parameter_name, parameter in inspect.signature(target).parameters.items():
            body = f"--{parameter_name} {ARGUMENT_TYPE_SIGNATURES[parameter_type(parameter)].name}"
            if parameter.default is parameter.empty:
                parameters.append(body)
            elif parameter.default is None:
                parameters.append(f"[{body}]")
            else:
                parameters.append(f"[{body} = {parameter.default!r}]")
        return f"{PROGRAM} {" ".join((name, *parameters))}: {doc}"

    def _workers(self, threads: int | None) -> int:
        workers = threads if threads is not None else self.settings.threads
        if workers < 1:
            raise CommandError(f"Thread count must be positive, got {workers}.")
        return workers

    async def convergence_command(self, config: Path, threads: int | None = None):
        """Print the mean NMSE of the Bayesian learning schemes after each EM iteration."""
        experiment = load_config(config)
        results = await collect_trials(experiment, self._workers(threads))
        schemes = [scheme for scheme in experiment.schemes if scheme in ITERATIVE_SCHEMES]
        if not schemes:
            raise CommandError("The config runs no iterative scheme to trace.")
        table = Table(title=f"NMSE (dB) by EM iteration for {config}")
        table.add_column("SNR (dB)", justify="right")
        table.add_column("Scheme")
        for iteration in CONVERGENCE_CHECKPOINTS:
            table.add_column(f"it {iteration}", justify="right")
        table.add_column("final", justify="right")
        for snr_db, point in zip(experiment.snr_db, results):
            for scheme in schemes:
                curve = nmse_by_iteration(
                    [result.nmse_trajectory.get(scheme, []) for result in point]
                )
                cells = [
                    f"{10 * np.log10(curve[min(iteration, curve.size) - 1]):.2f}"
                    if curve.size
                    else "-"
                    for iteration in (*CONVERGENCE_CHECKPOINTS, curve.size)
                ]
                table.add_row(f"{snr_db:g}", scheme.value, *cells)
        return table

    async def run_command(
        self, config: Path, out: Path, threads: int | None = None, seed: int | None = None
    ):
        """Run the Monte Carlo sweep of a config and write the result CSV."""
        overrides = {} if seed is None else {"master_seed": seed}
        experiment = load_config(config, **overrides)
        workers = self._workers(threads)
        self.logger.info(
            "Running %d SNR points x %d trials on %d threads",
            len(experiment.snr_db),
            experiment.trials,
            workers,
        )
        rows = await sweep(experiment, workers, out)
        return f"Wrote {len(rows)} summary rows to {out}"

    async def bcrb_command(self, config: Path):
        """Print the normalized BCRB at every SNR for the first trial's draw."""
        experiment = load_config(config)
        table = Table(title=f"BCRB for {config}")
        table.add_column("SNR (dB)", justify="right")
        table.add_column("BCRB", justify="right")
        table.add_column("BCRB / |H|^2", justify="right")
        for snr_index, snr_db in enumerate(experiment.snr_db):
            trial = Trial(experiment, snr_index, 0)
            bound = trial.bound()
            normalized = bound / float(np.linalg.norm(trial.truth) ** 2)
            table.add_row(f"{snr_db:g}", f"{bound:.4e}", f"{normalized:.4e}")
        return table

    async def efficiency_command(self, config: Path):
        """Print the spectral efficiency of superimposed and embedded pilots."""
        experiment = load_config(config)
        result = efficiency(experiment)
        table = Table(title=f"Spectral efficiency for {config}")
        table.add_column("Scheme")
        table.add_column("Efficiency", justify="right")
        table.add_row("AP-SIP", f"{result.ap_sip:.4f}")
        table.add_row("EP-SISO", f"{result.ep_siso:.4f}")
        if result.transmit_antennas > 1:
            table.add_row(f"EP-MIMO ({result.transmit_antennas} TA)", f"{result.ep_mimo:.4f}")
        return table

    async def validate_command(self, config: Path):
        """Run the deterministic invariant checks on the configured sizes."""
        experiment = load_config(config)
        results = run_invariant_suite(experiment)
        table = Table(title=f"Invariant checks for {config}")
        table.add_column("Check")
        table.add_column("Result")
        table.add_column("Detail")
        for result in results:
            table.add_row(
                result.name,
                "[green]pass[/green]" if result.passed else "[red]FAIL[/red]",
                result.detail,
            )
        self.console.print(table)
        failed = [result.name for result in results if not result.passed]
        if failed:
            raise NumericalError(f"{len(failed)} invariant checks failed: {", ".join(failed)}")
        return f"All {len(results)} invariant checks passed"
