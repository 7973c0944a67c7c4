import inspect
from typing import Any, Sequence

from rich.console import Console

from otfsbl.commands import (
    ARGUMENT_TYPE_SIGNATURES,
    PROGRAM,
    CommandError,
    CommandLeaf,
    CommandTree,
    parameter_type,
)
from otfsbl.commands.parser import Argument, ArgumentType, ParseError, parse_arguments


class CommandDispatcher:
    def __init__(self, tree: dict[str, CommandTree], console: Console):
        self.tree = tree
        self.console = console

    def resolve(self, arguments: list[Argument]) -> tuple[list[str], CommandLeaf, list[Argument]]:
        """Follow leading bareword arguments down the command tree to a command."""
        node: CommandTree = self.tree
        path: list[str] = []
        remaining = list(arguments)
        while isinstance(node, dict):
            if not remaining or remaining[0][0] != ArgumentType.FLAG:
                if not path:
                    raise CommandError(f"Usage: {PROGRAM} <command> [arguments]; try `{PROGRAM} help`.")
                raise CommandError(f"Subcommands of {" ".join(path)} are: {", ".join(node.keys())}")
            name = str(remaining.pop(0)[1])
            if name not in node:
                if not path:
                    raise CommandError(f"There is no command named {name}; try `{PROGRAM} help`.")
                raise CommandError(
                    f'The group {" ".join(path)} has no subcommand named "{name}". '
                    f"Its subcommands are: {", ".join(node.keys())}"
                )
            path.append(name)
            node = node[name]
        return path, node, remaining

    def convert(self, parameter: inspect.Parameter, argument: Argument) -> Any:
        value_type = parameter_type(parameter)
        expected = ARGUMENT_TYPE_SIGNATURES[value_type]
        match argument:
            case (ArgumentType.FLAG | ArgumentType.STRING, text) if expected == ArgumentType.STRING:
                return value_type(text)
            case (ArgumentType.INT, number) if expected in (ArgumentType.INT, ArgumentType.FLOAT):
                return value_type(number)
            case (ArgumentType.FLOAT, number) if expected == ArgumentType.FLOAT:
                return number
            case (actual, value):
                raise CommandError(
                    f"Argument `--{parameter.name}` expects {expected.name}, got {actual.name} `{value}`."
                )

    def bind(
        self,
        path: list[str],
        command: CommandLeaf,
        positional: list[Argument],
        explicit: dict[str, Argument],
    ) -> dict[str, Any]:
        parameters = list(inspect.signature(command).parameters.values())
        if len(positional) > len(parameters):
            raise CommandError(f"Extra arguments supplied starting at `{positional[len(parameters)][1]}`.")
        values = {
            parameter.name: self.convert(parameter, argument)
            for parameter, argument in zip(parameters, positional)
        }
        by_name = {parameter.name: parameter for parameter in parameters}
        for name, argument in explicit.items():
            if name in values:
                raise CommandError(f"Multiple values supplied for argument `--{name}`.")
            if name not in by_name:
                raise CommandError(f"Unknown argument `--{name}` supplied.")
            values[name] = self.convert(by_name[name], argument)

        missing = [
            f"--{parameter.name} {ARGUMENT_TYPE_SIGNATURES[parameter_type(parameter)].name}"
            for parameter in parameters
            if parameter.name not in values and parameter.default is parameter.empty
        ]
        if missing:
            raise CommandError(
                f"Missing arguments {", ".join(missing)}; see `{PROGRAM} help {" ".join(path)}`."
            )
        return values

    async def run(self, argv: Sequence[str]):
        try:
            positional, explicit = parse_arguments(argv)
        except ParseError as error:
            raise CommandError(f"Parse error: {error.message}") from error
        path, command, arguments = self.resolve(positional)
        response = await command(**self.bind(path, command, arguments, explicit))
        if response is not None:
            self.console.print(response)
