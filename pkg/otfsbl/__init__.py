from logging import getLogger
from typing import Sequence

from rich.console import Console

from otfsbl.commands import CommandError, Commands
from otfsbl.commands.dispatcher import CommandDispatcher
from otfsbl.config import ConfigError
from otfsbl.settings import Settings
from otfsbl.util import NumericalError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _leaves(group: BaseExceptionGroup):
    for error in group.exceptions:
        if isinstance(error, BaseExceptionGroup):
            yield from _leaves(error)
        else:
            yield error


async def main(settings: Settings, argv: Sequence[str], console: Console | None = None) -> int:
    logger = getLogger("main")
    console = console or Console()
    commands = Commands(settings, console)
    dispatcher = CommandDispatcher(commands.tree, console)
    code = EXIT_OK
    # Trial workers run under a TaskGroup, so failures may arrive grouped.
    try:
        await dispatcher.run(argv)
    except* (CommandError, ConfigError) as group:
        for error in _leaves(group):
            logger.error(error.message)
        code = EXIT_USAGE
    except* NumericalError as group:
        for error in _leaves(group):
            logger.error("Numerical failure: %s", error.message)
        code = EXIT_NUMERICAL
    return code
