import asyncio
import logging
import sys

from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from otfsbl import EXIT_USAGE, main
from otfsbl.settings import Settings


def launch():
    # logs go to stderr so tables and summaries on stdout stay clean
    errors = Console(stderr=True)
    try:
        settings = Settings()
    except ValidationError as error:
        errors.print(f"[red]Invalid OTFSBL_ environment settings:[/red]\n{error}")
        sys.exit(EXIT_USAGE)
    logging.basicConfig(
        level=settings.log_level,
        format="[%(name)s] %(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=errors, rich_tracebacks=True, show_path=False)],
    )
    logging.getLogger("main").debug("Settings: %s", settings)

    sys.exit(asyncio.run(main(settings, sys.argv[1:], Console())))
