import os.path
from enum import Enum, auto
from typing import Literal, Sequence

from lark import Lark, Transformer, UnexpectedCharacters, UnexpectedEOF, UnexpectedInput

SEPARATOR = "\n"


class ArgumentType(Enum):
    FLAG = auto()
    STRING = auto()
    FLOAT = auto()
    INT = auto()


type Argument = (
    tuple[Literal[ArgumentType.FLAG], str]
    | tuple[Literal[ArgumentType.STRING], str]
    | tuple[Literal[ArgumentType.FLOAT], float]
    | tuple[Literal[ArgumentType.INT], int]
)


class ParseError(Exception):
    def __init__(self, message: str):
        super().__init__()
        self.message = message


class ArgumentTransformer(Transformer):
    def bareword(self, value):
        return (ArgumentType.FLAG, str(value[0]))

    def string(self, value):
        return (ArgumentType.STRING, str(value[0]))

    def float(self, value):
        return (ArgumentType.FLOAT, float(value[0]))

    def int(self, value):
        return (ArgumentType.INT, int(value[0]))

    def explicit_argument(self, value):
        return str(value[0]).replace("-", "_"), value[1]

    def command(self, value):
        return list(value)


with open(os.path.join(os.path.split(__file__)[0], "grammar.lark")) as file:
    parser = Lark(file, start="command")


def _parse_tree(text: str) -> list:
    try:
        return ArgumentTransformer().transform(parser.parse(text))
    except UnexpectedInput as error:
        message = error.match_examples(
            parser.parse,
            {
                "Missing value for a named argument": ["run\n--threads", "run\n--threads="],
                "Malformed argument name": ["run\n--1st\n2", "--Seed=2"],
            },
        )
        if message is not None:
            raise ParseError(message) from error
        if isinstance(error, UnexpectedEOF):
            raise ParseError("Unexpected end of arguments") from error
        if isinstance(error, UnexpectedCharacters):
            raise ParseError(f"Unexpected character {error.char!r} in arguments") from error
        raise ParseError(str(error)) from error


def parse_arguments(argv: Sequence[str]) -> tuple[list[Argument], dict[str, Argument]]:
    """Split command-line tokens into positional and ``--name value`` arguments."""
    arguments: list[Argument] = []
    explicit_arguments: dict[str, Argument] = {}
    for item in _parse_tree(SEPARATOR.join(argv)):
        match item:
            case (ArgumentType(), value):
                if explicit_arguments:
                    raise ParseError(f"Positional argument `{value}` follows named arguments")
                arguments.append(item)
            case (name, argument):
                if name in explicit_arguments:
                    raise ParseError(f"Argument `--{name}` given more than once")
                explicit_arguments[name] = argument
    return arguments, explicit_arguments
