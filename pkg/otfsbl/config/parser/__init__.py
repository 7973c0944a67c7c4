import os.path

from lark import Lark, Token, Transformer, UnexpectedCharacters, UnexpectedInput

NESTED_DELIMITER = "__"

type Value = str | list[str]


class ConfigError(Exception):
    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class EntryTransformer(Transformer):
    def values(self, value: list[Token]):
        items = [str(item).strip() for item in value]
        return items[0] if len(items) == 1 else items

    def entry(self, value):
        return str(value[0]), value[1]

    def start(self, value):
        return list(value)


with open(os.path.join(os.path.split(__file__)[0], "grammar.lark")) as file:
    parser = Lark(file, start="start", parser="lalr")


def parse_entries(text: str) -> list[tuple[str, Value]]:
    if not text.endswith("\n"):
        text += "\n"
    try:
        return EntryTransformer().transform(parser.parse(text))
    except UnexpectedInput as error:
        message = error.match_examples(
            parser.parse,
            {
                "Missing '=' between key and value": ["delay_bins 16\n"],
                "Missing value after '='": ["delay_bins =\n", "delay_bins = # none\n"],
                "Empty list item": ["snr_db = 0,,5\n", "snr_db = 0,\n"],
            },
        )
        line = getattr(error, "line", -1)
        location = f" (line {line})" if line > 0 else ""
        if message is not None:
            raise ConfigError(message + location) from error
        if isinstance(error, UnexpectedCharacters):
            raise ConfigError(f"Unexpected character {error.char!r}{location}") from error
        raise ConfigError(str(error)) from error


def parse_config(text: str) -> dict[str, Value | dict]:
    """Parse flat ``key = value`` text into a nested dictionary.

    Keys containing ``__`` address nested sections, so ``em__tolerance`` ends up
    as ``{"em": {"tolerance": ...}}``.
    """
    values: dict[str, Value | dict] = {}
    for key, value in parse_entries(text):
        *sections, leaf = key.split(NESTED_DELIMITER)
        target = values
        for section in sections:
            nested = target.setdefault(section, {})
            if not isinstance(nested, dict):
                raise ConfigError(f"Key {key} nests under the plain value {section}")
            target = nested
        if leaf in target:
            raise ConfigError(f"Duplicate key {key}")
        target[leaf] = value
    return values
