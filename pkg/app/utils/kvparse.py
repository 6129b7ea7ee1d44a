"""Line-oriented `key = value` tokenizer shared by terrain and run-config files."""

from typing import Callable, List

from pydantic import BaseModel, ConfigDict


class Assignment(BaseModel):
    """One `key = value` line."""

    model_config = ConfigDict(frozen=True)

    key: str
    value: str
    line: int
    column: int  # 1-based column of the first value character


def parse_assignments(
    text: str,
    error: Callable[[str, int, int], Exception],
) -> List[Assignment]:
    """
    Split text into assignments, skipping blank lines and `#` comments.

    Args:
        text: File content
        error: Factory for the exception raised on a syntax error,
            called as error(message, line, column)

    Returns:
        Assignments in file order
    """
    assignments: List[Assignment] = []
    seen = set()

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue

        if "=" not in line:
            column = len(raw) - len(raw.lstrip()) + 1
            raise error(f"no assignment in {raw.strip()!r}", number, column)

        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        if not key:
            raise error("empty key", number, 1)
        if key in seen:
            raise error(f"duplicate key {key!r}", number, len(key_part) - len(key_part.lstrip()) + 1)

        value = value_part.strip()
        column = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not value:
            raise error(f"empty value for {key!r}", number, column)

        seen.add(key)
        assignments.append(Assignment(key=key, value=value, line=number, column=column))

    return assignments
