"""CSV and JSON readers and writers for reports."""

import csv
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any, TypeVar

from pydantic import BaseModel

from app.errors import ParseError

T = TypeVar("T", bound=BaseModel)


def write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """
    Write rows as CSV with a header line.

    Args:
        path: Output file (parent directories are created)
        fieldnames: Column order
        rows: Mappings keyed by column name

    Returns:
        The path written
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow({name: row[name] for name in fieldnames})
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    """Read a CSV written by write_csv into a list of string dicts."""
    try:
        with open(path, newline="") as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise ParseError(f"Cannot read {path}: {e}") from e


def write_json(path: Path, document: BaseModel) -> Path:
    """Write a pydantic document as indented JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2) + "\n")
    return path


def read_json(path: Path, model: type[T]) -> T:
    """
    Read a JSON document back into its pydantic model.

    Raises:
        ParseError: If the file is missing or does not match the model
    """
    try:
        return model.model_validate_json(path.read_text())
    except (OSError, ValueError) as e:
        raise ParseError(f"Cannot read {model.__name__} from {path}: {e}") from e
