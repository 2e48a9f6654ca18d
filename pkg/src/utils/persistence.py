"""
This module provides plain-text writers for records, tables and reports.
"""

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Type, TypeVar

from pydantic import BaseModel

M = TypeVar("M", bound=BaseModel)


def _prepare(path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_jsonl(path: Path, items: Iterable[BaseModel]) -> Path:
    """
    Writes one JSON object per line.

    Args:
        path (Path): Destination file; parent directories are created.
        items (Iterable[BaseModel]): The models to write.

    Returns:
        Path: The written file.
    """
    path = _prepare(path)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for item in items:
            handle.write(item.model_dump_json())
            handle.write("\n")
    return path


def read_jsonl(path: Path, model: Type[M]) -> List[M]:
    with Path(path).open(encoding="utf-8") as handle:
        return [model.model_validate_json(line) for line in handle if line.strip()]


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = _prepare(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([repr(x) if isinstance(x, float) else x for x in row] for row in rows)
    return path


def to_jsonable(payload: Any) -> Any:
    if isinstance(payload, BaseModel):
        return payload.model_dump(mode="json")
    if isinstance(payload, (list, tuple)):
        return [to_jsonable(item) for item in payload]
    if isinstance(payload, dict):
        return {key: to_jsonable(value) for key, value in payload.items()}
    return payload


def write_json(path: Path, payload: Any) -> Path:
    path = _prepare(path)
    path.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()
