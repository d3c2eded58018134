"""
Report writers: CSV, JSON and ASCII PGM.

CSV rows come from pydantic models (computed fields included). Floats are
written as the shortest decimal that round-trips their 32-bit value, nested
dicts become `prefix.key` columns and lists are joined with `;`.
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np
from pydantic import BaseModel

from tensor.bits import BitTensor
from utils.exceptions import ShapeMismatchError
from utils.logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return str(np.float32(value))
    if isinstance(value, (list, tuple)):
        return ";".join(format_cell(v) for v in value)
    if value is None:
        return ""
    return str(value)


def flatten_row(row: Union[BaseModel, Mapping[str, Any]]) -> Dict[str, Any]:
    """One CSV row: nested mappings become `key.subkey` columns."""
    data = row.model_dump() if isinstance(row, BaseModel) else dict(row)
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, Mapping):
            for sub, inner in value.items():
                flat[f"{key}.{sub}"] = inner
        else:
            flat[key] = value
    return flat


def write_csv(path: PathLike, rows: Iterable[Union[BaseModel, Mapping[str, Any]]]) -> Path:
    """
    Write rows as CSV; the header is the union of columns in first-seen order.

    Returns:
        Path: The written file.
    """
    path = Path(path)
    flat = [flatten_row(row) for row in rows]
    columns: List[str] = []
    for row in flat:
        columns.extend(key for key in row if key not in columns)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in flat:
            writer.writerow({key: format_cell(row.get(key)) for key in columns})
    logger.debug(f"Wrote {len(flat)} rows to {path}")
    return path


def write_json(path: PathLike, document: Union[BaseModel, Sequence[BaseModel], Mapping[str, Any]]) -> Path:
    """Write a report (or a list or mapping of reports) as one JSON document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(document, BaseModel):
        text = document.model_dump_json(indent=2)
    else:
        text = json.dumps(_jsonable(document), indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, Mapping):
        return {key: _jsonable(v) for key, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_pgm(path: PathLike, plane: Union[BitTensor, np.ndarray]) -> Path:
    """
    Write a binary map as ASCII PGM (P2): -1 -> 0, +1 -> 255.

    Args:
        plane: A single-channel BitTensor slice or an H x W boolean array
            (True is +1).
    """
    if isinstance(plane, BitTensor):
        if plane.shape.n != 1 or plane.shape.c != 1:
            raise ShapeMismatchError(f"PGM needs a single channel slice, got {plane.shape.as_tuple()}")
        plane = plane.to_bool()[0, 0]
    plane = np.asarray(plane, dtype=bool)
    if plane.ndim != 2:
        raise ShapeMismatchError(f"PGM needs an H x W map, got {plane.shape}")
    h, w = plane.shape
    pixels = np.where(plane, 255, 0)
    lines = ["P2", f"{w} {h}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in pixels)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path
