"""Long-format CSV tables with JSON sidecars.

Floats are written with 17 significant digits so that reading a file back
and writing it again reproduces the same bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

FLOAT_FORMAT = "{:.16e}"


class OutputExistsError(FileExistsError):
    pass


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FORMAT.format(float(v))


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and hasattr(obj, "name"):  # Enum
        return obj.value
    return obj


def _guard(path: Path, overwrite: bool) -> None:
    if path.exists() and not overwrite:
        raise OutputExistsError(f"{path} exists; pass --force-overwrite to replace it")


def write_table(
    path,
    columns: Sequence[str],
    rows: Sequence[Sequence],
    metadata: Mapping | None = None,
    overwrite: bool = False,
) -> Path:
    """Write a CSV table and, when metadata is given, a ``.json`` sidecar."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    _guard(path, overwrite)
    if metadata is not None:
        _guard(sidecar, overwrite)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    if metadata is not None:
        meta = dict(_jsonable(metadata))
        meta.setdefault("config_hash", config_hash(meta.get("config", meta)))
        with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2, ensure_ascii=False)
            fh.write("\n")
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader]
    return header, np.asarray(data, dtype=float).reshape(len(data), len(header))


def read_metadata(path) -> dict:
    with open(Path(path).with_suffix(".json"), encoding="utf-8") as fh:
        return json.load(fh)
