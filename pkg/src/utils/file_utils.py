#!/usr/bin/env python3

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

from dotenv import dotenv_values

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class DataError(ValueError):
    """Input data that cannot be used: malformed files, gaps, degenerate series."""


def require_file(path: PathLike) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    return path


def scan_csv_rows(path: PathLike) -> int:
    """Check that every non-empty line has the same number of fields; return that count."""
    path = require_file(path)
    width = None
    with open(path, 'r', newline='') as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path.name}: line {line_no} has {len(row)} fields, expected {width}")
    if width is None:
        raise DataError(f"{path.name}: file is empty")
    return width


def save_json(data: dict, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2)
        f.write('\n')
    logger.info(f"Wrote {path}")
    return path


def load_json(path: PathLike) -> dict:
    path = require_file(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path.name}: invalid JSON ({e})") from e


def save_rows_csv(rows: Sequence[Dict], columns: Sequence[str], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c) for c in columns})
    logger.info(f"Wrote {path}")
    return path


def read_changepoints(path: PathLike) -> List[int]:
    """Read change-point indices from a report JSON, a JSON list or a plain text file."""
    path = require_file(path)
    text = path.read_text(encoding='utf-8').strip()
    if not text:
        return []
    if text[0] in '[{':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataError(f"{path.name}: invalid JSON ({e})") from e
        if isinstance(data, dict):
            data = [entry['t'] for entry in data.get('changepoints', [])]
        values = data
    else:
        values = [tok for tok in text.replace(',', ' ').split() if tok]
    try:
        return sorted(int(v) for v in values)
    except (TypeError, ValueError) as e:
        raise DataError(f"{path.name}: change-points must be integers ({e})") from e


def read_key_values(path: PathLike) -> Dict[str, str]:
    """Parse a plain key=value file; keys are lower-cased."""
    path = require_file(path)
    return {k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None}
