"""
Output writers for reports, tables and the run manifest

Report JSON is written with sorted keys and no timestamps so identical runs
produce identical bytes; the manifest is the only file that records when a
run happened.
"""

import csv
import json
import math
import os
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import InvalidArgumentError
from . import log_utils

# Output format mapping
OUTPUT_FORMATS = {
    'report': {'extension': '.json'},
    'table': {'extension': '.csv'},
    'path': {'extension': '.csv'},
}

TABLE_COLUMNS = ['epsilon', 'hits', 'n', 'p_hat', 'p_lo', 'p_hi', 'eps2_log_p', 'is_upper_bound', 'target']

MANIFEST_NAME = "manifest.json"


def to_plain(obj):
    """
    Convert a report value into JSON-safe Python data

    numpy scalars and arrays become floats/ints/lists, non-finite floats
    become the strings "+inf", "-inf" and "nan", objects with AsDict are expanded.
    """
    if hasattr(obj, 'AsDict'):
        return to_plain(obj.AsDict())
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "+inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def output_path(out_dir: str, name: str, kind: str = 'report') -> str:
    """Path of an output file inside out_dir, created on demand"""
    format_info = OUTPUT_FORMATS.get(kind)
    if not format_info:
        raise InvalidArgumentError(f"Unknown output kind: {kind}", module="report_utils")
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name + format_info['extension'])


def write_json(obj, filepath: str) -> str:
    with open(filepath, 'w') as f:
        f.write(dumps(obj))
    log_utils.log(f"Saved {filepath}")
    return filepath


def _cell(value) -> str:
    value = to_plain(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_table_csv(rows, filepath: str, columns=TABLE_COLUMNS) -> str:
    """
    Write one CSV row per record

    Args:
        rows: Records (dicts or objects with AsDict); missing columns are left empty
        filepath: Target file
        columns: Column order

    Returns:
        str: filepath
    """
    with open(filepath, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            d = row.AsDict() if hasattr(row, 'AsDict') else row
            writer.writerow([_cell(d.get(c)) for c in columns])
    log_utils.log(f"Saved {filepath}")
    return filepath


def write_manifest(out_dir: str, subcommand: str, resolved_config: dict, outputs) -> str:
    manifest = {
        'tool': 'ldp-lab',
        'version': __version__,
        'subcommand': subcommand,
        'created': datetime.now(timezone.utc).isoformat(),
        'config': resolved_config,
        'outputs': sorted(os.path.basename(p) for p in outputs),
    }
    return write_json(manifest, os.path.join(out_dir, MANIFEST_NAME))
