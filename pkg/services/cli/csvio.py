"""
Versioned CSV tables.

Every file starts with ``# schema=<name>/<version>`` followed by the column
header. Values are written as text: floats with six decimals, absent values
as empty cells, so reruns produce identical bytes.
"""
import io
import math
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple

import pandas as pd

from services.exceptions import SchemaError

SCHEMAS: Dict[str, Tuple[int, List[str]]] = {
    "diagnoses": (
        1,
        [
            "case_id",
            "pct_benign",
            "pct_g3",
            "pct_g4",
            "pct_g5",
            "tumor_fraction",
            "verdict",
            "primary",
            "secondary",
            "tertiary",
            "grade_group",
            "malignancy_score",
            "aggressiveness_score",
            "errors",
        ],
    ),
    "reads": (
        1,
        [
            "case_id",
            "reader_id",
            "round",
            "verdict",
            "primary",
            "secondary",
            "tertiary",
            "grade_group",
            "tumor_volume_pct",
            "flags",
        ],
    ),
    "ihc": (1, ["case_id", "verdict"]),
    "reference": (
        1,
        ["case_id", "status", "verdict", "primary", "secondary", "tertiary", "grade_group"],
    ),
    "routing": (1, ["round", "status", "count", "percent"]),
    "worklist": (1, ["case_id", "status", "dissenter"]),
    "ground_truth": (
        1,
        [
            "case_id",
            "mask_file",
            "seed",
            "pct_benign",
            "pct_g3",
            "pct_g4",
            "pct_g5",
            "verdict",
            "primary",
            "secondary",
            "tertiary",
            "grade_group",
        ],
    ),
    "confusion": (1, ["scale", "reference", "prediction", "count"]),
    "summary": (1, ["metric", "value"]),
    "roc": (1, ["cutoff", "threshold", "sensitivity", "false_positive_rate"]),
    "bootstrap": (1, ["cutoff", "fpr", "tpr_mean", "tpr_lower", "tpr_upper"]),
    "operating_points": (1, ["cutoff", "rule", "threshold", "sensitivity", "specificity"]),
    "permutation": (
        1,
        ["group", "statistic", "readers", "observed", "iterations", "seed", "p_two_tailed"],
    ),
    "panel_agreement": (
        1,
        ["reader_id", "cases", "accuracy", "kappa", "median_interrater_kappa"],
    ),
    "interrater": (1, ["rater_a", "rater_b", "kappa"]),
}

_HEADER = re.compile(r"^# schema=([a-z_]+)/(\d+)$")
# first data row sits below the schema comment and the column header
FIRST_DATA_LINE = 3


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.6f}"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_table(path: str | Path, schema: str, rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write ``rows`` under ``schema``; unknown or missing columns are an error."""
    version, columns = SCHEMAS[schema]
    records = []
    for row in rows:
        if set(row) != set(columns):
            raise SchemaError(f"{schema} row has columns {sorted(row)}, expected {columns}")
        records.append([format_value(row[c]) for c in columns])
    frame = pd.DataFrame(records, columns=columns, dtype=str)
    buffer = io.StringIO()
    buffer.write(f"# schema={schema}/{version}\n")
    frame.to_csv(buffer, index=False, lineterminator="\n")
    path = Path(path)
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def read_schema_name(path: str | Path) -> Tuple[str, int]:
    try:
        with open(path, encoding="utf-8") as f:
            first = f.readline().rstrip("\r\n")
    except OSError as e:
        raise SchemaError(f"{path}: cannot read table: {e.strerror or e}") from e
    except UnicodeDecodeError as e:
        raise SchemaError(f"{path}: not a UTF-8 table: {e.reason}", line=1) from e
    match = _HEADER.match(first)
    if not match:
        raise SchemaError(f"{path}: missing '# schema=<name>/<version>' header", line=1)
    return match.group(1), int(match.group(2))


def read_table(path: str | Path, schemas: Sequence[str] | str) -> Tuple[str, pd.DataFrame]:
    """
    Read a table whose header names one of ``schemas``.
    :return: The schema name and the rows as strings; the ``line`` column
        holds each row's line number in the file.
    :raises: SchemaError for unknown schemas or versions and column mismatches.
    """
    allowed = [schemas] if isinstance(schemas, str) else list(schemas)
    name, version = read_schema_name(path)
    if name not in allowed:
        raise SchemaError(f"{path}: expected schema {' or '.join(allowed)}, got {name}", line=1)
    expected_version, columns = SCHEMAS[name]
    if version != expected_version:
        raise SchemaError(f"{path}: unsupported {name} schema version {version}", line=1)
    frame = pd.read_csv(path, skiprows=1, dtype=str, keep_default_na=False)
    if list(frame.columns) != columns:
        raise SchemaError(
            f"{path}: columns {list(frame.columns)} do not match {name}/{version}", line=2
        )
    frame["line"] = range(FIRST_DATA_LINE, FIRST_DATA_LINE + len(frame))
    return name, frame


def optional_int(value: str, column: str, line: int) -> int | None:
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise SchemaError(f"{column} must be an integer, got {value!r}", line=line)


def optional_float(value: str, column: str, line: int) -> float | None:
    if value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise SchemaError(f"{column} must be a number, got {value!r}", line=line)
