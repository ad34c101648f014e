"""CSV / JSON output contract and the matching readers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

BIAS_TEST_COLUMNS = ("rep", "n", "k", "basis", "bias_k_hat", "bias_k_se", "bias_oracle", "psi_hat", "psi_se", "statistic", "reject")
COLUMNS = {
    "coverage": ("rep", "n", "estimator", "psi_hat", "se", "psi_true", "covered", "bias_oracle"),
    "bias_test": BIAS_TEST_COLUMNS,
    "ensemble_test": BIAS_TEST_COLUMNS + ("m", "retained", "basis_mode"),
    "universal": ("rep", "n", "B", "alpha", "set_lo", "set_hi", "covered"),
}
POWER_CURVE_COLUMNS = ("ratio", "corruption", "bias_k", "threshold", "rejection_rate", "mc_se", "reps")

_INT = {"rep", "n", "k", "B", "m", "retained", "reps"}
_BOOL = {"covered", "reject"}
_STR = {"basis", "estimator", "basis_mode"}


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def parse_value(column: str, text: str) -> Any:
    if column in _BOOL:
        if text not in ("true", "false"):
            raise ValueError(f"bad boolean {text!r} in column {column}")
        return text == "true"
    if column in _INT:
        return int(text)
    if column in _STR:
        return text
    return float(text)


def render_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def write_csv(path: str | Path, columns, rows) -> Path:
    path = Path(path)
    path.write_text(render_csv(columns, rows), encoding="utf-8", newline="")
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[dict[str, Any]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [{c: parse_value(c, v) for c, v in zip(header, line)} for line in reader]
    return header, rows


def write_records(path: str | Path, kind: str, records) -> Path:
    return write_csv(path, COLUMNS[kind], records)


def write_summary(path: str | Path, summary: dict[str, Any]) -> Path:
    path = Path(path)
    text = json.dumps(summary, indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_summary(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
