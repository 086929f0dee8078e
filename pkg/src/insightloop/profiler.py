"""Structured profiling of delimited tabular files.

Produces the dataset description consumed by every downstream agent:
file metadata, per-column types and missing counts, descriptive statistics
for numeric columns, a small row sample, and heuristic quality diagnostics.
Profiling is pure: it never touches the network and never mutates the file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .artifacts import canonical_json
from .errors import ParseError

# Cell values treated as missing, compared case-insensitively after strip.
MISSING_MARKERS = frozenset({"", "na", "n/a", "null"})

_BOOLEAN_TOKENS = frozenset({"true", "false"})
_NON_FINITE_TOKENS = frozenset({"nan", "inf", "-inf", "+inf", "infinity", "-infinity", "+infinity"})
_DATE_FORMATS = ("%Y/%m/%d", "%m/%d/%Y", "%d.%m.%Y")
_CATEGORICAL_MAX_DISTINCT = 20

COLUMN_TYPES = ("numeric", "categorical", "datetime", "text", "boolean")
DIAGNOSTIC_KINDS = ("missing_values", "duplicated_rows")

DEFAULT_SAMPLE_K = 5


@dataclass
class NumericStats:
    mean: float
    std_dev: float
    min: float
    max: float
    quantiles: dict[str, float]  # keys "0.25", "0.5", "0.75"

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_dev": self.std_dev,
            "min": self.min,
            "max": self.max,
            "quantiles": dict(self.quantiles),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NumericStats":
        return cls(
            mean=d["mean"],
            std_dev=d["std_dev"],
            min=d["min"],
            max=d["max"],
            quantiles=dict(d["quantiles"]),
        )


@dataclass
class ColumnProfile:
    name: str
    inferred_type: str
    missing_count: int
    numeric_stats: NumericStats | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inferred_type": self.inferred_type,
            "missing_count": self.missing_count,
            "numeric_stats": self.numeric_stats.to_dict() if self.numeric_stats else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnProfile":
        stats = d.get("numeric_stats")
        return cls(
            name=d["name"],
            inferred_type=d["inferred_type"],
            missing_count=d["missing_count"],
            numeric_stats=NumericStats.from_dict(stats) if stats else None,
        )


@dataclass
class DiagnosticFlag:
    kind: str
    detail: str
    count: int

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail, "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticFlag":
        return cls(kind=d["kind"], detail=d["detail"], count=d["count"])


@dataclass
class DatasetProfile:
    file_name: str
    file_size: int
    file_type: str
    row_count: int
    column_count: int
    columns: list[ColumnProfile]
    sample_rows: list[dict[str, str]]
    diagnostics: list[DiagnosticFlag] = field(default_factory=list)

    def validate(self) -> None:
        if self.column_count != len(self.columns):
            raise ValueError("column_count does not match columns")
        for col in self.columns:
            if col.missing_count > self.row_count:
                raise ValueError(f"column {col.name}: missing_count exceeds row_count")
            if (col.inferred_type == "numeric") != (col.numeric_stats is not None):
                raise ValueError(f"column {col.name}: numeric_stats present iff numeric")
            if col.numeric_stats is not None:
                s = col.numeric_stats
                q = s.quantiles
                if not (s.min <= q["0.25"] <= q["0.5"] <= q["0.75"] <= s.max):
                    raise ValueError(f"column {col.name}: quantiles out of order")
                if s.std_dev < 0:
                    raise ValueError(f"column {col.name}: negative std_dev")
        if len(self.sample_rows) > self.row_count:
            raise ValueError("more sample rows than data rows")
        for flag in self.diagnostics:
            if flag.count <= 0:
                raise ValueError("diagnostic flags require count > 0")

    def column(self, name: str) -> ColumnProfile:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_dict(self) -> dict:
        return {
            "file_name": self.file_name,
            "file_size": self.file_size,
            "file_type": self.file_type,
            "row_count": self.row_count,
            "column_count": self.column_count,
            "columns": [c.to_dict() for c in self.columns],
            "sample_rows": [dict(r) for r in self.sample_rows],
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetProfile":
        return cls(
            file_name=d["file_name"],
            file_size=d["file_size"],
            file_type=d["file_type"],
            row_count=d["row_count"],
            column_count=d["column_count"],
            columns=[ColumnProfile.from_dict(c) for c in d["columns"]],
            sample_rows=[dict(r) for r in d["sample_rows"]],
            diagnostics=[DiagnosticFlag.from_dict(f) for f in d["diagnostics"]],
        )


def is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_MARKERS


def _parse_number(cell: str) -> float | None:
    token = cell.strip()
    if not token or token.lower() in _NON_FINITE_TOKENS:
        return None
    try:
        value = float(token)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _parses_as_datetime(cell: str) -> bool:
    token = cell.strip()
    if not token:
        return False
    try:
        datetime.fromisoformat(token.replace("Z", "+00:00"))
        return True
    except ValueError:
        pass
    for fmt in _DATE_FORMATS:
        try:
            datetime.strptime(token, fmt)
            return True
        except ValueError:
            continue
    return False


def infer_column_type(values: list[str]) -> str:
    """Classify a column from its non-missing cells.

    Fixed precedence keeps profiles deterministic:
    boolean -> numeric -> datetime -> categorical (<= 20 distinct) -> text.
    A column with no non-missing values is classified as text.
    """
    if not values:
        return "text"
    if all(v.strip().lower() in _BOOLEAN_TOKENS for v in values):
        return "boolean"
    if all(_parse_number(v) is not None for v in values):
        return "numeric"
    if all(_parses_as_datetime(v) for v in values):
        return "datetime"
    if len({v.strip() for v in values}) <= _CATEGORICAL_MAX_DISTINCT:
        return "categorical"
    return "text"


def _quantile(sorted_values: list[float], q: float) -> float:
    """Linear interpolation between order statistics (the common default)."""
    n = len(sorted_values)
    if n == 1:
        return sorted_values[0]
    pos = q * (n - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    if lo == hi:
        return sorted_values[int(pos)]
    frac = pos - lo
    return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac


def compute_numeric_stats(values: list[float]) -> NumericStats:
    ordered = sorted(values)
    n = len(ordered)
    mean = math.fsum(ordered) / n
    if n < 2:
        std_dev = 0.0
    else:
        std_dev = math.sqrt(math.fsum((x - mean) ** 2 for x in ordered) / (n - 1))
    return NumericStats(
        mean=mean,
        std_dev=std_dev,
        min=ordered[0],
        max=ordered[-1],
        quantiles={
            "0.25": _quantile(ordered, 0.25),
            "0.5": _quantile(ordered, 0.5),
            "0.75": _quantile(ordered, 0.75),
        },
    )


def _read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError("file has no header row", 0) from None
            rows: list[list[str]] = []
            for index, row in enumerate(reader, start=1):
                if len(row) != len(header):
                    raise ParseError(
                        f"expected {len(header)} fields, found {len(row)}", index
                    )
                rows.append(row)
    except csv.Error as exc:
        raise ParseError(f"malformed delimited file: {exc}", 0) from exc
    if not header or any(not name.strip() for name in header):
        raise ParseError("header row contains an empty column name", 0)
    return header, rows


def profile_dataset(path: str | Path, sample_k: int = DEFAULT_SAMPLE_K) -> DatasetProfile:
    """Build the full structured description of one delimited file.

    Deterministic for a fixed file. A file with a header but zero data rows
    yields a row_count-0 profile rather than an error.
    """
    if sample_k < 1:
        raise ValueError("sample_k must be positive")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    header, rows = _read_table(path)

    columns: list[ColumnProfile] = []
    total_missing = 0
    per_column_missing: list[tuple[str, int]] = []
    for j, name in enumerate(header):
        cells = [row[j] for row in rows]
        present = [c for c in cells if not is_missing(c)]
        missing = len(cells) - len(present)
        inferred = infer_column_type(present)
        stats = None
        if inferred == "numeric":
            parsed = [_parse_number(c) for c in present]
            stats = compute_numeric_stats([v for v in parsed if v is not None])
        columns.append(
            ColumnProfile(
                name=name,
                inferred_type=inferred,
                missing_count=missing,
                numeric_stats=stats,
            )
        )
        total_missing += missing
        if missing:
            per_column_missing.append((name, missing))

    diagnostics: list[DiagnosticFlag] = []
    if total_missing:
        detail = ", ".join(f"{name}={count}" for name, count in per_column_missing)
        diagnostics.append(
            DiagnosticFlag(kind="missing_values", detail=detail, count=total_missing)
        )
    # Rows compared as their rendered line with surrounding whitespace trimmed.
    seen: dict[str, int] = {}
    for row in rows:
        rendered = ",".join(row).strip()
        seen[rendered] = seen.get(rendered, 0) + 1
    duplicates = sum(count - 1 for count in seen.values() if count > 1)
    if duplicates:
        repeated = sum(1 for count in seen.values() if count > 1)
        diagnostics.append(
            DiagnosticFlag(
                kind="duplicated_rows",
                detail=f"{duplicates} extra occurrence(s) across {repeated} repeated row value(s)",
                count=duplicates,
            )
        )

    profile = DatasetProfile(
        file_name=path.name,
        file_size=path.stat().st_size,
        file_type=path.suffix.lstrip(".").lower() or "unknown",
        row_count=len(rows),
        column_count=len(header),
        columns=columns,
        sample_rows=[dict(zip(header, row)) for row in rows[:sample_k]],
        diagnostics=diagnostics,
    )
    profile.validate()
    return profile


def render_profile(profile: DatasetProfile) -> str:
    """Canonical key-sorted JSON rendering; round-trips via parse_profile."""
    profile.validate()
    return canonical_json(profile.to_dict())


def parse_profile(text: str) -> DatasetProfile:
    import json

    profile = DatasetProfile.from_dict(json.loads(text))
    profile.validate()
    return profile


def render_profile_for_prompt(profile: DatasetProfile) -> str:
    """Compact human-oriented rendering used inside agent prompts."""
    lines = [
        f"File: {profile.file_name} ({profile.file_type}, {profile.file_size} bytes)",
        f"Rows: {profile.row_count}  Columns: {profile.column_count}",
        "Columns: " + ", ".join(profile.column_names()),
    ]
    for col in profile.columns:
        entry = f"- {col.name}: {col.inferred_type}, missing={col.missing_count}"
        if col.numeric_stats:
            s = col.numeric_stats
            entry += (
                f", mean={s.mean:.6g}, std={s.std_dev:.6g},"
                f" min={s.min:.6g}, max={s.max:.6g}"
            )
        lines.append(entry)
    if profile.sample_rows:
        lines.append("Sample rows (first {}):".format(len(profile.sample_rows)))
        for row in profile.sample_rows:
            lines.append("  " + ", ".join(f"{k}={v}" for k, v in row.items()))
    for flag in profile.diagnostics:
        lines.append(f"Diagnostic: {flag.kind} ({flag.count}) {flag.detail}")
    return "\n".join(lines)
