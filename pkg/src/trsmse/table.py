"""Triple record system (TRS) data model, file I/O and bundled case studies.

Cells are always ordered ``(111, 110, 101, 011, 100, 010, 001)``; the
unobserved ``000`` cell, when it appears at all, comes last.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import EmptyTable, NegativeCount, ParseError, UnknownDataset

CELLS = ("111", "110", "101", "011", "100", "010", "001")
CELL_NAMES = tuple("x" + c for c in CELLS)
ALL_CELLS = CELLS + ("000",)
# capture indicators (i, j, k) for the seven observed cells, in CELLS order
CELL_PATTERNS = np.array([[int(ch) for ch in c] for c in CELLS], dtype=np.int64)


@dataclass(frozen=True)
class TrsTable:
    """Seven observed cell counts of a triple record system."""

    x111: int
    x110: int
    x101: int
    x011: int
    x100: int
    x010: int
    x001: int
    label: str = ""

    @property
    def counts(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in CELL_NAMES], dtype=np.int64)

    @property
    def x0(self) -> int:
        """Number of distinct individuals seen in at least one list."""
        return int(self.counts.sum())

    @property
    def n1(self) -> int:
        return self.x111 + self.x110 + self.x101 + self.x100

    @property
    def n2(self) -> int:
        return self.x111 + self.x110 + self.x011 + self.x010

    @property
    def n3(self) -> int:
        return self.x111 + self.x101 + self.x011 + self.x001

    @property
    def margins(self) -> tuple[int, int, int]:
        return self.n1, self.n2, self.n3

    def pair_margin(self, pattern: str) -> int:
        """Sum of cells matching a three-character pattern with ``.`` wildcards.

        ``pair_margin("1.0")`` is x110 + x100. Only observed cells are summed.
        """
        if len(pattern) != 3 or any(ch not in "01." for ch in pattern):
            raise ValueError(f"bad margin pattern {pattern!r}")
        total = 0
        for cell in CELLS:
            if all(p == "." or p == c for p, c in zip(pattern, cell)):
                total += getattr(self, "x" + cell)
        return total

    def scaled(self, factor: int) -> "TrsTable":
        return TrsTable(*(int(v) * factor for v in self.counts), label=self.label)

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {n: int(getattr(self, n)) for n in CELL_NAMES}
        if self.label:
            out["label"] = self.label
        return out


def validate_table(raw: Sequence[int] | np.ndarray | Mapping[str, Any] | TrsTable,
                   label: str | None = None) -> TrsTable:
    """Build a validated :class:`TrsTable` from seven counts.

    ``raw`` may be a sequence in canonical cell order, a mapping keyed by
    ``x111`` .. ``x001``, or an existing table (re-validated).
    """
    if isinstance(raw, TrsTable):
        values = list(raw.counts)
        label = raw.label if label is None else label
    elif isinstance(raw, Mapping):
        missing = [n for n in CELL_NAMES if n not in raw]
        if missing:
            raise ParseError(f"missing cell fields: {', '.join(missing)}")
        values = [raw[n] for n in CELL_NAMES]
        if label is None:
            label = str(raw.get("label", ""))
    elif isinstance(raw, (list, tuple)):
        values = list(raw)
    else:
        values = list(np.asarray(raw).ravel())
    if len(values) != 7:
        raise ParseError(f"expected 7 cell counts, got {len(values)}")

    ints = []
    for name, v in zip(CELL_NAMES, values):
        if isinstance(v, (bool, np.bool_)):
            raise ParseError(f"{name}: boolean is not a count")
        try:
            fv = float(v)
        except (TypeError, ValueError):
            raise ParseError(f"{name}: not a number: {v!r}") from None
        if not math.isfinite(fv) or fv != int(fv):
            raise ParseError(f"{name}: not an integer: {v!r}")
        iv = int(fv)
        if iv < 0:
            raise NegativeCount(f"{name} = {iv} is negative")
        ints.append(iv)
    if sum(ints) == 0:
        raise EmptyTable("all seven cells are zero")
    return TrsTable(*ints, label=label or "")


# ---------------------------------------------------------------------------
# file formats


def _table_from_json_obj(obj: Any) -> TrsTable:
    if not isinstance(obj, Mapping):
        raise ParseError("JSON table must be an object")
    unknown = sorted(set(obj) - set(CELL_NAMES) - {"label"})
    if unknown:
        raise ParseError(f"unknown field(s): {', '.join(unknown)}")
    for n in CELL_NAMES:
        if n not in obj:
            raise ParseError(f"missing field {n}")
        if isinstance(obj[n], bool) or not isinstance(obj[n], int):
            raise ParseError(f"{n}: expected an integer, got {obj.get(n)!r}")
    if "label" in obj and not isinstance(obj["label"], str):
        raise ParseError("label: expected a string")
    return validate_table(obj)


def _tables_from_csv_text(text: str) -> list[TrsTable]:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty CSV")
    header = [h.strip() for h in rows[0]]
    if header[:7] != list(CELL_NAMES) or header[7:] not in ([], ["label"]):
        raise ParseError(
            "CSV header must be exactly " + ",".join(CELL_NAMES) + " with an optional label column;"
            f" got {','.join(header)}")
    if len(rows) < 2:
        raise ParseError("CSV has a header but no data rows")
    tables = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        values = []
        for name, cell in zip(CELL_NAMES, row[:7]):
            try:
                values.append(int(cell.strip()))
            except ValueError:
                raise ParseError(f"line {lineno}: {name}: not an integer: {cell!r}") from None
        label = row[7].strip() if len(row) > 7 else ""
        tables.append(validate_table(values, label=label))
    return tables


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("json", "csv"):
            raise ParseError(f"unsupported format {fmt!r}")
        return fmt
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("json", "csv"):
        return suffix
    raise ParseError(f"cannot infer format from {path.name!r}; pass format='json' or 'csv'")


def load_tables(path: str | Path, format: str | None = None) -> list[TrsTable]:
    """Read every table in a JSON or CSV file.

    A JSON file may hold one table object or a list of them; a CSV file holds
    one table per data row.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if fmt == "csv":
        return _tables_from_csv_text(text)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    if isinstance(obj, list):
        if not obj:
            raise ParseError("empty JSON list")
        return [_table_from_json_obj(o) for o in obj]
    return [_table_from_json_obj(obj)]


def load_table(path: str | Path, format: str | None = None) -> TrsTable:
    """Read a single table; multi-table files are rejected."""
    tables = load_tables(path, format)
    if len(tables) != 1:
        raise ParseError(f"expected one table, found {len(tables)}; use load_tables")
    return tables[0]


def dumps_csv(tables: Iterable[TrsTable]) -> str:
    tables = list(tables)
    with_label = any(t.label for t in tables)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(CELL_NAMES) + (["label"] if with_label else []))
    for t in tables:
        writer.writerow([int(v) for v in t.counts] + ([t.label] if with_label else []))
    return buf.getvalue()


def save_table(table: TrsTable | Sequence[TrsTable], path: str | Path,
               format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    tables = [table] if isinstance(table, TrsTable) else list(table)
    if fmt == "csv":
        path.write_text(dumps_csv(tables))
    else:
        obj: Any = tables[0].as_dict() if len(tables) == 1 else [t.as_dict() for t in tables]
        path.write_text(json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------------------
# bundled data: ALS among 1991 Gulf War veterans (lists V, D, PA) and the
# WTC Health Registry (lists SI, BL, PA)

_BUILTIN = {
    "als_all": ((24, 23, 19, 9, 10, 10, 12), "ALS, all veterans"),
    "als_deployed": ((10, 2, 12, 4, 5, 2, 5), "ALS, deployed veterans"),
    "als_nondeployed": ((14, 21, 7, 5, 5, 8, 7), "ALS, non-deployed veterans"),
    "wtc": ((174, 88, 1658, 750, 1702, 270, 4323), "WTC Twin Towers occupants"),
}
DATASETS = tuple(_BUILTIN)


def builtin_dataset(name: str) -> TrsTable:
    try:
        counts, label = _BUILTIN[name]
    except KeyError:
        raise UnknownDataset(f"unknown dataset {name!r}; choose from {', '.join(DATASETS)}") from None
    return validate_table(counts, label=label)


# ---------------------------------------------------------------------------
# results


@dataclass
class EstimateResult:
    """Uniform output of every population-size estimator."""

    method: str
    n_hat: float
    x0: int
    ci_lower: float | None = None
    ci_upper: float | None = None
    label: str = ""
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return bool(math.isfinite(self.n_hat) and self.n_hat >= self.x0)

    @property
    def has_ci(self) -> bool:
        return self.ci_lower is not None and self.ci_upper is not None

    def with_ci(self, lower: float, upper: float) -> "EstimateResult":
        return EstimateResult(self.method, self.n_hat, self.x0, lower, upper,
                              self.label, dict(self.diagnostics))

    def to_dict(self) -> dict[str, Any]:
        def r2(v):
            return None if v is None else (round(float(v), 2) if math.isfinite(v) else None)
        return {
            "method": self.method,
            "label": self.label,
            "x0": int(self.x0),
            "n_hat": r2(self.n_hat),
            "n_hat_rounded": int(round(self.n_hat)) if math.isfinite(self.n_hat) else None,
            "ci_lower": r2(self.ci_lower),
            "ci_upper": r2(self.ci_upper),
            "feasible": self.feasible,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return round(v, 10) if math.isfinite(v) else None
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    return obj


@dataclass(frozen=True)
class CellProbabilities:
    """Probabilities of all eight capture patterns, ``000`` last."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != 8:
            raise ValueError("need eight cell probabilities")
        arr = np.asarray(self.values, dtype=float)
        if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
            raise ValueError("cell probabilities must lie in [0, 1]")
        if abs(arr.sum() - 1.0) > 1e-12:
            raise ValueError(f"cell probabilities sum to {arr.sum()!r}, not 1")

    def __getitem__(self, cell: str) -> float:
        return self.values[ALL_CELLS.index(cell)]

    @property
    def observed(self) -> np.ndarray:
        return np.asarray(self.values[:7])

    @property
    def p000(self) -> float:
        return self.values[7]
