"""Multi-list capture records: parsing, validation, aggregation.

Record files are delimited text with 0/1 columns ``list_1 .. list_S`` and an
optional ``group`` column.  Aggregated files have columns ``pattern`` and
``count`` where a pattern string such as ``"1000"`` means list 1 captured the
record and lists 2-4 did not.  Lines starting with ``#`` are comments; writers
put a format/version line there.
"""

from __future__ import annotations

import csv
import io
import itertools
from importlib import resources
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

RECORDS_HEADER = "# nlcmcr-records v1"
PATTERNS_HEADER = "# nlcmcr-patterns v1"
DEFAULT_GROUP = "_all"


class DataError(ValueError):
    """Input records violate the dataset contract."""


class ParseError(DataError):
    pass


def pattern_string(pattern: Sequence[bool]) -> str:
    return "".join("1" if x else "0" for x in pattern)


def parse_pattern(text: str) -> tuple[bool, ...]:
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise ParseError(f"pattern {text!r} must be a string of 0/1")
    return tuple(c == "1" for c in text)


def all_patterns(S: int) -> np.ndarray:
    """Every observable pattern for ``S`` lists, shape ``(2**S - 1, S)``.

    Row order is ``itertools.product`` order with the all-false row removed,
    so the row of a pattern is its binary value (list 1 most significant) - 1.
    """
    rows = list(itertools.product((False, True), repeat=S))[1:]
    return np.array(rows, dtype=bool).reshape(-1, S)


def pattern_codes(records: np.ndarray) -> np.ndarray:
    """Row index into :func:`all_patterns` for each record."""
    S = records.shape[1]
    place = 1 << np.arange(S - 1, -1, -1)
    return records.astype(np.int64) @ place - 1


@dataclass(frozen=True)
class GroupedDataset:
    """Observed records split into ordered groups.

    ``groups`` holds ``(key, records)`` pairs where ``records`` is a boolean
    array of shape ``(n_j, S)``.
    """

    S: int
    groups: tuple[tuple[str, np.ndarray], ...]
    provenance: str = ""

    def __post_init__(self):
        if self.S < 2:
            raise DataError(f"at least two lists are required, got S={self.S}")
        if not self.groups:
            raise DataError("dataset must contain at least one group")
        keys = [k for k, _ in self.groups]
        if len(set(keys)) != len(keys):
            raise DataError("group keys must be unique")
        for key, rec in self.groups:
            if rec.ndim != 2 or rec.shape[1] != self.S:
                raise DataError(f"group {key!r}: records must have {self.S} columns")
            if rec.shape[0] == 0:
                raise DataError(f"group {key!r} is empty")
            if np.any(~rec.any(axis=1)):
                raise DataError(f"group {key!r} contains an all-zero capture pattern")
            rec.setflags(write=False)

    @property
    def J(self) -> int:
        return len(self.groups)

    @property
    def n(self) -> int:
        return sum(rec.shape[0] for _, rec in self.groups)

    @property
    def group_keys(self) -> list[str]:
        return [k for k, _ in self.groups]

    @property
    def group_sizes(self) -> np.ndarray:
        return np.array([rec.shape[0] for _, rec in self.groups], dtype=np.int64)

    def records(self) -> np.ndarray:
        return np.concatenate([rec for _, rec in self.groups], axis=0)

    def pooled(self, key: str = DEFAULT_GROUP) -> "GroupedDataset":
        return GroupedDataset(self.S, ((key, self.records()),), self.provenance)

    def permute_lists(self, order: Sequence[int]) -> "GroupedDataset":
        """Dataset whose list ``s`` is this dataset's list ``order[s]``."""
        order = list(order)
        return GroupedDataset(
            self.S,
            tuple((k, rec[:, order].copy()) for k, rec in self.groups),
            self.provenance,
        )


@dataclass(frozen=True)
class PatternCountTable:
    S: int
    counts: Mapping[tuple[bool, ...], int] = field(default_factory=dict)

    def __post_init__(self):
        if self.S < 2:
            raise DataError(f"at least two lists are required, got S={self.S}")
        clean = {}
        for pat, c in self.counts.items():
            pat = tuple(bool(x) for x in pat)
            if len(pat) != self.S:
                raise DataError(f"pattern {pattern_string(pat)} does not have {self.S} lists")
            if not any(pat):
                raise DataError("the all-zero pattern cannot be observed")
            if int(c) != c or c < 0:
                raise DataError(f"count for {pattern_string(pat)} must be a nonnegative integer")
            if c:
                clean[pat] = int(c)
        object.__setattr__(self, "counts", clean)

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    def vector(self) -> np.ndarray:
        """Counts aligned with :func:`all_patterns` rows."""
        out = np.zeros(2**self.S - 1, dtype=np.int64)
        for pat, c in self.counts.items():
            out[pattern_codes(np.array([pat]))[0]] = c
        return out

    def __getitem__(self, pattern) -> int:
        if isinstance(pattern, str):
            pattern = parse_pattern(pattern)
        return self.counts.get(tuple(bool(x) for x in pattern), 0)


@dataclass(frozen=True)
class Schema:
    """Column mapping for record files.

    ``list_columns=None`` picks every column named ``list_<s>`` in numeric
    order.  ``group_column=None`` ignores groups; the default uses the
    ``group`` column when present.
    """

    list_columns: Sequence[str] | None = None
    group_column: str | None = "group"
    delimiter: str = ","


def _data_lines(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def parse_records(text: str, schema: Schema = Schema(), provenance: str = "") -> GroupedDataset:
    reader = csv.reader(_data_lines(text), delimiter=schema.delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("record file is empty") from None
    if schema.list_columns is None:
        named = [h for h in header if h.startswith("list_") and h[5:].isdigit()]
        list_cols = sorted(named, key=lambda h: int(h[5:]))
    else:
        list_cols = list(schema.list_columns)
        missing = [c for c in list_cols if c not in header]
        if missing:
            raise ParseError(f"missing list columns: {missing}")
    S = len(list_cols)
    if S < 2:
        raise DataError(f"unsupported dataset: need at least two list columns, found {S}")
    list_idx = [header.index(c) for c in list_cols]
    group_idx = None
    if schema.group_column is not None and schema.group_column in header:
        group_idx = header.index(schema.group_column)

    rows: dict[str, list[list[bool]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        pat = []
        for i in list_idx:
            v = row[i].strip()
            if v not in ("0", "1"):
                raise ParseError(f"row {lineno}: list value {v!r} is not 0/1")
            pat.append(v == "1")
        if not any(pat):
            raise DataError(f"row {lineno}: all-zero capture pattern cannot be observed")
        key = row[group_idx].strip() if group_idx is not None else DEFAULT_GROUP
        rows.setdefault(key, []).append(pat)
    if not rows:
        raise DataError("dataset must be nonempty")
    groups = tuple((k, np.array(v, dtype=bool)) for k, v in rows.items())
    return GroupedDataset(S, groups, provenance)


def parse_pattern_counts(text: str, delimiter: str = ",") -> PatternCountTable:
    reader = csv.DictReader(_data_lines(text), delimiter=delimiter)
    if reader.fieldnames is None or not {"pattern", "count"} <= set(reader.fieldnames):
        raise ParseError("aggregated file needs 'pattern' and 'count' columns")
    counts: dict[tuple[bool, ...], int] = {}
    S = None
    for lineno, row in enumerate(reader, start=2):
        pat = parse_pattern(row["pattern"])
        if S is None:
            S = len(pat)
        elif len(pat) != S:
            raise ParseError(f"row {lineno}: pattern length {len(pat)} != {S}")
        try:
            c = int(row["count"])
        except ValueError:
            raise ParseError(f"row {lineno}: count {row['count']!r} is not an integer") from None
        if not any(pat):
            if c:
                raise DataError(f"row {lineno}: all-zero capture pattern cannot be observed")
            continue
        counts[pat] = counts.get(pat, 0) + c
    if S is None:
        raise DataError("dataset must be nonempty")
    return PatternCountTable(S, counts)


def is_aggregated(text: str) -> bool:
    lines = _data_lines(text)
    if not lines:
        return False
    header = [h.strip() for h in lines[0].split(",")]
    return "pattern" in header and "count" in header


def load_dataset(path, schema: Schema = Schema()) -> GroupedDataset | PatternCountTable:
    """Read either file format, deciding by the header."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if is_aggregated(text):
        return parse_pattern_counts(text, schema.delimiter)
    return parse_records(text, schema, provenance=str(path))


def table1_path():
    """Path of the bundled four-list application counts (n = 36226)."""
    return resources.files("nlcmcr") / "datasets" / "table1_patterns.csv"


def load_table1() -> PatternCountTable:
    return parse_pattern_counts(table1_path().read_text(encoding="utf-8"))


def aggregate_patterns(ds: GroupedDataset) -> PatternCountTable:
    codes = pattern_codes(ds.records())
    counts = np.bincount(codes, minlength=2**ds.S - 1)
    pats = all_patterns(ds.S)
    return PatternCountTable(ds.S, {tuple(pats[i]): int(c) for i, c in enumerate(counts) if c})


def expand_counts(table: PatternCountTable, group_key: str = DEFAULT_GROUP) -> GroupedDataset:
    if table.n == 0:
        raise DataError("dataset must be nonempty")
    rows = [np.repeat(np.array([pat], dtype=bool), c, axis=0) for pat, c in table.counts.items()]
    return GroupedDataset(table.S, ((group_key, np.concatenate(rows, axis=0)),), "expanded counts")


def as_grouped(data: GroupedDataset | PatternCountTable) -> GroupedDataset:
    return data if isinstance(data, GroupedDataset) else expand_counts(data)


@dataclass(frozen=True)
class CellCounts:
    """Records collapsed to (group, pattern) cells.

    Records sharing a group and a pattern are exchangeable under both models,
    so samplers work on ``counts[j, p]`` rather than individual rows.
    """

    patterns: np.ndarray  # (P, S) bool
    counts: np.ndarray  # (J, P) int
    group_keys: tuple[str, ...]

    @property
    def S(self) -> int:
        return self.patterns.shape[1]

    @property
    def J(self) -> int:
        return self.counts.shape[0]

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def group_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def pooled(self) -> "CellCounts":
        return CellCounts(self.patterns, self.counts.sum(axis=0, keepdims=True), (DEFAULT_GROUP,))


def cell_counts(data: GroupedDataset | PatternCountTable) -> CellCounts:
    if isinstance(data, PatternCountTable):
        if data.n == 0:
            raise DataError("dataset must be nonempty")
        return CellCounts(all_patterns(data.S), data.vector()[None, :], (DEFAULT_GROUP,))
    P = 2**data.S - 1
    counts = np.stack(
        [np.bincount(pattern_codes(rec), minlength=P) for _, rec in data.groups]
    ).astype(np.int64)
    return CellCounts(all_patterns(data.S), counts, tuple(data.group_keys))


def format_records(ds: GroupedDataset, delimiter: str = ",") -> str:
    buf = io.StringIO()
    buf.write(RECORDS_HEADER + "\n")
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow([f"list_{s + 1}" for s in range(ds.S)] + ["group"])
    for key, rec in ds.groups:
        for row in rec:
            w.writerow([int(x) for x in row] + [key])
    return buf.getvalue()


def format_pattern_counts(table: PatternCountTable, delimiter: str = ",") -> str:
    lines = [PATTERNS_HEADER, delimiter.join(["pattern", "count"])]
    pats = all_patterns(table.S)
    vec = table.vector()
    for pat, c in zip(pats, vec):
        lines.append(f"{pattern_string(pat)}{delimiter}{int(c)}")
    return "\n".join(lines) + "\n"


def records_from_patterns(groups: Iterable[tuple[str, Iterable[str]]], provenance: str = "") -> GroupedDataset:
    """Build a dataset from pattern strings, e.g. ``[("g1", ["10", "11"])]``."""
    built = []
    S = None
    for key, pats in groups:
        arr = np.array([parse_pattern(p) for p in pats], dtype=bool)
        S = arr.shape[1] if S is None else S
        built.append((key, arr))
    if S is None:
        raise DataError("dataset must be nonempty")
    return GroupedDataset(S, tuple(built), provenance)
