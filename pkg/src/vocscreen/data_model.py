"""Tabular subject data: loading, role binding, standardization, outlier fences.

A :class:`Dataset` is an immutable column store.  Continuous columns hold
float64 arrays; categorical columns hold integer codes plus a code book that
maps each code back to its level name.  Levels are coded in order of first
appearance, starting at 0.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class DataError(ValueError):
    """Raised for malformed input data or an invalid role binding."""


@dataclass(frozen=True)
class Dataset:
    column_names: tuple[str, ...]
    columns: Mapping[str, np.ndarray]
    row_ids: tuple[str, ...]
    kinds: Mapping[str, str]
    codebooks: Mapping[str, Mapping[int, str]] = field(default_factory=dict)
    scaling: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.row_ids)
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("column names must be unique")
        if len(set(self.row_ids)) != n:
            seen = set()
            dup = next(r for r in self.row_ids if r in seen or seen.add(r))
            raise DataError(f"duplicate id {dup!r}")
        frozen = {}
        for name in self.column_names:
            if name not in self.columns:
                raise DataError(f"missing column data for {name!r}")
            arr = np.array(self.columns[name], copy=True)
            if arr.shape != (n,):
                raise DataError(f"column {name!r} has {arr.shape[0]} entries, expected {n}")
            kind = self.kinds.get(name)
            if kind == CATEGORICAL:
                if name not in self.codebooks:
                    raise DataError(f"categorical column {name!r} has no code book")
                arr = arr.astype(np.int64)
            elif kind == CONTINUOUS:
                arr = arr.astype(np.float64)
            else:
                raise DataError(f"column {name!r} has unknown kind {kind!r}")
            arr.flags.writeable = False
            frozen[name] = arr
        object.__setattr__(self, "columns", frozen)

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def with_columns(self, updates: Mapping[str, np.ndarray], kind: str = CONTINUOUS) -> "Dataset":
        """Return a copy with columns replaced or appended (appended at the end)."""
        names = list(self.column_names)
        cols = dict(self.columns)
        kinds = dict(self.kinds)
        for name, values in updates.items():
            if name not in cols:
                names.append(name)
                kinds[name] = kind
            cols[name] = np.asarray(values)
        return Dataset(tuple(names), cols, self.row_ids, kinds, dict(self.codebooks), dict(self.scaling))

    def take(self, mask: np.ndarray) -> "Dataset":
        mask = np.asarray(mask)
        ids = tuple(np.asarray(self.row_ids, dtype=object)[mask])
        cols = {k: v[mask] for k, v in self.columns.items()}
        return Dataset(self.column_names, cols, ids, self.kinds, self.codebooks, self.scaling)

    def unscaled(self, name: str) -> np.ndarray:
        """Raw values of ``name``, undoing any recorded standardization."""
        values = self[name]
        if name in self.scaling:
            mean, sd = self.scaling[name]
            return values * sd + mean
        return values


def _parse_float(token: str, row: int, col: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"non-numeric value {token!r} at row {row}, column {col!r}") from None
    if np.isnan(value):
        raise DataError(f"missing value at row {row}, column {col!r}")
    return value


def infer_schema(path: str | os.PathLike, id_column: str = "id") -> dict[str, str]:
    """Guess column kinds: continuous when every token parses as a float."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        numeric = [True] * len(header)
        for row in reader:
            for j, tok in enumerate(row[: len(header)]):
                if numeric[j]:
                    try:
                        float(tok)
                    except ValueError:
                        numeric[j] = False
    return {
        name: CONTINUOUS if ok else CATEGORICAL
        for name, ok in zip(header, numeric)
        if name != id_column
    }


def load_dataset(path: str | os.PathLike, schema: Mapping[str, str], id_column: str = "id") -> Dataset:
    """Read a CSV file into a :class:`Dataset`.

    ``schema`` maps every non-id column to ``"continuous"`` or ``"categorical"``.
    Row numbers in error messages count the header as row 1.
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: missing header row")
        rows = list(reader)

    if id_column not in header:
        raise DataError(f"header has no id column {id_column!r}")
    data_cols = [h for h in header if h != id_column]
    if set(data_cols) != set(schema) or len(data_cols) != len(schema):
        missing = sorted(set(schema) - set(data_cols))
        extra = sorted(set(data_cols) - set(schema))
        raise DataError(f"header/schema mismatch: missing {missing}, undeclared {extra}")

    raw: dict[str, list] = {h: [] for h in header}
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"row {i} has {len(row)} fields, expected {len(header)}")
        for name, tok in zip(header, row):
            raw[name].append(tok)

    columns, codebooks, kinds = {}, {}, {}
    for name in data_cols:
        kind = schema[name]
        kinds[name] = kind
        if kind == CONTINUOUS:
            columns[name] = np.array(
                [_parse_float(tok, i, name) for i, tok in enumerate(raw[name], start=2)]
            )
        elif kind == CATEGORICAL:
            levels: dict[str, int] = {}
            codes = []
            for i, tok in enumerate(raw[name], start=2):
                if tok == "":
                    raise DataError(f"missing value at row {i}, column {name!r}")
                codes.append(levels.setdefault(tok, len(levels)))
            columns[name] = np.array(codes, dtype=np.int64)
            codebooks[name] = {code: level for level, code in levels.items()}
        else:
            raise DataError(f"column {name!r}: unknown kind {kind!r}")

    return Dataset(tuple(data_cols), columns, tuple(raw[id_column]), kinds, codebooks)


def format_number(value: float) -> str:
    """Shortest round-trip decimal rendering (at most 17 significant digits)."""
    value = float(value)
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def write_dataset(ds: Dataset, path: str | os.PathLike, id_column: str = "id") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([id_column, *ds.column_names])
        rendered = []
        for name in ds.column_names:
            col = ds[name]
            if ds.kinds[name] == CATEGORICAL:
                book = ds.codebooks[name]
                rendered.append([book[int(c)] for c in col])
            else:
                rendered.append([format_number(v) for v in col])
        for i, rid in enumerate(ds.row_ids):
            writer.writerow([rid, *(col[i] for col in rendered)])


def standardize(ds: Dataset, cols: Iterable[str]) -> Dataset:
    """Replace each named column by ``(x - mean) / sd`` (population sd).

    The composed mean and sd relative to the raw column are recorded in
    ``Dataset.scaling``, so standardizing twice keeps a valid inverse.
    """
    updates = {}
    scaling = dict(ds.scaling)
    for name in cols:
        if ds.kinds.get(name) != CONTINUOUS:
            if name not in ds:
                raise DataError(f"unknown column {name!r}")
            raise DataError(f"column {name!r} is not continuous")
        x = ds[name]
        mean = float(x.mean())
        sd = float(x.std())
        if not sd > 0 or sd <= 1e-14 * max(1.0, abs(mean)):
            raise DataError(f"column {name!r} has zero variance")
        updates[name] = (x - mean) / sd
        prev_mean, prev_sd = scaling.get(name, (0.0, 1.0))
        scaling[name] = (prev_mean + prev_sd * mean, prev_sd * sd)
    out = ds.with_columns(updates)
    return Dataset(out.column_names, out.columns, out.row_ids, out.kinds, out.codebooks, scaling)


def quantile_inclusive(x: np.ndarray, q: float) -> float:
    """Linear interpolation between order statistics at position ``q * (n - 1)``."""
    xs = np.sort(np.asarray(x, dtype=float))
    pos = q * (len(xs) - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(xs) - 1)
    return float(xs[lo] + (pos - lo) * (xs[hi] - xs[lo]))


def filter_outliers(ds: Dataset, cols: Sequence[str], fence: float = 1.5) -> tuple[Dataset, list[str]]:
    """Drop rows falling outside ``[Q1 - fence*IQR, Q3 + fence*IQR]`` in any column.

    With ``fence == 0`` the closed interval degenerates to the interquartile box
    itself; rows on the box edges are kept.
    """
    if fence < 0 or not np.isfinite(fence):
        raise DataError("fence must be a non-negative finite number")
    keep = np.ones(ds.n_rows, dtype=bool)
    for name in cols:
        x = ds[name].astype(float)
        q1, q3 = quantile_inclusive(x, 0.25), quantile_inclusive(x, 0.75)
        iqr = q3 - q1
        keep &= (x >= q1 - fence * iqr) & (x <= q3 + fence * iqr)
    if not keep.any():
        raise DataError("outlier filter removed every row")
    removed = [rid for rid, k in zip(ds.row_ids, keep) if not k]
    if not removed:
        return ds, []
    return ds.take(keep), removed


@dataclass(frozen=True)
class RoleConfig:
    treatments: tuple[str, ...]
    outcome: str
    confounders: tuple[str, ...]
    label: str | None = None
    id: str = "id"
    features: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "treatments", tuple(self.treatments))
        object.__setattr__(self, "confounders", tuple(self.confounders))
        if self.features is not None:
            object.__setattr__(self, "features", tuple(self.features))
        groups = [set(self.treatments), {self.outcome}, set(self.confounders)]
        for i in range(3):
            for j in range(i + 1, 3):
                common = groups[i] & groups[j]
                if common:
                    raise DataError(f"roles overlap on {sorted(common)}")

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "RoleConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read roles {path}: {exc}") from None
        try:
            return cls(
                treatments=doc["treatments"],
                outcome=doc["outcome"],
                confounders=doc.get("confounders", []),
                label=doc.get("label"),
                id=doc.get("id", "id"),
                features=doc.get("features"),
            )
        except KeyError as exc:
            raise DataError(f"roles file missing key {exc}") from None

    def to_dict(self) -> dict:
        doc = {
            "treatments": list(self.treatments),
            "outcome": self.outcome,
            "confounders": list(self.confounders),
            "label": self.label,
            "id": self.id,
        }
        if self.features is not None:
            doc["features"] = list(self.features)
        return doc

    def feature_columns(self) -> tuple[str, ...]:
        """Predictors for the risk and cluster models (outcome excluded by default)."""
        if self.features is not None:
            return self.features
        return self.treatments + self.confounders

    def validate(self, ds: Dataset) -> None:
        named = [*self.treatments, self.outcome, *self.confounders]
        if self.label is not None:
            named.append(self.label)
        if self.features is not None:
            named.extend(self.features)
        for name in named:
            if name not in ds:
                raise DataError(f"role names missing column {name!r}")
        if self.label is not None:
            lab = ds[self.label]
            if ds.kinds[self.label] == CATEGORICAL:
                book = ds.codebooks[self.label]
                values = {book[int(c)] for c in np.unique(lab)}
                if not values <= {"0", "1"}:
                    raise DataError(f"label column {self.label!r} must hold only 0/1")
            elif not np.isin(lab, (0.0, 1.0)).all():
                raise DataError(f"label column {self.label!r} must hold only 0/1")


def binary_labels(ds: Dataset, name: str) -> np.ndarray:
    col = ds[name]
    if ds.kinds[name] == CATEGORICAL:
        book = ds.codebooks[name]
        return np.array([int(book[int(c)]) for c in col], dtype=np.int64)
    return col.astype(np.int64)


def encode_columns(ds: Dataset, cols: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    """Numeric design block; categoricals become one-hot with the first level dropped."""
    blocks, names = [], []
    for name in cols:
        col = ds[name]
        if ds.kinds[name] == CATEGORICAL:
            book = ds.codebooks[name]
            for code in sorted(book)[1:]:
                blocks.append((col == code).astype(float))
                names.append(f"{name}={book[code]}")
        else:
            blocks.append(col.astype(float))
            names.append(name)
    if not blocks:
        return np.empty((ds.n_rows, 0)), names
    return np.column_stack(blocks), names


@dataclass(frozen=True)
class AnalysisView:
    """Model-ready arrays bound to roles.

    ``scaling`` holds the ``(mean, sd)`` that maps each standardized column back
    to raw units; columns left raw are stored as ``(0.0, 1.0)``.
    """

    X: np.ndarray
    feature_names: tuple[str, ...]
    y: np.ndarray
    t: np.ndarray
    confounders: np.ndarray
    confounder_names: tuple[str, ...]
    roles: RoleConfig
    row_ids: tuple[str, ...]
    labels: np.ndarray | None
    scaling: Mapping[str, tuple[float, float]]
    standardized: bool
    dataset: Dataset

    @property
    def n(self) -> int:
        return len(self.row_ids)

    def column(self, name: str) -> np.ndarray:
        return self.dataset[name].astype(float)

    def raw_column(self, name: str) -> np.ndarray:
        return self.dataset.unscaled(name).astype(float)


def build_view(ds: Dataset, roles: RoleConfig, standardize_cols: bool = False) -> AnalysisView:
    roles.validate(ds)
    work = ds
    if standardize_cols:
        to_scale = [
            c
            for c in dict.fromkeys([*roles.treatments, *roles.confounders, *roles.feature_columns()])
            if work.kinds[c] == CONTINUOUS and c not in work.scaling
        ]
        work = standardize(work, to_scale)
    for name in work.column_names:
        if work.kinds[name] == CONTINUOUS and not np.isfinite(work[name]).all():
            raise DataError(f"column {name!r} has missing or non-finite values")
    X, fnames = encode_columns(work, roles.feature_columns())
    C, cnames = encode_columns(work, roles.confounders)
    t, _ = encode_columns(work, roles.treatments)
    scaling = {c: work.scaling.get(c, (0.0, 1.0)) for c in work.column_names if work.kinds[c] == CONTINUOUS}
    labels = binary_labels(work, roles.label) if roles.label is not None else None
    return AnalysisView(
        X=X,
        feature_names=tuple(fnames),
        y=work[roles.outcome].astype(float),
        t=t,
        confounders=C,
        confounder_names=tuple(cnames),
        roles=roles,
        row_ids=work.row_ids,
        labels=labels,
        scaling=scaling,
        standardized=standardize_cols,
        dataset=work,
    )
