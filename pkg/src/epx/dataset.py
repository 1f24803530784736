"""Two-class datasets with named binary/continuous variables.

Loading, validation, CSV round-tripping, name-based initial grouping and a
planted-signal generator used for desk-scale experiments.
"""
from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ._seeding import rng_for

log = logging.getLogger(__name__)

BINARY = "binary"
CONTINUOUS = "continuous"
KINDS = (BINARY, CONTINUOUS)

PROVENANCES = ("singletons", "names", "clusters", "explicit")


class DatasetError(ValueError):
    """Invalid or unreadable dataset."""


@dataclass(frozen=True)
class VariableMeta:
    name: str
    kind: str
    original_index: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labels (1 = rare class) plus an ``n_obs x D`` feature matrix.

    Arrays are made read-only on construction so a dataset can be shared
    freely between threads.
    """

    labels: np.ndarray
    features: np.ndarray
    columns: tuple[VariableMeta, ...]
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        features = np.asarray(self.features, dtype=np.float64)
        if labels.ndim != 1:
            raise DatasetError("labels must be one-dimensional")
        if features.ndim != 2 or features.shape[0] != labels.shape[0]:
            raise DatasetError(
                f"features shape {features.shape} does not match {labels.shape[0]} labels"
            )
        if features.shape[1] != len(self.columns):
            raise DatasetError(f"{features.shape[1]} feature columns but {len(self.columns)} names")
        if not np.isin(labels, (0, 1)).all():
            raise DatasetError("labels must be 0/1")
        labels = labels.astype(np.int8)
        if labels.sum() == 0 or labels.sum() == labels.size:
            raise DatasetError("labels need at least one 0 and at least one 1")
        if not np.isfinite(features).all():
            raise DatasetError("features contain NaN or infinite values")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise DatasetError(f"duplicate variable names: {dup}")
        for j, col in enumerate(self.columns):
            if col.kind not in KINDS:
                raise DatasetError(f"column {col.name!r}: unknown kind {col.kind!r}")
            x = features[:, j]
            if col.kind == BINARY and not np.isin(x, (0.0, 1.0)).all():
                raise DatasetError(f"column {col.name!r} is tagged binary but holds other values")
            if x.size and (x == x[0]).all():
                raise DatasetError(f"column {col.name!r} is constant")
        if self.ids is not None and len(self.ids) != labels.size:
            raise DatasetError("ids length does not match labels")
        labels.setflags(write=False)
        features = np.ascontiguousarray(features)
        features.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    @property
    def n_obs(self) -> int:
        return int(self.labels.size)

    @property
    def n_active(self) -> int:
        return int(self.labels.sum())

    @property
    def n_vars(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index_of(self, name: str) -> int:
        for j, c in enumerate(self.columns):
            if c.name == name:
                return j
        raise KeyError(name)

    def kinds(self) -> list[str]:
        return [c.kind for c in self.columns]

    def same_as(self, other: "Dataset") -> bool:
        return (
            np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
            and self.columns == other.columns
            and self.ids == other.ids
        )

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(labels, self.features, self.columns, self.ids)

    def subset_rows(self, rows: np.ndarray) -> "Dataset":
        """Rows ``rows`` as a new dataset. Columns constant in the subset are kept."""
        rows = np.asarray(rows)
        return _unchecked(
            self.labels[rows],
            self.features[rows],
            self.columns,
            None if self.ids is None else tuple(self.ids[i] for i in rows),
        )


def _unchecked(labels, features, columns, ids=None) -> Dataset:
    # Training folds may carry columns that happen to be constant within the fold.
    ds = object.__new__(Dataset)
    labels = np.ascontiguousarray(labels, dtype=np.int8)
    features = np.ascontiguousarray(features, dtype=np.float64)
    if labels.sum() == 0 or labels.sum() == labels.size:
        raise DatasetError("labels need at least one 0 and at least one 1")
    labels.setflags(write=False)
    features.setflags(write=False)
    object.__setattr__(ds, "labels", labels)
    object.__setattr__(ds, "features", features)
    object.__setattr__(ds, "columns", tuple(columns))
    object.__setattr__(ds, "ids", ids)
    return ds


@dataclass(frozen=True)
class GroupingPlan:
    """Ordered partition of variable indices into ``d`` initial groups."""

    groups: tuple[tuple[int, ...], ...]
    provenance: str

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        if not groups:
            raise DatasetError("a grouping plan needs at least one group")
        seen: set[int] = set()
        for g in groups:
            if not g:
                raise DatasetError("empty group in grouping plan")
            if seen.intersection(g):
                raise DatasetError(f"groups overlap on {sorted(seen.intersection(g))}")
            seen.update(g)
        if self.provenance not in PROVENANCES:
            raise DatasetError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "groups", groups)

    @property
    def d(self) -> int:
        return len(self.groups)

    def validate_for(self, dataset: Dataset) -> None:
        for g in self.groups:
            bad = [i for i in g if not 0 <= i < dataset.n_vars]
            if bad:
                raise DatasetError(f"grouping plan references invalid columns {bad}")


# ---------------------------------------------------------------------------
# CSV input / output


def read_schema(path: str | Path) -> dict[str, str]:
    """Parse ``name = kind`` lines; ``#`` starts a comment."""
    kinds: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DatasetError(f"{path}:{lineno}: expected 'name = kind'")
        name, kind = (s.strip() for s in line.split("=", 1))
        if kind not in KINDS:
            raise DatasetError(f"{path}:{lineno}: kind must be one of {KINDS}, got {kind!r}")
        kinds[name] = kind
    return kinds


def load_csv(
    path: str | Path,
    label_column: str,
    schema: Mapping[str, str] | None = None,
    id_column: str | None = None,
) -> Dataset:
    """Read a dataset from a header-first CSV file.

    Columns without a hint in ``schema`` are binary when they hold only 0/1
    values, continuous otherwise. Constant columns are dropped (and logged).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DatasetError(f"{path}: no label column {label_column!r}")
        if id_column is not None and id_column not in header:
            raise DatasetError(f"{path}: no id column {id_column!r}")
        label_at = header.index(label_column)
        id_at = header.index(id_column) if id_column is not None else None
        feature_at = [j for j in range(len(header)) if j not in (label_at, id_at)]
        if any(not header[j] for j in feature_at):
            raise DatasetError(f"{path}: empty column name in header")
        labels: list[int] = []
        rows: list[list[float]] = []
        ids: list[str] = []
        for rowno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}: row {rowno} has {len(row)} fields, expected {len(header)}")
            lab = row[label_at].strip()
            try:
                lab_value = float(lab)
            except ValueError:
                raise DatasetError(f"{path}: row {rowno}: label {lab!r} is not numeric") from None
            if lab_value not in (0.0, 1.0):
                raise DatasetError(
                    f"{path}: row {rowno}: label column {label_column!r} holds {lab!r}, expected 0 or 1"
                )
            labels.append(int(lab_value))
            values = []
            for j in feature_at:
                try:
                    values.append(float(row[j]))
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {rowno}, column {header[j]!r}: {row[j]!r} is not numeric"
                    ) from None
            rows.append(values)
            if id_at is not None:
                ids.append(row[id_at].strip())
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    features = np.array(rows, dtype=np.float64)
    names = [header[j] for j in feature_at]
    return _build(features, np.array(labels), names, schema or {}, ids if id_at is not None else None, str(path))


def _build(features, labels, names, schema, ids, source) -> Dataset:
    unknown = set(schema) - set(names)
    if unknown:
        raise DatasetError(f"{source}: schema names unknown columns {sorted(unknown)}")
    keep = []
    dropped = []
    for j, name in enumerate(names):
        x = features[:, j]
        if (x == x[0]).all():
            dropped.append(name)
        else:
            keep.append(j)
    if dropped:
        log.info("dropped %d constant column(s): %s", len(dropped), ", ".join(dropped))
    if not keep:
        raise DatasetError(f"{source}: every feature column is constant")
    columns = []
    for j in keep:
        x = features[:, j]
        kind = schema.get(names[j])
        if kind is None:
            kind = BINARY if np.isin(x, (0.0, 1.0)).all() else CONTINUOUS
        columns.append(VariableMeta(names[j], kind, j))
    return Dataset(labels, features[:, keep], tuple(columns), None if ids is None else tuple(ids))


def from_arrays(
    features: np.ndarray,
    labels: Sequence[int],
    names: Sequence[str] | None = None,
    kinds: Mapping[str, str] | None = None,
) -> Dataset:
    """Build a dataset from in-memory arrays, applying the load-time rules."""
    features = np.asarray(features, dtype=np.float64)
    if names is None:
        names = [f"x{j + 1}" for j in range(features.shape[1])]
    return _build(features, np.asarray(labels), list(names), kinds or {}, None, "<arrays>")


def _fmt(value: float, kind: str) -> str:
    if kind == BINARY:
        return str(int(value))
    return repr(float(value))


def save_csv(dataset: Dataset, path: str | Path, label_column: str = "y", id_column: str | None = None) -> None:
    """Write ``dataset`` so that :func:`load_csv` reads back the same values.

    Floats are written with ``repr`` which round-trips exactly.
    """
    header = ([id_column] if id_column and dataset.ids is not None else []) + [label_column] + dataset.names
    kinds = dataset.kinds()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n_obs):
            row = [dataset.ids[i]] if len(header) > dataset.n_vars + 1 else []
            row.append(str(int(dataset.labels[i])))
            row.extend(_fmt(v, k) for v, k in zip(dataset.features[i], kinds))
            writer.writerow(row)


def write_schema(dataset: Dataset, path: str | Path) -> None:
    lines = [f"{c.name} = {c.kind}" for c in dataset.columns]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Initial grouping from names

_DIGITS = re.compile(r"\d+")


def digit_placeholder_key(name: str) -> str:
    """Group key: every maximal digit run becomes ``#``.

    >>> digit_placeholder_key("AR_07_AR")
    'AR_#_AR'
    """
    return _DIGITS.sub("#", name)


def group_by_names(dataset: Dataset, rule: Callable[[str], str] = digit_placeholder_key) -> GroupingPlan:
    """Variables whose names share a key under ``rule`` form one group.

    Groups are ordered by the first column carrying each key.
    """
    if any(not n for n in dataset.names):
        raise DatasetError("variable names must be non-empty")
    by_key: dict[str, list[int]] = {}
    for j, name in enumerate(dataset.names):
        by_key.setdefault(rule(name), []).append(j)
    return GroupingPlan(tuple(tuple(g) for g in by_key.values()), "names")


def singleton_groups(dataset: Dataset) -> GroupingPlan:
    return GroupingPlan(tuple((j,) for j in range(dataset.n_vars)), "singletons")


def default_plan(dataset: Dataset) -> GroupingPlan:
    """Singletons for all-continuous data, name-based groups otherwise."""
    if all(k == CONTINUOUS for k in dataset.kinds()):
        return singleton_groups(dataset)
    return group_by_names(dataset)


def write_plan(plan: GroupingPlan, dataset: Dataset, path: str | Path) -> None:
    """One line per group, comma-separated variable names."""
    names = dataset.names
    text = "".join(",".join(names[i] for i in g) + "\n" for g in plan.groups)
    Path(path).write_text(text, encoding="utf-8")


def read_plan(path: str | Path, dataset: Dataset, provenance: str = "explicit") -> GroupingPlan:
    groups = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            groups.append(tuple(dataset.index_of(n.strip()) for n in line.split(",") if n.strip()))
        except KeyError as exc:
            raise DatasetError(f"{path}:{lineno}: unknown variable {exc.args[0]!r}") from None
    plan = GroupingPlan(tuple(groups), provenance)
    plan.validate_for(dataset)
    return plan


# ---------------------------------------------------------------------------
# Planted-signal generator


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a dataset with independent activity mechanisms.

    Each active observation is driven by one of ``n_blocks`` mechanisms; its
    mechanism's block of variables is shifted by ``effect`` on the log-odds
    scale (binary) or by ``effect`` standard deviations (continuous).
    Variables outside the active's block, and all variables of inactives,
    follow the base distribution.
    """

    n_obs: int = 500
    active_fraction: float = 0.05
    n_blocks: int = 2
    block_size: int = 5
    n_noise: int = 40
    effect: float = 2.0
    kind: str = BINARY
    base_rate: float = 0.15
    noise_group_size: int | None = None

    @property
    def n_active(self) -> int:
        return int(round(self.n_obs * self.active_fraction))


@dataclass(frozen=True)
class SynthTruth:
    blocks: tuple[tuple[int, ...], ...]
    noise: tuple[int, ...]
    mechanism: np.ndarray = field(repr=False)  # 0 for inactives, b + 1 for block b


def _letters(i: int) -> str:
    out = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        out = chr(ord("A") + r) + out
    return out


def synth_generate(spec: SynthSpec, seed: int) -> tuple[Dataset, SynthTruth]:
    if spec.kind not in KINDS:
        raise DatasetError(f"unknown kind {spec.kind!r}")
    m = spec.n_active
    if m < 1:
        raise DatasetError(f"{spec.n_obs} obs at fraction {spec.active_fraction} rounds to 0 actives")
    if m >= spec.n_obs:
        raise DatasetError("spec leaves no inactive observations")
    if spec.n_blocks < 0 or spec.block_size < 1 or spec.n_noise < 0:
        raise DatasetError("block counts must be nonnegative and block_size >= 1")
    n_vars = spec.n_blocks * spec.block_size + spec.n_noise
    if n_vars < 1:
        raise DatasetError("spec has no variables")
    if spec.kind == BINARY and not 0.0 < spec.base_rate < 1.0:
        raise DatasetError("base_rate must lie in (0, 1)")

    rng = rng_for(seed, 0)
    n = spec.n_obs
    labels = np.zeros(n, dtype=np.int8)
    labels[rng.permutation(n)[:m]] = 1
    mechanism = np.zeros(n, dtype=np.int64)
    if spec.n_blocks:
        mech = rng.permutation(np.arange(m) % spec.n_blocks) + 1
        mechanism[np.flatnonzero(labels)] = mech

    names: list[str] = []
    blocks = []
    for b in range(spec.n_blocks):
        tag = "M" + _letters(b)
        start = len(names)
        names.extend(f"{tag}_{j + 1:02d}_{tag}" for j in range(spec.block_size))
        blocks.append(tuple(range(start, len(names))))
    noise_size = spec.noise_group_size or spec.block_size
    noise_start = len(names)
    for j in range(spec.n_noise):
        tag = "N" + _letters(j // noise_size)
        names.append(f"{tag}_{j % noise_size + 1:02d}_{tag}")

    if spec.kind == BINARY:
        p0 = spec.base_rate
        p1 = 1.0 / (1.0 + math.exp(-(math.log(p0 / (1 - p0)) + spec.effect)))
    features = np.empty((n, n_vars))
    col_rng = rng_for(seed, 1)
    for j in range(n_vars):
        block = next((b for b, cols in enumerate(blocks) if j in cols), None)
        shifted = mechanism == (block + 1) if block is not None else np.zeros(n, dtype=bool)
        while True:
            if spec.kind == BINARY:
                p = np.where(shifted, p1, p0)
                x = (col_rng.random(n) < p).astype(np.float64)
            else:
                x = col_rng.standard_normal(n) + np.where(shifted, spec.effect, 0.0)
            if not (x == x[0]).all():
                break
        features[:, j] = x
    columns = tuple(VariableMeta(nm, spec.kind, j) for j, nm in enumerate(names))
    ds = Dataset(labels, features, columns)
    mechanism.setflags(write=False)
    truth = SynthTruth(tuple(blocks), tuple(range(noise_start, n_vars)), mechanism)
    return ds, truth


def permuted_labels(dataset: Dataset, seed: int) -> Dataset:
    """Copy of ``dataset`` with labels randomly permuted relative to features."""
    return dataset.with_labels(rng_for(seed, 0).permutation(np.asarray(dataset.labels)))

