"""Evaluation records: ingestion, validation, outcome views and splitting.

Data is stored column-wise. Class labels are opaque strings; internally each
prediction column holds an index into ``label_set`` with ``-1`` for a missing
cell, so equality of codes is exactly equality of the original strings.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ScenarioError

MISSING = -1

_TRUE = {"1", "true"}
_FALSE = {"0", "false"}


class Scenario(str, Enum):
    S1 = "S1"  # model predictions available for every record
    S2 = "S2"  # model predictions only where the model was used


@dataclass(frozen=True)
class EvaluationRecord:
    reject_score: float
    deferred: bool
    model_pred: str | None
    human_pred: str | None
    label: str
    groups: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class OutcomeView:
    """Correctness of the active prediction (t) and of each predictor where known."""

    t: int
    t0: int | None
    t1: int | None


@dataclass(frozen=True)
class ColumnSchema:
    reject_score: str = "reject_score"
    deferred: str = "deferred"
    model_pred: str = "model_pred"
    human_pred: str = "human_pred"
    label: str = "label"
    groups: tuple[str, ...] = ()
    labels: tuple[str, ...] | None = None
    delimiter: str = ","


class EvaluationDataset:
    """Immutable, validated collection of evaluation records.

    Build one with :meth:`from_columns` or :func:`load_dataset`. Arrays exposed
    as attributes are read-only.
    """

    __slots__ = ("label_set", "scores", "deferred", "model_code", "human_code",
                 "label_code", "groups", "_index")

    def __init__(self, label_set, scores, deferred, model_code, human_code, label_code, groups):
        self.label_set: tuple[str, ...] = tuple(label_set)
        self._index = {lab: i for i, lab in enumerate(self.label_set)}
        self.scores = _frozen(np.asarray(scores, dtype=float))
        self.deferred = _frozen(np.asarray(deferred, dtype=bool))
        self.model_code = _frozen(np.asarray(model_code, dtype=np.int64))
        self.human_code = _frozen(np.asarray(human_code, dtype=np.int64))
        self.label_code = _frozen(np.asarray(label_code, dtype=np.int64))
        self.groups: dict[str, np.ndarray] = {
            name: _frozen(np.asarray(vals, dtype=object)) for name, vals in groups.items()
        }
        self._validate()

    # construction -------------------------------------------------------

    @classmethod
    def from_columns(
        cls,
        reject_score: Sequence[float],
        deferred: Sequence[bool],
        model_pred: Sequence[str | None],
        human_pred: Sequence[str | None],
        label: Sequence[str],
        groups: Mapping[str, Sequence[str]] | None = None,
        label_set: Sequence[str] | None = None,
    ) -> "EvaluationDataset":
        """Build a dataset from plain Python columns (``None`` marks a missing prediction)."""
        label = [str(v) for v in label]
        model_pred = [None if v is None else str(v) for v in model_pred]
        human_pred = [None if v is None else str(v) for v in human_pred]
        if label_set is None:
            seen = set(label) | {v for v in model_pred if v is not None} | {
                v for v in human_pred if v is not None}
            label_set = sorted(seen)
        index = {lab: i for i, lab in enumerate(label_set)}

        def encode(values, row_kind):
            out = np.empty(len(values), dtype=np.int64)
            for i, v in enumerate(values):
                if v is None:
                    out[i] = MISSING
                elif v in index:
                    out[i] = index[v]
                else:
                    raise DataError(f"unknown label value {v!r} in {row_kind}", row=i)
            return out

        return cls(
            label_set,
            reject_score,
            deferred,
            encode(model_pred, "model_pred"),
            encode(human_pred, "human_pred"),
            encode(label, "label"),
            {k: [str(x) for x in v] for k, v in (groups or {}).items()},
        )

    def _validate(self) -> None:
        n = self.scores.shape[0]
        if len(self.label_set) < 2:
            raise DataError(f"label set needs at least 2 classes, got {list(self.label_set)}")
        if len(set(self.label_set)) != len(self.label_set):
            raise DataError("label set contains duplicates")
        for name, arr in (("deferred", self.deferred), ("model_pred", self.model_code),
                          ("human_pred", self.human_code), ("label", self.label_code)):
            if arr.shape != (n,):
                raise DataError(f"column {name} has length {arr.shape[0]}, expected {n}")
        for name, arr in self.groups.items():
            if arr.shape != (n,):
                raise DataError(f"group column {name} has length {arr.shape[0]}, expected {n}")
        bad = ~np.isfinite(self.scores)
        if bad.any():
            raise DataError("reject score is not finite", row=int(np.argmax(bad)))
        if (self.label_code == MISSING).any():
            raise DataError("missing label", row=int(np.argmax(self.label_code == MISSING)))
        orphan = self.deferred & (self.human_code == MISSING)
        if orphan.any():
            raise DataError("deferred record lacks human_pred", row=int(np.argmax(orphan)))
        orphan = ~self.deferred & (self.model_code == MISSING)
        if orphan.any():
            raise DataError("non-deferred record lacks model_pred", row=int(np.argmax(orphan)))

    # views --------------------------------------------------------------

    def __len__(self) -> int:
        return int(self.scores.shape[0])

    @property
    def scenario1_capable(self) -> bool:
        return bool((self.model_code != MISSING).all())

    @property
    def n_deferred(self) -> int:
        return int(self.deferred.sum())

    @property
    def records(self) -> list[EvaluationRecord]:
        return [self.record(i) for i in range(len(self))]

    def record(self, i: int) -> EvaluationRecord:
        def dec(code):
            return None if code == MISSING else self.label_set[code]

        return EvaluationRecord(
            reject_score=float(self.scores[i]),
            deferred=bool(self.deferred[i]),
            model_pred=dec(self.model_code[i]),
            human_pred=dec(self.human_code[i]),
            label=self.label_set[self.label_code[i]],
            groups={k: v[i] for k, v in self.groups.items()},
        )

    def require(self, scenario: Scenario) -> None:
        if scenario is Scenario.S1 and not self.scenario1_capable:
            raise ScenarioError("Scenario 1 requires model predictions for every record")

    def subset(self, idx: np.ndarray | Sequence[int]) -> "EvaluationDataset":
        idx = np.asarray(idx)
        return EvaluationDataset(
            self.label_set, self.scores[idx], self.deferred[idx], self.model_code[idx],
            self.human_code[idx], self.label_code[idx],
            {k: v[idx] for k, v in self.groups.items()},
        )

    def replace(self, **columns) -> "EvaluationDataset":
        """Copy with some columns swapped out; arguments are raw arrays (codes for predictions)."""
        current = dict(
            scores=self.scores, deferred=self.deferred, model_code=self.model_code,
            human_code=self.human_code, label_code=self.label_code, groups=self.groups,
        )
        unknown = set(columns) - set(current)
        if unknown:
            raise TypeError(f"unknown columns: {sorted(unknown)}")
        current.update(columns)
        return EvaluationDataset(self.label_set, **current)

    def encode(self, labels: Iterable[str]) -> np.ndarray:
        try:
            return np.array([self._index[str(v)] for v in labels], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"unknown label value {exc.args[0]!r}") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EvaluationDataset):
            return NotImplemented
        return (
            self.label_set == other.label_set
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.deferred, other.deferred)
            and np.array_equal(self.model_code, other.model_code)
            and np.array_equal(self.human_code, other.human_code)
            and np.array_equal(self.label_code, other.label_code)
            and self.groups.keys() == other.groups.keys()
            and all(np.array_equal(v, other.groups[k]) for k, v in self.groups.items())
        )

    __hash__ = None

    def __repr__(self) -> str:
        return (f"EvaluationDataset(n={len(self)}, deferred={self.n_deferred}, "
                f"labels={list(self.label_set)}, scenario1_capable={self.scenario1_capable})")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


# outcomes -------------------------------------------------------------


def correctness(ds: EvaluationDataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised outcome view.

    Returns ``(t, t0, t1)`` as int arrays where ``t0``/``t1`` hold ``-1`` for
    records whose model/human prediction is missing.
    """
    t0 = np.where(ds.model_code == MISSING, -1, (ds.model_code == ds.label_code).astype(np.int64))
    t1 = np.where(ds.human_code == MISSING, -1, (ds.human_code == ds.label_code).astype(np.int64))
    t = np.where(ds.deferred, t1, t0)
    return t, t0, t1


def outcome_view(ds: EvaluationDataset) -> list[OutcomeView]:
    t, t0, t1 = correctness(ds)
    return [
        OutcomeView(int(a), None if b < 0 else int(b), None if c < 0 else int(c))
        for a, b, c in zip(t, t0, t1)
    ]


# ingestion --------------------------------------------------------------


def _parse_flag(raw: str, row: int) -> bool:
    val = raw.strip().lower()
    if val in _TRUE:
        return True
    if val in _FALSE:
        return False
    raise DataError(f"deferred flag {raw!r} is not one of 0/1/true/false", row=row)


def load_dataset(source: IO[str] | IO[bytes] | str, schema: ColumnSchema = ColumnSchema()) -> EvaluationDataset:
    """Read a delimited table with a header row into an :class:`EvaluationDataset`.

    ``source`` may be a text or binary stream (decoded as UTF-8) or a path.
    Empty cells mark missing predictions. Row numbers in errors are 0-based
    data rows (the header is not counted).
    """
    if isinstance(source, str):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_dataset(fh, schema)
    if isinstance(source.read(0), bytes):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")
    reader = csv.reader(source, delimiter=schema.delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("input has no header row") from None
    pos = {name: i for i, name in enumerate(header)}
    wanted = [schema.reject_score, schema.deferred, schema.model_pred, schema.human_pred,
              schema.label, *schema.groups]
    missing = [c for c in wanted if c not in pos]
    if missing:
        raise DataError(f"missing columns {missing} in header {header}")

    scores, flags, model, human, labels = [], [], [], [], []
    groups: dict[str, list[str]] = {g: [] for g in schema.groups}
    for row, cells in enumerate(reader):
        if not cells or (len(cells) == 1 and not cells[0].strip()):
            continue
        if len(cells) != len(header):
            raise DataError(f"expected {len(header)} cells, found {len(cells)}", row=row)
        raw_score = cells[pos[schema.reject_score]]
        try:
            score = float(raw_score)
        except ValueError:
            raise DataError(f"reject score {raw_score!r} is not a number", row=row) from None
        if not math.isfinite(score):
            raise DataError(f"reject score {raw_score!r} is not finite", row=row)
        flag = _parse_flag(cells[pos[schema.deferred]], row)
        m = cells[pos[schema.model_pred]] or None
        h = cells[pos[schema.human_pred]] or None
        y = cells[pos[schema.label]]
        if not y:
            raise DataError("missing label", row=row)
        if flag and h is None:
            raise DataError("deferred row lacks human_pred", row=row)
        if not flag and m is None:
            raise DataError("non-deferred row lacks model_pred", row=row)
        if schema.labels is not None:
            for kind, v in (("label", y), ("model_pred", m), ("human_pred", h)):
                if v is not None and v not in schema.labels:
                    raise DataError(f"unknown label value {v!r} in {kind}", row=row)
        scores.append(score)
        flags.append(flag)
        model.append(m)
        human.append(h)
        labels.append(y)
        for g in schema.groups:
            groups[g].append(cells[pos[g]])
    if not scores:
        raise DataError("input has no data rows")
    return EvaluationDataset.from_columns(
        scores, flags, model, human, labels, groups,
        label_set=schema.labels,
    )


def emit_dataset(ds: EvaluationDataset, sink: IO[str], schema: ColumnSchema = ColumnSchema()) -> None:
    """Write ``ds`` in the same tabular format :func:`load_dataset` reads.

    Scores are written with ``repr`` so they round-trip to the same float.
    """
    writer = csv.writer(sink, delimiter=schema.delimiter, lineterminator="\n")
    group_names = list(schema.groups) or list(ds.groups)
    writer.writerow([schema.reject_score, schema.deferred, schema.model_pred,
                     schema.human_pred, schema.label, *group_names])
    labels = ds.label_set
    for i in range(len(ds)):
        m, h = ds.model_code[i], ds.human_code[i]
        writer.writerow([
            repr(float(ds.scores[i])),
            "1" if ds.deferred[i] else "0",
            "" if m == MISSING else labels[m],
            "" if h == MISSING else labels[h],
            labels[ds.label_code[i]],
            *(ds.groups[g][i] for g in group_names),
        ])


# splitting --------------------------------------------------------------


def split_indices(n: int, fractions: Sequence[float], seed: int) -> tuple[np.ndarray, ...]:
    """Seeded disjoint index split; every part but the last gets ``floor(f * n)``.

    The last part receives the remainder. Indices within a part are sorted so
    record order is preserved.
    """
    if n < 1:
        raise DataError("cannot split an empty dataset")
    fr = [float(f) for f in fractions]
    if any(not f > 0.0 for f in fr):
        raise ValueError(f"split fractions must be positive, got {fr}")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {sum(fr)!r}")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [math.floor(f * n + 1e-9) for f in fr[:-1]]
    bounds = np.cumsum([0, *sizes])
    parts = [np.sort(perm[bounds[i]:bounds[i + 1]]) for i in range(len(sizes))]
    parts.append(np.sort(perm[bounds[-1]:]))
    return tuple(parts)


def split_dataset(
    ds: EvaluationDataset,
    fractions: Sequence[float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> tuple[EvaluationDataset, EvaluationDataset, EvaluationDataset]:
    if len(fractions) != 3:
        raise ValueError("expected (train, validation, test) fractions")
    parts = split_indices(len(ds), fractions, seed)
    for name, part in zip(("train", "validation", "test"), parts):
        if part.size == 0:
            warnings.warn(f"{name} split is empty (n={len(ds)})", stacklevel=2)
    train, val, test = (ds.subset(p) for p in parts)
    return train, val, test
