"""Data model: unit records, samples, subsample handles, and empirical
conditional distributions of the controls within each treatment arm.

Covariate vectors are stored as tuples of floats so that duplicate locations
can be merged by exact (bitwise) equality. Near-duplicates are never merged.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError

Location = float | tuple[float, ...]


@dataclass(frozen=True)
class Unit:
    """One observation: outcome (optional), controls, treatment indicator."""

    id: str
    y: float | None
    x: tuple[float, ...]
    d: int

    def __post_init__(self) -> None:
        if self.d not in (0, 1):
            raise ValidationError(f"unit {self.id!r}: d must be 0 or 1, got {self.d!r}")
        if self.y is not None and not np.isfinite(self.y):
            raise ValidationError(f"unit {self.id!r}: non-finite outcome")
        if not all(np.isfinite(v) for v in self.x):
            raise ValidationError(f"unit {self.id!r}: non-finite control value")


@dataclass(frozen=True)
class Sample:
    """An ordered, immutable collection of units with a fixed control dimension.

    ``design_only=True`` marks a sample ingested without outcomes; inference
    operations refuse such samples.
    """

    units: tuple[Unit, ...]
    p: int
    design_only: bool = False

    def __post_init__(self) -> None:
        if len(self.units) < 2:
            raise ValidationError("a sample needs at least two units")
        seen: set[str] = set()
        for u in self.units:
            if len(u.x) != self.p:
                raise ValidationError(
                    f"unit {u.id!r}: control vector has length {len(u.x)}, expected {self.p}"
                )
            if u.id in seen:
                raise ValidationError(f"duplicate unit id {u.id!r}")
            seen.add(u.id)
            if u.y is None and not self.design_only:
                raise ValidationError(
                    f"unit {u.id!r}: missing outcome in a sample not flagged design-only"
                )

    @property
    def n(self) -> int:
        return len(self.units)

    def arm(self, d: int) -> tuple[Unit, ...]:
        return tuple(u for u in self.units if u.d == d)

    def unit_by_id(self, uid: str) -> Unit:
        for u in self.units:
            if u.id == uid:
                return u
        raise ValidationError(f"unknown unit id {uid!r}")

    def design_view(self) -> "DesignView":
        return DesignView(
            ids=tuple(u.id for u in self.units),
            x=tuple(u.x for u in self.units),
            d=tuple(u.d for u in self.units),
            parent=self,
        )

    def y_array(self) -> np.ndarray:
        if self.design_only:
            raise ValidationError("design-only sample has no outcomes")
        return np.array([u.y for u in self.units], dtype=float)

    def x_matrix(self) -> np.ndarray:
        return np.array([u.x for u in self.units], dtype=float)

    def d_array(self) -> np.ndarray:
        return np.array([u.d for u in self.units], dtype=int)


@dataclass(frozen=True)
class DesignView:
    """Outcome-redacted view of a sample.

    Subsample construction (the design phase) must depend on controls and
    treatment status only; passing this view instead of the sample makes that
    restriction structural rather than conventional.
    """

    ids: tuple[str, ...]
    x: tuple[tuple[float, ...], ...]
    d: tuple[int, ...]
    parent: Sample = field(repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return self.parent.p

    def x_matrix(self) -> np.ndarray:
        return np.array(self.x, dtype=float)

    def d_array(self) -> np.ndarray:
        return np.array(self.d, dtype=int)

    def make_handle(self, member_ids: Sequence[str], provenance: Mapping) -> "SubsampleHandle":
        return SubsampleHandle(
            parent=self.parent, member_ids=tuple(member_ids), provenance=dict(provenance)
        )


@dataclass(frozen=True)
class SubsampleHandle:
    """A provenance-tracked subset of a parent sample."""

    parent: Sample
    member_ids: tuple[str, ...]
    provenance: dict = field(compare=False)

    def __post_init__(self) -> None:
        parent_ids = {u.id for u in self.parent.units}
        seen: set[str] = set()
        for uid in self.member_ids:
            if uid not in parent_ids:
                raise ValidationError(f"subsample member {uid!r} not in parent sample")
            if uid in seen:
                raise ValidationError(f"duplicate subsample member {uid!r}")
            seen.add(uid)
        if not self.member_ids:
            raise ValidationError("empty subsample")

    @property
    def n(self) -> int:
        return len(self.member_ids)

    @property
    def units(self) -> tuple[Unit, ...]:
        wanted = set(self.member_ids)
        return tuple(u for u in self.parent.units if u.id in wanted)

    def arm(self, d: int) -> tuple[Unit, ...]:
        return tuple(u for u in self.units if u.d == d)

    def as_sample(self) -> Sample:
        return Sample(self.units, self.parent.p, design_only=self.parent.design_only)


@dataclass(frozen=True)
class EmpiricalCond:
    """Weighted point masses for the controls within one treatment arm.

    Locations are scalars (after an index pushforward or when p = 1) or
    tuples of floats; duplicates are merged exactly and masses sum to one.
    """

    arm: int
    points: tuple[tuple[Location, float], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValidationError("empirical distribution needs at least one point")
        total = sum(m for _, m in self.points)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"masses sum to {total!r}, expected 1")
        if any(m < 0 for _, m in self.points):
            raise ValidationError("negative mass")
        locs = [loc for loc, _ in self.points]
        if len(set(locs)) != len(locs):
            raise ValidationError("duplicate locations must be merged")

    @property
    def is_scalar(self) -> bool:
        return all(not isinstance(loc, tuple) for loc, _ in self.points)

    def sorted_scalar(self) -> tuple[np.ndarray, np.ndarray]:
        """Locations (ascending) and masses; scalar support only."""
        if not self.is_scalar:
            raise ValidationError(
                "operation needs scalar locations; push the sample through an index first"
            )
        order = sorted(range(len(self.points)), key=lambda i: self.points[i][0])
        locs = np.array([self.points[i][0] for i in order], dtype=float)
        mass = np.array([self.points[i][1] for i in order], dtype=float)
        return locs, mass

    def mass_map(self) -> dict[Location, float]:
        return {loc: m for loc, m in self.points}

    @staticmethod
    def from_pairs(arm: int, pairs: Iterable[tuple[Location, float]]) -> "EmpiricalCond":
        merged: dict[Location, float] = {}
        for loc, m in pairs:
            merged[loc] = merged.get(loc, 0.0) + m
        return EmpiricalCond(arm=arm, points=tuple(merged.items()))


def units_of(s: Sample | SubsampleHandle) -> tuple[Unit, ...]:
    return s.units


def empirical_cond(s: Sample | SubsampleHandle, arm: int, index=None) -> EmpiricalCond:
    """Empirical conditional distribution of the controls given the arm.

    Each unit carries mass 1/n_arm; exactly coinciding locations are merged by
    summing mass. With ``index`` (any covariate map exposing ``index_value``),
    locations are the scalar pushforward values.
    """
    if arm not in (0, 1):
        raise ValidationError(f"arm must be 0 or 1, got {arm!r}")
    arm_units = [u for u in units_of(s) if u.d == arm]
    if not arm_units:
        raise ValidationError(f"arm {arm} is empty")
    w = 1.0 / len(arm_units)
    if index is None:
        pairs = [(u.x[0] if len(u.x) == 1 else u.x, w) for u in arm_units]
    else:
        pairs = [(float(index.index_value(u.x)), w) for u in arm_units]
    return EmpiricalCond.from_pairs(arm, pairs)


def empirical_joint(s: Sample | SubsampleHandle, index=None) -> tuple[tuple, ...]:
    """Joint empirical distribution of (controls, arm) as merged atoms.

    Returns ``((x, d, prob), ...)`` with x a tuple (1-tuple under an index map).
    """
    us = units_of(s)
    w = 1.0 / len(us)
    merged: dict[tuple, float] = {}
    for u in us:
        x = (float(index.index_value(u.x)),) if index is not None else u.x
        key = (x, u.d)
        merged[key] = merged.get(key, 0.0) + w
    return tuple((x, d, m) for (x, d), m in merged.items())


@dataclass(frozen=True)
class CsvSchema:
    """Column resolution for CSV ingestion; empty y cells are allowed only
    when ``design_only`` is set."""

    id_col: str = "id"
    y_col: str = "y"
    d_col: str = "d"
    x_cols: tuple[str, ...] | None = None  # None: autodetect x1..xp
    design_only: bool = False


def load_csv(path, schema: CsvSchema | None = None) -> Sample:
    """Read a sample from a header-bearing CSV with columns id,y,d,x1..xp."""
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError("no units: file is empty") from None
        header = [h.strip() for h in header]
        for col in (schema.id_col, schema.d_col):
            if col not in header:
                raise ValidationError(f"missing column {col!r}")
        if schema.y_col not in header and not schema.design_only:
            raise ValidationError(f"missing column {schema.y_col!r}")
        if schema.x_cols is None:
            x_cols = []
            k = 1
            while f"x{k}" in header:
                x_cols.append(f"x{k}")
                k += 1
            if not x_cols:
                raise ValidationError("missing columns 'x1..xp'")
        else:
            x_cols = list(schema.x_cols)
            for col in x_cols:
                if col not in header:
                    raise ValidationError(f"missing column {col!r}")
        idx = {c: header.index(c) for c in header}
        units = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                uid = row[idx[schema.id_col]].strip()
                d_raw = row[idx[schema.d_col]].strip()
                y_raw = row[idx[schema.y_col]].strip() if schema.y_col in idx else ""
                x = tuple(float(row[idx[c]]) for c in x_cols)
            except (IndexError, ValueError) as exc:
                raise ValidationError(f"row {lineno}: malformed row ({exc})") from None
            if d_raw not in ("0", "1"):
                raise ValidationError(f"row {lineno}: d must be 0 or 1, got {d_raw!r}")
            y: float | None
            if y_raw == "":
                if not schema.design_only:
                    raise ValidationError(f"row {lineno}: missing y in a non design-only load")
                y = None
            else:
                try:
                    y = float(y_raw)
                except ValueError:
                    raise ValidationError(f"row {lineno}: malformed y {y_raw!r}") from None
            units.append(Unit(id=uid, y=y, x=x, d=int(d_raw)))
    if not units:
        raise ValidationError("no units")
    return Sample(tuple(units), p=len(x_cols), design_only=schema.design_only)
