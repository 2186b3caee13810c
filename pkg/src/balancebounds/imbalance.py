"""Covariate-imbalance metrics between the two arms' empirical distributions.

Distribution-function metrics (Kolmogorov-Smirnov, first-order transport,
Levy-Prokhorov sandwich) require scalar locations; push multi-dimensional
controls through an estimated index first. Mass-based metrics (total
variation, density-ratio L2, mean differences of summaries) work on any
discrete support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .sample import EmpiricalCond, Location


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Summary:
    name: str
    fn: Callable[[Location], float]

    def __call__(self, loc: Location) -> float:
        try:
            v = float(self.fn(loc))
        except Exception as exc:
            raise DomainError(f"summary {self.name!r} failed at {loc!r}: {exc}") from None
        if not math.isfinite(v):
            raise DomainError(f"summary {self.name!r} is non-finite at {loc!r}")
        return v


@dataclass(frozen=True)
class SummarySet:
    summaries: tuple[Summary, ...]

    def __post_init__(self):
        if not self.summaries:
            raise ValidationError("summary set is empty")

    def names(self) -> list[str]:
        return [s.name for s in self.summaries]

    def evaluate(self, loc: Location) -> np.ndarray:
        return np.array([s(loc) for s in self.summaries], dtype=float)

    def __len__(self) -> int:
        return len(self.summaries)


def summary_constant() -> Summary:
    return Summary("const", lambda loc: 1.0)


def summary_value() -> Summary:
    """The scalar location itself (the index value, or x when p = 1)."""
    return Summary("value", lambda loc: float(loc))


def summary_coordinate(j: int) -> Summary:
    return Summary(f"x{j + 1}", lambda loc: float(loc[j]))


def summary_table(table: dict, name: str = "table") -> Summary:
    def fn(loc):
        if loc not in table:
            raise KeyError("location not tabulated")
        return table[loc]

    return Summary(name, fn)


def summary_clipped_negative_line(intercept: float, slope: float) -> Summary:
    """min(0, -(a + b t)): the negated model line clipped at zero, the compact
    summary suited to localized upward spikes of the truth over the model."""
    return Summary("neg_model_clip", lambda loc: min(0.0, -(intercept + slope * float(loc))))


def standard_summaries(scalar: bool, p: int | None = None) -> SummarySet:
    if scalar:
        return SummarySet((summary_constant(), summary_value()))
    if p is None:
        raise ValidationError("need p for coordinate summaries")
    return SummarySet((summary_constant(),) + tuple(summary_coordinate(j) for j in range(p)))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _merged_cdfs(g1: EmpiricalCond, g0: EmpiricalCond):
    l1, m1 = g1.sorted_scalar()
    l0, m0 = g0.sorted_scalar()
    grid = np.unique(np.concatenate([l1, l0]))
    c1 = np.zeros(len(grid))
    c0 = np.zeros(len(grid))
    np.add.at(c1, np.searchsorted(grid, l1), m1)
    np.add.at(c0, np.searchsorted(grid, l0), m0)
    return grid, np.cumsum(c1), np.cumsum(c0)


def ks_distance(g1: EmpiricalCond, g0: EmpiricalCond) -> float:
    """Largest gap between the two arms' distribution functions."""
    _, c1, c0 = _merged_cdfs(g1, g0)
    return float(np.max(np.abs(c1 - c0)))


def wasserstein1(g1: EmpiricalCond, g0: EmpiricalCond) -> float:
    """First-order transport distance: the area between the two distribution
    functions, which equals the optimal coupling cost on the line."""
    grid, c1, c0 = _merged_cdfs(g1, g0)
    if len(grid) == 1:
        return 0.0
    gaps = np.diff(grid)
    return float(np.sum(np.abs(c1[:-1] - c0[:-1]) * gaps))


def total_variation_l1(g1: EmpiricalCond, g0: EmpiricalCond) -> float:
    """Unnormalized L1 gap of the point masses over the union support
    (counting measure); ranges over [0, 2]."""
    m1 = g1.mass_map()
    m0 = g0.mass_map()
    support = set(m1) | set(m0)
    return float(sum(abs(m1.get(loc, 0.0) - m0.get(loc, 0.0)) for loc in support))


def density_ratio_l2(g1: EmpiricalCond, g0: EmpiricalCond) -> tuple[float, float]:
    """L2(arm-0) norm of the density ratio minus one, computed on the part of
    arm 1 absolutely continuous w.r.t. arm 0, plus the arm-1 mass sitting
    outside the arm-0 support (reported, never silently dropped)."""
    m1 = g1.mass_map()
    m0 = g0.mass_map()
    singular = sum(m for loc, m in m1.items() if loc not in m0)
    total = 0.0
    for loc, w0 in m0.items():
        ratio = m1.get(loc, 0.0) / w0
        total += w0 * (ratio - 1.0) ** 2
    return float(math.sqrt(total)), float(singular)


def mean_differences(g1: EmpiricalCond, g0: EmpiricalCond, rset: SummarySet) -> np.ndarray:
    """Componentwise absolute gaps in summary means between the arms."""
    e1 = np.zeros(len(rset))
    e0 = np.zeros(len(rset))
    for loc, m in g1.points:
        e1 += m * rset.evaluate(loc)
    for loc, m in g0.points:
        e0 += m * rset.evaluate(loc)
    return np.abs(e1 - e0)


def lp_sandwich(g1: EmpiricalCond, g0: EmpiricalCond) -> tuple[float, float]:
    """Interval [w1, 2*sqrt(w1)] enclosing twice the Levy-Prokhorov distance;
    informative when w1 <= 4 (the exact distance is not computed here)."""
    w1 = wasserstein1(g1, g0)
    return (w1, 2.0 * math.sqrt(w1))


@dataclass(frozen=True)
class ImbalanceVector:
    """All imbalance metrics for one pair of arm distributions; scalar-only
    metrics are None when the support is multi-dimensional."""

    ks: float | None
    w1: float | None
    lp: tuple[float, float] | None
    tv: float
    dr: float
    dr_singular: float
    md: tuple[float, ...] | None
    md_names: tuple[str, ...] | None

    def to_json_dict(self) -> dict:
        return {
            "ks": self.ks,
            "w1": self.w1,
            "lp": list(self.lp) if self.lp is not None else None,
            "tv": self.tv,
            "dr": self.dr,
            "dr_singular": self.dr_singular,
            "md": list(self.md) if self.md is not None else None,
            "md_names": list(self.md_names) if self.md_names is not None else None,
        }


def compute_imbalance(
    g1: EmpiricalCond, g0: EmpiricalCond, rset: SummarySet | None = None
) -> ImbalanceVector:
    scalar = g1.is_scalar and g0.is_scalar
    dr, singular = density_ratio_l2(g1, g0)
    md = mean_differences(g1, g0, rset) if rset is not None else None
    return ImbalanceVector(
        ks=ks_distance(g1, g0) if scalar else None,
        w1=wasserstein1(g1, g0) if scalar else None,
        lp=lp_sandwich(g1, g0) if scalar else None,
        tv=total_variation_l1(g1, g0),
        dr=dr,
        dr_singular=singular,
        md=tuple(float(v) for v in md) if md is not None else None,
        md_names=tuple(rset.names()) if rset is not None else None,
    )
