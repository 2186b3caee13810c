"""Perturbation functions (the gap between a candidate truth and the fitted
regression line at d = 0) and their misspecification magnitudes.

A perturbation is a piecewise-linear tabulation on strictly increasing knots
with constant extrapolation outside the knot range, so every magnitude below
has a closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .sample import EmpiricalCond


@dataclass(frozen=True)
class Perturbation:
    """Tabulated scalar function: sorted (t, h) knots, linear in between,
    constant beyond the first and last knot."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.knots:
            raise ValidationError("perturbation needs at least one knot")
        ts = [t for t, _ in self.knots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError("knot positions must be strictly increasing")
        if not all(math.isfinite(t) and math.isfinite(h) for t, h in self.knots):
            raise ValidationError("knots must be finite")

    @property
    def t(self) -> np.ndarray:
        return np.array([t for t, _ in self.knots], dtype=float)

    @property
    def h(self) -> np.ndarray:
        return np.array([h for _, h in self.knots], dtype=float)

    def __call__(self, t):
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.interp(arr, self.t, self.h)  # np.interp clamps outside the range
        return float(out[0]) if np.isscalar(t) or np.asarray(t).ndim == 0 else out

    def scaled(self, a: float) -> "Perturbation":
        return Perturbation(tuple((t, a * h) for t, h in self.knots))

    def to_json_dict(self) -> dict:
        return {"knots": [{"t": t, "h": h} for t, h in self.knots]}

    @staticmethod
    def from_json_dict(obj: dict) -> "Perturbation":
        knots = obj.get("knots")
        if not knots:
            raise ValidationError("knots required")
        try:
            pairs = tuple((float(k["t"]), float(k["h"])) for k in knots)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed knots: {exc}") from None
        return Perturbation(tuple(sorted(pairs)))

    @staticmethod
    def tabulate(fn, points) -> "Perturbation":
        ts = sorted(set(float(t) for t in points))
        return Perturbation(tuple((t, float(fn(t))) for t in ts))


def m_total_variation(h: Perturbation) -> float:
    """Total variation of the minimal continuous extension: the sum of knot
    increments (the monotone-between-knots extension attains it and no
    extension can do better)."""
    vals = h.h
    if len(vals) < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(vals))))


def m_lipschitz(h: Perturbation) -> float:
    """Largest slope magnitude between consecutive knots; for a piecewise
    linear function this is the Lipschitz seminorm. A single knot means a
    constant function, so zero."""
    if len(h.knots) < 2:
        return 0.0
    dt = np.diff(h.t)
    dh = np.diff(h.h)
    return float(np.max(np.abs(dh / dt)))


def m_sup(h: Perturbation, support=None) -> float:
    """Supremum of |h| over the knots, or over supplied support points."""
    if support is None:
        return float(np.max(np.abs(h.h)))
    pts = np.asarray(list(support), dtype=float)
    if pts.size == 0:
        raise ValidationError("empty support")
    return float(np.max(np.abs(h(pts))))


def m_l2_g0(h: Perturbation, g0: EmpiricalCond) -> float:
    """Root mean square of h under the arm-0 distribution."""
    locs, mass = g0.sorted_scalar()
    vals = h(locs)
    return float(math.sqrt(np.sum(mass * vals**2)))


def dr_singular_term(h: Perturbation, g1: EmpiricalCond, g0: EmpiricalCond) -> float:
    """|mean of h over the arm-1 mass living outside the arm-0 support| --
    the additive correction that accompanies the density-ratio bound."""
    supp0 = set(loc for loc, _ in g0.points)
    total = 0.0
    for loc, m in g1.points:
        if loc not in supp0:
            total += m * h(float(loc))
    return abs(float(total))


@dataclass(frozen=True)
class MisspecVector:
    """All misspecification magnitudes of one perturbation, plus the additive
    correction terms that pair with the density-ratio and mean-difference
    imbalance metrics."""

    m_ks: float
    m_lip: float
    m_sup: float
    m_l2_g0: float | None
    m_md: tuple[float, ...] | None
    md_slack: float | None
    dr_singular: float | None

    def to_json_dict(self) -> dict:
        return {
            "ks": self.m_ks,
            "mkw": self.m_lip,
            "tv": self.m_sup,
            "dr": self.m_l2_g0,
            "md": list(self.m_md) if self.m_md is not None else None,
            "md_slack": self.md_slack,
            "dr_singular_term": self.dr_singular,
            "lp": self.m_lip + self.m_sup,
        }


def compute_misspec(
    h: Perturbation,
    g1: EmpiricalCond | None = None,
    g0: EmpiricalCond | None = None,
    rset=None,
    L: float = math.inf,
    support=None,
) -> MisspecVector:
    """Evaluate every magnitude of ``h`` available from the given pieces.

    The L2 norm and the density-ratio correction need the arm distributions;
    the mean-difference magnitude additionally needs summaries (it runs the
    separation program for both orientations).
    """
    from .separation import m_md, solve_separation

    m_l2 = m_l2_g0(h, g0) if g0 is not None and g0.is_scalar else None
    singular = (
        dr_singular_term(h, g1, g0) if (g1 is not None and g0 is not None) else None
    )
    md = slack = None
    if rset is not None and g1 is not None and g0 is not None:
        sol_plus = solve_separation(h, rset, g1, g0, sigma=+1, L=L)
        sol_minus = solve_separation(h, rset, g1, g0, sigma=-1, L=L)
        md_vec, slack = m_md(sol_plus, sol_minus, g1, g0)
        md = tuple(float(v) for v in md_vec)
    return MisspecVector(
        m_ks=m_total_variation(h),
        m_lip=m_lipschitz(h),
        m_sup=m_sup(h, support=support),
        m_l2_g0=m_l2,
        m_md=md,
        md_slack=slack,
        dr_singular=singular,
    )
