"""Design phase: subsample construction from outcome-redacted views
(nearest-neighbor matching and score trimming) and pre/post balance tables.

All construction is deterministic: candidate pairs are processed in
(distance, treated id, control id) lexicographic order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .imbalance import ImbalanceVector, SummarySet, compute_imbalance
from .sample import DesignView, Sample, SubsampleHandle, empirical_cond


@dataclass(frozen=True)
class MatchSpec:
    """1:1 nearest-neighbor matching configuration."""

    metric: str = "euclidean"  # "euclidean" on x, or "index" via index_map
    index_map: object | None = None
    replacement: bool = False
    order: str = "greedy"  # "greedy" (ascending distance) or "treated-order"
    caliper: float | None = None

    def __post_init__(self):
        if self.metric not in ("euclidean", "index"):
            raise ValidationError(f"unknown matching metric {self.metric!r}")
        if self.metric == "index" and self.index_map is None:
            raise ValidationError("index metric needs an index map")
        if self.order not in ("greedy", "treated-order"):
            raise ValidationError(f"unknown matching order {self.order!r}")
        if self.caliper is not None and self.caliper <= 0:
            raise ValidationError("caliper must be positive")

    def describe(self) -> dict:
        return {
            "metric": self.metric,
            "replacement": self.replacement,
            "order": self.order,
            "caliper": self.caliper,
        }


def _distances(view: DesignView, spec: MatchSpec, t_idx, c_idx) -> np.ndarray:
    if spec.metric == "index":
        vals = np.array([spec.index_map.index_value(x) for x in view.x])
        return np.abs(vals[t_idx][:, None] - vals[c_idx][None, :])
    x = view.x_matrix()
    diff = x[t_idx][:, None, :] - x[c_idx][None, :, :]
    return np.sqrt(np.sum(diff**2, axis=2))


def nn_match(view: DesignView, spec: MatchSpec) -> SubsampleHandle:
    """Pair each treated unit with its nearest control; returns the handle
    over retained treated units plus their matched controls."""
    d = np.array(view.d)
    t_idx = np.nonzero(d == 1)[0]
    c_idx = np.nonzero(d == 0)[0]
    if len(t_idx) == 0 or len(c_idx) == 0:
        raise ValidationError("matching needs both arms non-empty")
    if not spec.replacement and len(t_idx) > len(c_idx):
        raise ValidationError(
            f"cannot match {len(t_idx)} treated to {len(c_idx)} controls without replacement"
        )
    dist = _distances(view, spec, t_idx, c_idx)
    cap = spec.caliper if spec.caliper is not None else math.inf

    pairs: list[tuple[str, str, float]] = []
    if spec.order == "greedy":
        cand = sorted(
            (
                (float(dist[i, j]), view.ids[t_idx[i]], view.ids[c_idx[j]], i, j)
                for i in range(len(t_idx))
                for j in range(len(c_idx))
            ),
            key=lambda r: (r[0], r[1], r[2]),
        )
        used_t: set[int] = set()
        used_c: set[int] = set()
        for dd, tid, cid, i, j in cand:
            if dd > cap or i in used_t:
                continue
            if not spec.replacement and j in used_c:
                continue
            used_t.add(i)
            used_c.add(j)
            pairs.append((tid, cid, dd))
    else:  # treated-order
        available = list(range(len(c_idx)))
        for i in sorted(range(len(t_idx)), key=lambda i: view.ids[t_idx[i]]):
            if not available:
                break
            best = min(available, key=lambda j: (float(dist[i, j]), view.ids[c_idx[j]]))
            if dist[i, best] > cap:
                continue
            pairs.append((view.ids[t_idx[i]], view.ids[c_idx[best]], float(dist[i, best])))
            if not spec.replacement:
                available.remove(best)

    if not pairs:
        raise ValidationError("all treated dropped: no pair within the caliper")
    member = {tid for tid, _, _ in pairs} | {cid for _, cid, _ in pairs}
    ordered = [uid for uid in view.ids if uid in member]
    provenance = {
        "method": "nn_match",
        "spec": spec.describe(),
        "pairs": [
            {"treated_id": t, "control_id": c, "distance": dd} for t, c, dd in pairs
        ],
    }
    return view.make_handle(ordered, provenance)


def trim_by_score(view: DesignView, index, lo: float, hi: float) -> SubsampleHandle:
    """Keep units whose index value lies in [lo, hi]."""
    if not lo < hi:
        raise ValidationError("trim needs lo < hi")
    kept = [
        uid
        for uid, x in zip(view.ids, view.x)
        if lo <= index.index_value(x) <= hi
    ]
    kept_set = set(kept)
    d_kept = [dd for uid, dd in zip(view.ids, view.d) if uid in kept_set]
    if not any(dd == 1 for dd in d_kept) or not any(dd == 0 for dd in d_kept):
        raise ValidationError("trimming emptied a treatment arm")
    provenance = {"method": "trim_by_score", "lo": lo, "hi": hi}
    return view.make_handle(kept, provenance)


@dataclass(frozen=True)
class BalanceTable:
    """Imbalance before and after a design step."""

    pre: ImbalanceVector
    post: ImbalanceVector
    n_pre: int
    n_post: int
    rows: dict[str, tuple] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "n_pre": self.n_pre,
            "n_post": self.n_post,
            "pre": self.pre.to_json_dict(),
            "post": self.post.to_json_dict(),
        }


def balance_compare(
    s: Sample, sub: SubsampleHandle, index=None, rset: SummarySet | None = None
) -> BalanceTable:
    """All imbalance families computed on the full sample and the subsample,
    both pushed through the same index when one is given."""
    pre = compute_imbalance(
        empirical_cond(s, 1, index), empirical_cond(s, 0, index), rset=rset
    )
    post = compute_imbalance(
        empirical_cond(sub, 1, index), empirical_cond(sub, 0, index), rset=rset
    )
    rows = {}
    for fam in ("ks", "w1", "tv", "dr"):
        rows[fam] = (getattr(pre, fam), getattr(post, fam))
    if pre.md is not None and post.md is not None:
        rows["md"] = (pre.md, post.md)
    return BalanceTable(pre=pre, post=post, n_pre=s.n, n_post=sub.n, rows=rows)
