"""Report assembly, validation, and JSON round-tripping.

The report is the researcher-to-reader handoff: it carries the fitted model,
the design provenance, every imbalance measurement, the index-level support
with tabulated summaries (so readers can evaluate perturbations server-side),
and the inference block.
"""
from __future__ import annotations

import json
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import ValidationError
from .imbalance import ImbalanceVector, SummarySet
from .sample import EmpiricalCond

SCHEMA_VERSION = 1

_REQUIRED_TOP = ("schema_version", "meta", "data", "imbalance")


def validate_report(obj: dict) -> dict:
    if not isinstance(obj, dict):
        raise ValidationError("report must be a JSON object")
    for key in _REQUIRED_TOP:
        if key not in obj:
            raise ValidationError(f"report lacks required section {key!r}")
    if obj["schema_version"] != SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported report schema version {obj['schema_version']!r}"
        )
    c = obj["imbalance"].get("c")
    if not isinstance(c, dict):
        raise ValidationError("report imbalance section lacks the 'c' map")
    sup = obj.get("support")
    if sup is not None:
        for armkey in ("arm1", "arm0"):
            arm = sup.get(armkey)
            if arm is None or "t" not in arm or "mass" not in arm:
                raise ValidationError(f"report support lacks {armkey!r} points")
            if len(arm["t"]) != len(arm["mass"]):
                raise ValidationError(f"report support {armkey!r} is ragged")
    inf = obj.get("inference")
    if inf is not None:
        for key in ("beta_hat", "se", "alpha"):
            if key not in inf:
                raise ValidationError(f"report inference section lacks {key!r}")
    return obj


def dumps_report(obj: dict) -> str:
    validate_report(obj)
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


def loads_report(text: str) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"report is not valid JSON: {exc}") from None
    return validate_report(obj)


def meta_block(command: str, args: dict, seed: int | None = None) -> dict:
    return {
        "package": "balancebounds",
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "args": args,
        "seed": seed,
    }


def support_block(
    g1: EmpiricalCond,
    g0: EmpiricalCond,
    index_label: str,
    model_intercept: float,
    model_slope: float,
    rset: SummarySet | None,
) -> dict:
    t1, m1 = g1.sorted_scalar()
    t0, m0 = g0.sorted_scalar()
    block = {
        "index_label": index_label,
        "arm1": {"t": t1.tolist(), "mass": m1.tolist()},
        "arm0": {"t": t0.tolist(), "mass": m0.tolist()},
        "model_line": {"intercept": model_intercept, "slope": model_slope},
    }
    if rset is not None:
        block["summaries"] = {
            "names": rset.names(),
            "arm1_values": [rset.evaluate(float(t)).tolist() for t in t1],
            "arm0_values": [rset.evaluate(float(t)).tolist() for t in t0],
        }
    return block


def arms_from_support(support: dict) -> tuple[EmpiricalCond, EmpiricalCond]:
    def build(arm: int, key: str) -> EmpiricalCond:
        pts = support[key]
        return EmpiricalCond.from_pairs(
            arm, zip((float(t) for t in pts["t"]), (float(m) for m in pts["mass"]))
        )

    return build(1, "arm1"), build(0, "arm0")


def imbalance_block(c: ImbalanceVector) -> dict:
    return {"c": c.to_json_dict()}


def fit_block(fit) -> dict:
    return {
        "map": fit.map.describe(),
        "columns": list(fit.columns),
        "theta": np.asarray(fit.theta, dtype=float).tolist(),
        "n": fit.n,
        "alpha_hat": fit.alpha,
        "beta_hat": fit.beta,
    }
