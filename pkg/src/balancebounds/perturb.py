"""The reader exercise: evaluate a sketched perturbation against a report's
imbalance measurements, returning per-family misspecification magnitudes,
bias bounds, adjusted intervals, and sustain/overturn verdicts.

A pure, deterministic function of (report, perturbation): identical inputs
yield byte-identical serialized responses.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .errors import ValidationError
from .imbalance import Summary, SummarySet
from .inference import RobustCI, norm_ppf
from .misspec import (
    Perturbation,
    dr_singular_term,
    m_l2_g0,
    m_lipschitz,
    m_sup,
    m_total_variation,
)
from .report import arms_from_support, validate_report
from .separation import m_md, solve_separation

ALL_FAMILIES = ("ks", "mkw", "tv", "dr", "md", "lp")


def _tabulated_summaries(support: dict) -> SummarySet | None:
    block = support.get("summaries")
    if block is None:
        return None
    names = block["names"]
    table: dict[float, list[float]] = {}
    for t, vals in zip(support["arm1"]["t"], block["arm1_values"]):
        table[float(t)] = [float(v) for v in vals]
    for t, vals in zip(support["arm0"]["t"], block["arm0_values"]):
        table.setdefault(float(t), [float(v) for v in vals])

    def make(j: int, name: str) -> Summary:
        def fn(loc):
            key = float(loc)
            if key not in table:
                raise KeyError("support point lacks tabulated summaries")
            return table[key][j]

        return Summary(name, fn)

    return SummarySet(tuple(make(j, nm) for j, nm in enumerate(names)))


def perturb_report(
    report: dict,
    perturbation: Perturbation,
    families=None,
    alpha: float | None = None,
    null_tau: float | None = None,
) -> dict:
    """Compute m per requested family from the sketch, multiply with the
    report's c values, and robustify the reported interval accordingly."""
    validate_report(report)
    families = list(families) if families else list(ALL_FAMILIES)
    for fam in families:
        if fam not in ALL_FAMILIES:
            raise ValidationError(f"unknown bound family {fam!r}")
    c = report["imbalance"]["c"]
    support = report.get("support")
    inference = report.get("inference")
    alpha = float(alpha) if alpha is not None else (
        float(inference["alpha"]) if inference else 0.05
    )
    null_tau = float(null_tau) if null_tau is not None else 0.0

    g1 = g0 = None
    union = None
    if support is not None:
        g1, g0 = arms_from_support(support)
        union = sorted({t for t, _ in g1.points} | {t for t, _ in g0.points})

    results: dict[str, dict] = {}
    unavailable: dict[str, str] = {}

    def family_mc(fam: str):
        if fam == "ks":
            return m_total_variation(perturbation), c.get("ks"), {}
        if fam == "mkw":
            return m_lipschitz(perturbation), c.get("w1"), {}
        if fam == "tv":
            return m_sup(perturbation, support=union), c.get("tv"), {}
        if fam == "dr":
            if g0 is None:
                return None, None, {}
            corr = dr_singular_term(perturbation, g1, g0) if g1 is not None else 0.0
            return m_l2_g0(perturbation, g0), c.get("dr"), {"dr_singular_term": corr}
        if fam == "lp":
            lp = c.get("lp")
            return (
                m_lipschitz(perturbation) + m_sup(perturbation, support=union),
                (lp[1] if lp else None),
                {"conservative_endpoint": lp[1] if lp else None},
            )
        if fam == "md":
            if g1 is None or g0 is None:
                return None, None, {}
            rset = _tabulated_summaries(support)
            if rset is None or c.get("md") is None:
                return None, None, {}
            sol_p = solve_separation(perturbation, rset, g1, g0, sigma=+1, L=math.inf)
            sol_m = solve_separation(perturbation, rset, g1, g0, sigma=-1, L=math.inf)
            mvec, slack = m_md(sol_p, sol_m, g1, g0)
            return tuple(float(v) for v in mvec), tuple(float(v) for v in c["md"]), {
                "md_slack_term": slack,
                "sharp": bool(sol_p.sharp and sol_m.sharp),
            }
        raise ValidationError(f"unknown bound family {fam!r}")

    beta_hat = float(inference["beta_hat"]) if inference else None
    se = float(inference["se"]) if inference else None

    for fam in families:
        m, cval, corrections = family_mc(fam)
        if m is None or cval is None:
            unavailable[fam] = (
                f"report lacks the ingredients for family {fam!r} "
                "(no c value or no index-level support)"
            )
            continue
        if fam == "md":
            bound = float(np.dot(m, cval)) + float(corrections.get("md_slack_term", 0.0))
        elif fam == "dr":
            bound = float(m) * float(cval) + float(corrections.get("dr_singular_term", 0.0))
        else:
            bound = float(m) * float(cval)
        entry = {
            "m": list(m) if isinstance(m, tuple) else m,
            "c": list(cval) if isinstance(cval, tuple) else cval,
            "bound": bound,
            "corrections": corrections,
        }
        if beta_hat is not None:
            entry["verdict"] = (
                "sustained" if abs(beta_hat - null_tau) > bound else "overturned"
            )
            zq = norm_ppf(1.0 - alpha / 2.0)
            entry["interval"] = [
                beta_hat - zq * se - bound,
                beta_hat + zq * se + bound,
            ]
            scalar_c = cval if not isinstance(cval, tuple) else None
            if scalar_c is not None:
                mv = RobustCI(
                    beta_hat=beta_hat, se=se, c=float(scalar_c), alpha=alpha
                ).m_value(null_tau)
                # JSON has no infinity; None marks a bias-immune design
                entry["m_value"] = None if math.isinf(mv) else mv
        results[fam] = entry

    return {
        "alpha": alpha,
        "null": null_tau,
        "beta_hat": beta_hat,
        "se": se,
        "families": results,
        "unavailable": unavailable,
        "perturbation": perturbation.to_json_dict(),
    }


def perturb_response_bytes(report: dict, body: dict) -> bytes:
    """Parse a wire-format request body and serialize the response; the byte
    output is a pure function of (report, body)."""
    perturbation = Perturbation.from_json_dict(body)
    families = body.get("families")
    out = perturb_report(
        report,
        perturbation,
        families=families,
        alpha=body.get("alpha"),
        null_tau=body.get("null"),
    )
    return json.dumps(out, sort_keys=True, allow_nan=False).encode("utf-8")
