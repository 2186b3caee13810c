"""Closed-form oracle populations, the bundled 24-unit demonstration dataset
with its curated matched subsample, synthetic logistic populations, and the
desk-scale matching simulation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from io import StringIO

import numpy as np

from .design import MatchSpec, nn_match
from .errors import NumericError, ValidationError
from .imbalance import SummarySet, compute_imbalance, summary_constant, summary_value
from .misspec import Perturbation, compute_misspec
from .regression import (
    ConstantOnlyMap,
    CovariateMap,
    DGPSpec,
    IdentityMap,
    LinearPropensityMap,
    att_parameter,
    conditional_estimand,
    regression_value,
)
from .sample import Sample, SubsampleHandle, Unit, empirical_cond, empirical_joint


# ---------------------------------------------------------------------------
# Binary toy population with dependence parameter p
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Example1Params:
    """Dependence parameter of the binary toy population; p = 1/4 makes the
    controls independent of treatment."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 0.5:
            raise ValidationError("p must lie strictly inside (0, 1/2)")


def example1_dgp(p: float) -> DGPSpec:
    Example1Params(p)
    atoms = (
        ((0.0,), 0, 0.5 - p),
        ((1.0,), 0, p),
        ((0.0,), 1, p),
        ((1.0,), 1, 0.5 - p),
    )
    f = {((x,), d): float(d + d * x + x) for x in (0.0, 1.0) for d in (0, 1)}
    return DGPSpec(atoms=atoms, f=f)


@dataclass(frozen=True)
class Example1Oracle:
    """Every closed-form quantity of the toy population, for both the
    intercept-only specification (A) and the specification that also includes
    the control (B)."""

    p: float
    dgp: DGPSpec
    tau: float
    beta_a: float
    beta_b: float
    bias_a: float
    bias_b: float
    c_ks: float
    c_w1: float
    c_tv: float
    c_dr: float
    c_md: tuple[float, float]
    c_lp: float
    m_ks_a: float
    m_ks_b: float
    m_mkw_a: float
    m_mkw_b: float
    m_tv_a: float
    m_tv_b: float
    m_dr_a: float
    m_dr_b: float
    m_lp_a: float
    m_lp_b: float
    zeta_a: tuple[float, float]
    zeta_b: tuple[float, float]
    m_md_a: tuple[float, float]
    m_md_b: tuple[float, float]
    map_a: CovariateMap = field(default_factory=ConstantOnlyMap)
    map_b: CovariateMap = field(default_factory=lambda: IdentityMap(p=1))

    def perturbation(self, spec: str) -> Perturbation:
        """Tabulated gap between the true conditional mean at d = 0 and the
        specification's fitted line, on the support {0, 1}."""
        if spec == "A":
            return Perturbation(((0.0, -2 * self.p), (1.0, 1 - 2 * self.p)))
        if spec == "B":
            return Perturbation(((0.0, self.p), (1.0, self.p - 0.5)))
        raise ValidationError(f"unknown specification {spec!r}")

    def to_json_dict(self) -> dict:
        skip = {"dgp", "map_a", "map_b"}
        out = {}
        for k, v in self.__dict__.items():
            if k in skip:
                continue
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def example1_oracle(p: float) -> Example1Oracle:
    Example1Params(p)
    dev = abs(1.0 - 4.0 * p)
    return Example1Oracle(
        p=p,
        dgp=example1_dgp(p),
        tau=2.0 - 2.0 * p,
        beta_a=3.0 - 6.0 * p,
        beta_b=1.5,
        bias_a=1.0 - 4.0 * p,
        bias_b=-0.5 + 2.0 * p,
        c_ks=dev,
        c_w1=dev,
        c_tv=2.0 * dev,
        c_dr=dev / math.sqrt(2.0 * p * (1.0 - 2.0 * p)),
        c_md=(0.0, dev),
        c_lp=2.0 * dev,
        m_ks_a=1.0,
        m_ks_b=0.5,
        m_mkw_a=1.0,
        m_mkw_b=0.5,
        m_tv_a=max(2.0 * p, 1.0 - 2.0 * p),
        m_tv_b=max(p, 0.5 - p),
        m_dr_a=math.sqrt(2.0 * p * (1.0 - 2.0 * p)),
        m_dr_b=math.sqrt(p * (0.5 - p)),
        m_lp_a=1.0 + max(2.0 * p, 1.0 - 2.0 * p),
        m_lp_b=0.5 + max(p, 0.5 - p),
        zeta_a=(-2.0 * p, 1.0),
        zeta_b=(p, -0.5),
        m_md_a=(2.0 * p, 1.0),
        m_md_b=(p, 0.5),
    )


# ---------------------------------------------------------------------------
# 24-unit demonstration dataset
# ---------------------------------------------------------------------------

# column order of its source table; values are exact to two decimals
_EX2_ROWS: tuple[tuple[str, float, int], ...] = (
    ("U1", -2.32, 0), ("U2", -1.96, 0), ("U3", -1.36, 0), ("T1", -1.35, 1),
    ("U4", -0.91, 0), ("T2", -0.91, 1), ("U5", 0.11, 0), ("U6", 0.14, 0),
    ("T3", 0.16, 1), ("T4", 0.33, 1), ("U7", 0.42, 0), ("T5", 0.44, 1),
    ("U8", 0.55, 0), ("T6", 0.70, 1), ("T7", 0.75, 1), ("U9", 0.76, 0),
    ("U10", 0.83, 0), ("T8", 0.92, 1), ("U11", 1.02, 0), ("U12", 1.52, 0),
    ("T9", 1.95, 1), ("T10", 2.16, 1), ("T11", 2.22, 1), ("T12", 3.19, 1),
)

# curated matched pairs whose subsample reproduces the reference statistics
# (distribution-function distance 1/6, misspecification range 2.12)
_EX2_PAIRS: tuple[tuple[str, str], ...] = (
    ("T1", "U3"), ("T2", "U4"), ("T3", "U6"), ("T4", "U7"), ("T5", "U8"), ("T7", "U9"),
)


def example2_dataset() -> tuple[Sample, SubsampleHandle, DGPSpec]:
    """The bundled 24-unit dataset (outcome equals the control, errors
    suppressed so estimand objects are exact), its curated 12-unit matched
    subsample, and the matching finite population with f(x, d) = x."""
    units = tuple(Unit(id=uid, y=x, x=(x,), d=d) for uid, x, d in _EX2_ROWS)
    sample = Sample(units, p=1)
    handle = SubsampleHandle(
        parent=sample,
        member_ids=tuple(
            uid for uid, _, _ in _EX2_ROWS if any(uid in pr for pr in _EX2_PAIRS)
        ),
        provenance={
            "method": "curated",
            "pairs": [
                {"treated_id": t, "control_id": c, "distance": abs(
                    dict((u, xx) for u, xx, _ in _EX2_ROWS)[t]
                    - dict((u, xx) for u, xx, _ in _EX2_ROWS)[c]
                )}
                for t, c in _EX2_PAIRS
            ],
        },
    )
    f = {((x,), d): float(x) for _, x, _ in _EX2_ROWS for d in (0, 1)}
    dgp = DGPSpec(atoms=empirical_joint(sample), f=f)
    return sample, handle, dgp


def example2_csv() -> str:
    buf = StringIO()
    w = csv.writer(buf)
    w.writerow(["id", "y", "d", "x1"])
    for uid, x, d in _EX2_ROWS:
        w.writerow([uid, x, d, x])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Logistic model fitting (self-contained Newton iteration)
# ---------------------------------------------------------------------------


def _expit(v):
    out = np.empty_like(v, dtype=float)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def logistic_newton(x: np.ndarray, y: np.ndarray, tol: float = 1e-10, max_iter: int = 60):
    """Maximum-likelihood logit coefficients by Newton iterations, run to
    gradient sup-norm ``tol``; raises on non-convergence or separation."""
    n, k = x.shape
    beta = np.zeros(k)
    for _ in range(max_iter):
        mu = _expit(x @ beta)
        grad = x.T @ (y - mu) / n
        if float(np.max(np.abs(grad))) < tol:
            return beta
        w = mu * (1.0 - mu)
        hess = (x * w[:, None]).T @ x / n
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(k), grad)
        except np.linalg.LinAlgError:
            raise NumericError("logistic fit: singular Hessian") from None
        # dampen huge steps (quasi-separation)
        norm = float(np.max(np.abs(step)))
        if norm > 25.0:
            step *= 25.0 / norm
        beta = beta + step
        if float(np.max(np.abs(beta))) > 1e4:
            raise NumericError("logistic fit: diverging coefficients (separation?)")
    raise NumericError("logistic fit did not converge")


# ---------------------------------------------------------------------------
# Synthetic population and simulation
# ---------------------------------------------------------------------------


def _rng(seed: int, rep: int) -> np.random.Generator:
    # counter-based generator keyed by (seed, replication): streams are
    # independent and insensitive to execution order
    return np.random.Generator(np.random.Philox(key=np.array([seed, rep], dtype=np.uint64)))


def synthetic_population(
    seed: int, n_treated: int = 200, n_control: int = 1200, p: int = 6
) -> Sample:
    """Synthetic applicant pool with the shape of a loan-file sample: six
    controls, treated units shifted upward, binary outcome from a logistic
    model of the controls and treatment."""
    rng = _rng(seed, 0)
    shift = np.array([0.8, 0.5, 0.4, 0.3, 0.2, 0.1])[:p]
    weights = np.array([0.9, -0.6, 0.5, 0.4, -0.3, 0.25])[:p]
    units = []
    for arm, count in ((1, n_treated), (0, n_control)):
        x = rng.normal(size=(count, p)) * 0.8 + (shift if arm == 1 else 0.0)
        lin = -1.2 + 0.6 * arm + x @ weights
        y = (rng.random(count) < _expit(lin)).astype(float)
        for i in range(count):
            units.append(
                Unit(
                    id=f"{'t' if arm else 'c'}{i}",
                    y=float(y[i]),
                    x=tuple(float(v) for v in x[i]),
                    d=arm,
                )
            )
    return Sample(tuple(units), p=p)


@dataclass(frozen=True)
class SimPlan:
    n1: int
    n0: int
    replications: int
    seed: int
    specs: tuple[str, ...] = ("A", "B")
    matcher: MatchSpec | None = None

    def __post_init__(self):
        if self.n1 > self.n0:
            raise ValidationError("plan needs n1 <= n0")
        if self.replications < 1:
            raise ValidationError("plan needs at least one replication")
        for sp in self.specs:
            if sp not in ("A", "B", "C"):
                raise ValidationError(f"unknown specification {sp!r}")


@dataclass(frozen=True)
class PolynomialIndexMap(CovariateMap):
    """Powers 1..degree of a scalar index (simulation specification C)."""

    degree: int
    kind: str = field(default="poly_index", init=False)

    @property
    def dim(self):
        return self.degree

    def values(self, x):
        t = float(x[0])
        return tuple(t ** k for k in range(1, self.degree + 1))

    def column_names(self):
        return [f"index^{k}" for k in range(1, self.degree + 1)]

    @property
    def is_scalar_index(self):
        return True

    def index_value(self, x):
        return float(x[0])


_SPEC_MAPS = {
    "A": lambda: ConstantOnlyMap(),
    "B": lambda: IdentityMap(p=1),
    "C": lambda: PolynomialIndexMap(degree=3),
}

SIM_COLUMNS = (
    "rep", "spec", "skipped", "reason", "n_pre", "n_post",
    "beta_pre", "beta_post", "tau_pre", "tau_post", "bias_pre", "bias_post",
    "c_ks_pre", "c_ks_post", "c_w1_pre", "c_w1_post",
    "c_tv_pre", "c_tv_post", "c_dr_pre", "c_dr_post",
    "m_ks_pre", "m_ks_post", "m_mkw_pre", "m_mkw_post",
    "m_tv_pre", "m_tv_post", "m_dr_pre", "m_dr_post",
)


def _index_sample(sim: Sample, pmap: LinearPropensityMap) -> Sample:
    """Sim sample re-expressed with the fitted score as the only control."""
    units = tuple(
        Unit(id=u.id, y=u.y, x=(float(pmap.index_value(u.x)),), d=u.d) for u in sim.units
    )
    return Sample(units, p=1)


def _spec_objects(dgp_idx: DGPSpec, sample_idx, cmap: CovariateMap):
    g = empirical_joint(sample_idx)
    theta = conditional_estimand(dgp_idx, cmap, g=g)
    g1 = empirical_cond(sample_idx, 1)
    g0 = empirical_cond(sample_idx, 0)
    tau = att_parameter(dgp_idx, g1)
    beta = float(theta[1])
    support = sorted({loc for loc, _ in g1.points} | {loc for loc, _ in g0.points})
    h = Perturbation.tabulate(
        lambda t: dgp_idx.f_at((t,), 0) - regression_value(theta, cmap, (t,), 0), support
    )
    c = compute_imbalance(g1, g0)
    m = compute_misspec(h, g1=g1, g0=g0)
    return {
        "beta": beta,
        "tau": tau,
        "bias": beta - tau,
        "c": c,
        "m": m,
    }


def run_simulation(plan: SimPlan, population: Sample | None = None) -> list[dict]:
    """Draw replication subsamples from the pool, fit the score and the
    logistic outcome model, compute pre-matching estimand/parameter/metric
    objects, match, and recompute within the matched subsample.

    Replications are independent streams of (seed, rep); a degenerate
    replication is recorded as skipped, not fatal.
    """
    pop = population if population is not None else synthetic_population(plan.seed)
    treated_pool = [u for u in pop.units if u.d == 1]
    control_pool = [u for u in pop.units if u.d == 0]
    if plan.n1 > len(treated_pool) or plan.n0 > len(control_pool):
        raise ValidationError("population pool smaller than the plan's arm sizes")
    matcher = plan.matcher or MatchSpec(metric="index", index_map=IdentityMap(p=1))

    rows: list[dict] = []
    for rep in range(plan.replications):
        rng = _rng(plan.seed, rep + 1)
        t_sel = rng.choice(len(treated_pool), size=plan.n1, replace=False)
        c_sel = rng.choice(len(control_pool), size=plan.n0, replace=False)
        units = tuple(treated_pool[i] for i in sorted(t_sel)) + tuple(
            control_pool[i] for i in sorted(c_sel)
        )
        sim = Sample(units, p=pop.p)
        try:
            pmap = LinearPropensityMap.fit(sim.design_view())
            sim_idx = _index_sample(sim, pmap)
            # outcome model on (1, d, score, d*score), treated as the truth
            tvals = np.array([u.x[0] for u in sim_idx.units])
            dvals = sim_idx.d_array().astype(float)
            design = np.column_stack([np.ones(len(tvals)), dvals, tvals, dvals * tvals])
            coef = logistic_newton(design, sim_idx.y_array())

            def f_of(t: float, d: int) -> float:
                return float(_expit(np.array([coef[0] + coef[1] * d + coef[2] * t + coef[3] * d * t]))[0])

            grid = sorted({u.x[0] for u in sim_idx.units})
            f_table = {((t,), d): f_of(t, d) for t in grid for d in (0, 1)}
            dgp_idx = DGPSpec(atoms=empirical_joint(sim_idx), f=f_table)

            matched = nn_match(sim_idx.design_view(), matcher)
            matched_sample = matched.as_sample()
            for spec in plan.specs:
                cmap = _SPEC_MAPS[spec]()
                pre = _spec_objects(dgp_idx, sim_idx, cmap)
                post = _spec_objects(dgp_idx, matched_sample, cmap)
                rows.append({
                    "rep": rep, "spec": spec, "skipped": False, "reason": "",
                    "n_pre": sim_idx.n, "n_post": matched_sample.n,
                    "beta_pre": pre["beta"], "beta_post": post["beta"],
                    "tau_pre": pre["tau"], "tau_post": post["tau"],
                    "bias_pre": pre["bias"], "bias_post": post["bias"],
                    "c_ks_pre": pre["c"].ks, "c_ks_post": post["c"].ks,
                    "c_w1_pre": pre["c"].w1, "c_w1_post": post["c"].w1,
                    "c_tv_pre": pre["c"].tv, "c_tv_post": post["c"].tv,
                    "c_dr_pre": pre["c"].dr, "c_dr_post": post["c"].dr,
                    "m_ks_pre": pre["m"].m_ks, "m_ks_post": post["m"].m_ks,
                    "m_mkw_pre": pre["m"].m_lip, "m_mkw_post": post["m"].m_lip,
                    "m_tv_pre": pre["m"].m_sup, "m_tv_post": post["m"].m_sup,
                    "m_dr_pre": pre["m"].m_l2_g0, "m_dr_post": post["m"].m_l2_g0,
                })
        except NumericError as exc:
            for spec in plan.specs:
                rows.append({
                    "rep": rep, "spec": spec, "skipped": True, "reason": str(exc),
                    **{k: None for k in SIM_COLUMNS if k not in ("rep", "spec", "skipped", "reason")},
                })
    return rows


def simulation_csv(rows: list[dict]) -> str:
    buf = StringIO()
    w = csv.DictWriter(buf, fieldnames=list(SIM_COLUMNS))
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k) for k in SIM_COLUMNS})
    return buf.getvalue()
