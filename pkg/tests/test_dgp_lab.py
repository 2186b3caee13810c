import math

import numpy as np
import pytest

from balancebounds.bounds import bias_exact
from balancebounds.dgp import (
    Example1Params,
    SimPlan,
    example1_oracle,
    example2_csv,
    example2_dataset,
    run_simulation,
    simulation_csv,
    synthetic_population,
)
from balancebounds.errors import ValidationError
from balancebounds.imbalance import (
    SummarySet,
    compute_imbalance,
    summary_constant,
    summary_value,
)
from balancebounds.misspec import compute_misspec
from balancebounds.regression import att_parameter, conditional_estimand
from balancebounds.sample import empirical_cond
from balancebounds.separation import solve_separation

RSET = SummarySet((summary_constant(), summary_value()))


def test_example1_params_range():
    with pytest.raises(ValidationError):
        Example1Params(0.0)
    with pytest.raises(ValidationError):
        Example1Params(0.5)
    Example1Params(0.499)


@pytest.mark.parametrize("p", [0.1, 0.25, 0.4])
def test_example1_oracle_cross_check(p):
    # every closed form reproduced by the pipeline from the finite population
    o = example1_oracle(p)
    dgp = o.dgp
    g1, g0 = dgp.conditional(1), dgp.conditional(0)
    tol = 1e-12

    assert att_parameter(dgp, g1) == pytest.approx(o.tau, abs=tol)
    assert conditional_estimand(dgp, o.map_a)[1] == pytest.approx(o.beta_a, abs=tol)
    assert conditional_estimand(dgp, o.map_b)[1] == pytest.approx(o.beta_b, abs=tol)
    assert bias_exact(dgp, None, o.map_a) == pytest.approx(o.bias_a, abs=tol)
    assert bias_exact(dgp, None, o.map_b) == pytest.approx(o.bias_b, abs=tol)

    c = compute_imbalance(g1, g0, rset=RSET)
    assert c.ks == pytest.approx(o.c_ks, abs=tol)
    assert c.w1 == pytest.approx(o.c_w1, abs=tol)
    assert c.tv == pytest.approx(o.c_tv, abs=tol)
    assert c.dr == pytest.approx(o.c_dr, abs=tol)
    assert np.allclose(c.md, o.c_md, atol=tol)

    for spec, m_ks, m_lip, m_tv, m_dr, zeta, m_md_ref in (
        ("A", o.m_ks_a, o.m_mkw_a, o.m_tv_a, o.m_dr_a, o.zeta_a, o.m_md_a),
        ("B", o.m_ks_b, o.m_mkw_b, o.m_tv_b, o.m_dr_b, o.zeta_b, o.m_md_b),
    ):
        h = o.perturbation(spec)
        m = compute_misspec(h, g1=g1, g0=g0, rset=RSET)
        assert m.m_ks == pytest.approx(m_ks, abs=tol)
        assert m.m_lip == pytest.approx(m_lip, abs=tol)
        assert m.m_sup == pytest.approx(m_tv, abs=tol)
        assert m.m_l2_g0 == pytest.approx(m_dr, abs=tol)
        assert np.allclose(m.m_md, m_md_ref, atol=tol)
        sol = solve_separation(h, RSET, g1, g0, sigma=+1)
        assert np.allclose(sol.zeta, zeta, atol=tol)


def test_example1_independence_point():
    o = example1_oracle(0.25)
    assert o.c_ks == o.c_w1 == o.c_tv == o.c_dr == 0.0
    assert o.bias_a == o.bias_b == pytest.approx(0.0, abs=1e-15)


def test_example1_oracle_json():
    d = example1_oracle(0.4)
    obj = d.to_json_dict()
    assert obj["bias_a"] == pytest.approx(-0.6, abs=1e-12)
    assert obj["c_tv"] == pytest.approx(1.2, abs=1e-12)
    assert "dgp" not in obj


def test_example2_dataset_cross_check():
    sample, handle, dgp = example2_dataset()
    assert sample.n == 24 and handle.n == 12
    pre = compute_imbalance(empirical_cond(sample, 1), empirical_cond(sample, 0), rset=RSET)
    post = compute_imbalance(empirical_cond(handle, 1), empirical_cond(handle, 0), rset=RSET)
    # exact rationals from the two-decimal table
    assert pre.ks == pytest.approx(1 / 3, abs=1e-12)
    assert post.ks == pytest.approx(1 / 6, abs=1e-12)
    # table-exact values; the unrounded source data prints 0.981/0.039/0.028
    assert pre.w1 == pytest.approx(0.98, abs=1e-12)
    assert post.w1 == pytest.approx(0.04, abs=1e-12)
    assert pre.md[1] == pytest.approx(0.98, abs=1e-12)
    assert post.md[1] == pytest.approx(0.03, abs=1e-12)


def test_example2_csv_round_trip(tmp_path, ex2_csv_path):
    from balancebounds.sample import load_csv

    s = load_csv(ex2_csv_path)
    ref, _, _ = example2_dataset()
    assert tuple(u.id for u in s.units) == tuple(u.id for u in ref.units)
    assert all(a.x == b.x and a.d == b.d for a, b in zip(s.units, ref.units))


def test_simulation_deterministic():
    plan = SimPlan(n1=20, n0=40, replications=1, seed=123)
    pop = synthetic_population(123, n_treated=60, n_control=120, p=4)
    rows1 = run_simulation(plan, pop)
    rows2 = run_simulation(plan, pop)
    assert simulation_csv(rows1) == simulation_csv(rows2)
    assert rows1 == rows2


def test_simulation_plan_validation():
    with pytest.raises(ValidationError, match="n1 <= n0"):
        SimPlan(n1=100, n0=50, replications=1, seed=1)
    with pytest.raises(ValidationError):
        SimPlan(n1=10, n0=20, replications=0, seed=1)
    with pytest.raises(ValidationError):
        SimPlan(n1=10, n0=20, replications=1, seed=1, specs=("Z",))


def test_simulation_reduces_bias():
    plan = SimPlan(n1=50, n0=100, replications=15, seed=42)
    rows = run_simulation(plan)
    a = [r for r in rows if r["spec"] == "A" and not r["skipped"]]
    assert len(a) >= 12
    improved = np.mean([abs(r["bias_post"]) < abs(r["bias_pre"]) for r in a])
    assert improved >= 0.8
    # matching also tightens the imbalance side
    assert np.median([r["c_w1_post"] for r in a]) < np.median([r["c_w1_pre"] for r in a])


def test_simulation_spec_c_runs():
    plan = SimPlan(n1=30, n0=60, replications=3, seed=7, specs=("C",))
    rows = run_simulation(plan)
    ok = [r for r in rows if not r["skipped"]]
    assert ok, "cubic specification should fit at this size"
    for r in ok:
        assert math.isfinite(r["bias_pre"]) and math.isfinite(r["bias_post"])


def test_simulation_csv_columns():
    plan = SimPlan(n1=20, n0=40, replications=1, seed=5)
    text = simulation_csv(run_simulation(plan))
    header = text.splitlines()[0].split(",")
    assert header[:4] == ["rep", "spec", "skipped", "reason"]
    assert "bias_pre" in header and "c_ks_post" in header


def test_simulation_records_skips_not_fatal():
    # duplicated covariate columns make the propensity design singular in
    # every replication; each is recorded as skipped, never fatal
    from balancebounds.sample import Sample, Unit

    rng = np.random.default_rng(99)
    units = []
    for i in range(80):
        d = int(i < 30)
        v = float(rng.normal() + 0.5 * d)
        units.append(Unit(f"u{i}", float(rng.random() < 0.5), (v, v), d))
    pop = Sample(tuple(units), p=2)
    rows = run_simulation(SimPlan(n1=20, n0=40, replications=2, seed=3), pop)
    assert rows, "rows recorded"
    assert all(r["skipped"] for r in rows)
    assert all("singular" in r["reason"] or "rank" in r["reason"] for r in rows)
