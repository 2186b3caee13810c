import numpy as np
import pytest

from balancebounds.design import MatchSpec, nn_match
from balancebounds.errors import ValidationError
from balancebounds.sample import (
    CsvSchema,
    EmpiricalCond,
    Sample,
    SubsampleHandle,
    Unit,
    empirical_cond,
    load_csv,
)

from conftest import make_sample

TABLE_TREATED = {-1.35, -0.91, 0.16, 0.33, 0.44, 0.70, 0.75, 0.92, 1.95, 2.16, 2.22, 3.19}


def test_load_csv_table(ex2_csv_path):
    s = load_csv(ex2_csv_path)
    assert s.n == 24 and s.p == 1
    assert len(s.arm(1)) == 12 and len(s.arm(0)) == 12


def test_load_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ValidationError, match="no units"):
        load_csv(path)

    path.write_text("id,y,d,x1\n")
    with pytest.raises(ValidationError, match="no units"):
        load_csv(path)


def test_load_csv_bad_d_cites_row(tmp_path):
    rows = ["id,y,d,x1"] + [f"u{i},{i},0,{i}" for i in range(1, 6)] + ["u6,6,2,6"]
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ValidationError, match="row 7"):
        load_csv(path)


def test_load_csv_malformed_row(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("id,y,d,x1\nu1,1.0,0,0.5\nu2,oops,1,0.5\nu3,1.0,1,0.25\n")
    with pytest.raises(ValidationError, match="row 3"):
        load_csv(path)


def test_load_csv_missing_column(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("id,y,d\nu1,1,0\n")
    with pytest.raises(ValidationError, match="x1"):
        load_csv(path)


def test_load_csv_design_only_missing_y(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("id,y,d,x1\nu1,,0,0.5\nu2,,1,0.25\n")
    with pytest.raises(ValidationError, match="missing y"):
        load_csv(path)
    s = load_csv(path, CsvSchema(design_only=True))
    assert s.design_only and s.units[0].y is None
    with pytest.raises(ValidationError):
        s.y_array()


def test_empirical_cond_table(ex2):
    sample, _, _ = ex2
    g1 = empirical_cond(sample, 1)
    assert len(g1.points) == 12
    assert {loc for loc, _ in g1.points} == TABLE_TREATED
    assert all(abs(m - 1 / 12) < 1e-15 for _, m in g1.points)


def test_empirical_cond_single_unit():
    s = make_sample([0.0], [1.0])
    g1 = empirical_cond(s, 1)
    assert g1.points == ((0.0, 1.0),)


def test_empirical_cond_merges_exact_duplicates():
    s = make_sample([0.5, 0.5, 1.0], [0.0])
    g1 = empirical_cond(s, 1)
    assert dict(g1.points)[0.5] == pytest.approx(2 / 3, abs=1e-15)
    # near-duplicates stay distinct
    s2 = make_sample([0.5, 0.5 + 1e-14], [0.0])
    assert len(empirical_cond(s2, 1).points) == 2


def test_empirical_cond_empty_arm_errors():
    units = (Unit("a", 1.0, (0.0,), 1), Unit("b", 2.0, (1.0,), 1))
    s = Sample(units, p=1)
    with pytest.raises(ValidationError, match="empty"):
        empirical_cond(s, 0)


def test_empirical_cond_order_invariant(ex2):
    sample, _, _ = ex2
    rng = np.random.default_rng(3)
    perm = rng.permutation(sample.n)
    shuffled = Sample(tuple(sample.units[i] for i in perm), p=1)
    for arm in (0, 1):
        a = dict(empirical_cond(sample, arm).points)
        b = dict(empirical_cond(shuffled, arm).points)
        assert a == b


def test_masses_sum_to_one():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n1, n0 = rng.integers(1, 9, size=2)
        s = make_sample(rng.normal(size=n1), rng.normal(size=n0))
        for arm in (0, 1):
            g = empirical_cond(s, arm)
            assert abs(sum(m for _, m in g.points) - 1.0) < 1e-12


def test_empirical_cond_mass_validation():
    with pytest.raises(ValidationError):
        EmpiricalCond(arm=1, points=((0.0, 0.7), (1.0, 0.2)))
    with pytest.raises(ValidationError):
        EmpiricalCond(arm=1, points=((0.0, 0.5), (0.0, 0.5)))


def test_subsample_handle_validation(ex2):
    sample, _, _ = ex2
    with pytest.raises(ValidationError, match="not in parent"):
        SubsampleHandle(parent=sample, member_ids=("nope",), provenance={})
    with pytest.raises(ValidationError, match="duplicate"):
        SubsampleHandle(parent=sample, member_ids=("T1", "T1"), provenance={})


def test_design_view_redacts_y():
    s = make_sample([0.1, 0.6], [0.2, 0.7])
    view = s.design_view()
    assert not hasattr(view, "y")
    assert view.ids == tuple(u.id for u in s.units)


def test_subsample_construction_cannot_see_y():
    # same controls, permuted outcomes: the design path must be identical
    rng = np.random.default_rng(5)
    x1 = rng.normal(1.0, 1.0, size=8)
    x0 = rng.normal(0.0, 1.0, size=12)
    s = make_sample(x1, x0)
    ys = [u.y for u in s.units]
    rng.shuffle(ys)
    permuted = Sample(
        tuple(Unit(u.id, y, u.x, u.d) for u, y in zip(s.units, ys)), p=1
    )
    spec = MatchSpec(metric="euclidean")
    h1 = nn_match(s.design_view(), spec)
    h2 = nn_match(permuted.design_view(), spec)
    assert h1.member_ids == h2.member_ids
    assert h1.provenance["pairs"] == h2.provenance["pairs"]


def test_duplicate_ids_rejected():
    units = (Unit("a", 1.0, (0.0,), 1), Unit("a", 2.0, (1.0,), 0))
    with pytest.raises(ValidationError, match="duplicate"):
        Sample(units, p=1)


def test_d_must_be_binary():
    with pytest.raises(ValidationError, match="d must be 0 or 1"):
        Unit("a", 1.0, (0.0,), 2)
