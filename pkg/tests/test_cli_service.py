import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from balancebounds.cli import main
from balancebounds.errors import ValidationError
from balancebounds.misspec import Perturbation
from balancebounds.perturb import perturb_report, perturb_response_bytes
from balancebounds.report import loads_report, validate_report
from balancebounds.server import serve_report

SUBSAMPLE_IDS = ["U3", "T1", "U4", "T2", "U6", "T3", "U7", "T4", "U8", "T5", "U9", "T7"]


@pytest.fixture()
def ex2_report(tmp_path, ex2_csv_path):
    sub = tmp_path / "sub.txt"
    sub.write_text("\n".join(SUBSAMPLE_IDS))
    out = tmp_path / "report.json"
    code = main([
        "analyze", str(ex2_csv_path), "--map", "const",
        "--subsample-file", str(sub), "--out", str(out),
        "--outdir", str(tmp_path / "files"),
    ])
    assert code == 0
    return loads_report(out.read_text())


def test_analyze_demo_dataset_balance(ex2_report, tmp_path):
    r = ex2_report
    assert r["balance"]["pre"]["ks"] == pytest.approx(1 / 3, abs=1e-12)
    assert r["balance"]["post"]["ks"] == pytest.approx(1 / 6, abs=1e-12)
    assert r["imbalance"]["c"]["ks"] == pytest.approx(1 / 6, abs=1e-12)
    assert r["inference"]["beta_hat"] == pytest.approx(-0.03, abs=1e-12)
    assert r["inference"]["trapezoid"]
    assert "0.0" in r["inference"]["m_values"]
    files = {p.name for p in (tmp_path / "files").iterdir()}
    assert {"trapezoid_ks.csv", "trapezoid_ks.png", "balance.csv", "pairs.csv"} <= files


def test_analyze_matching_flag(tmp_path, ex2_csv_path):
    out = tmp_path / "rep.json"
    code = main([
        "analyze", str(ex2_csv_path), "--map", "identity", "--match", "nn",
        "--alpha", "0.05", "--null", "0", "--out", str(out),
        "--outdir", str(tmp_path / "f"),
    ])
    assert code == 0
    r = loads_report(out.read_text())
    assert r["design"]["n_post"] <= 24
    assert r["balance"]["post"]["ks"] <= r["balance"]["pre"]["ks"] + 1e-12


def test_analyze_missing_column_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,y,d\nu1,1,0\nu2,2,1\n")
    code = main(["analyze", str(bad), "--out", str(tmp_path / "r.json")])
    assert code == 2
    assert "x1" in capsys.readouterr().err


def test_analyze_collinear_exit_3(tmp_path):
    rows = ["id,y,d,x1,x2"] + [f"u{i},{i},{i % 2},{i},{2 * i}" for i in range(8)]
    bad = tmp_path / "col.csv"
    bad.write_text("\n".join(rows) + "\n")
    code = main(["analyze", str(bad), "--map", "identity", "--out", str(tmp_path / "r.json")])
    assert code == 3


def test_perturb_strata_fixture(tmp_path):
    # stratified report fixture with reference imbalance values: the bump
    # perturbation must reproduce bounds 0.030 (sup-norm) and 0.026 (L2)
    report = {
        "schema_version": 1,
        "meta": {"command": "fixture", "args": {}},
        "data": {"n": 1484, "p": 6, "n_treated": 148, "n_control": 1336, "design_only": False},
        "imbalance": {"c": {"ks": None, "w1": None, "lp": None, "tv": 0.594,
                            "dr": 0.723, "dr_singular": 0.0, "md": None, "md_names": None}},
        "support": {
            "index_label": "stratum",
            "arm1": {"t": [1.0, 2.0, 3.0, 4.0], "mass": [0.1, 0.2, 0.3, 0.4]},
            "arm0": {"t": [1.0, 2.0, 3.0, 4.0], "mass": [0.25, 0.25, 0.25, 0.25]},
            "model_line": {"intercept": 0.0, "slope": 0.0},
        },
        "inference": {"beta_hat": 0.106, "se": 0.016, "alpha": 0.05},
    }
    validate_report(report)
    pert = Perturbation(((1.0, 0.0), (2.0, 0.0), (3.0, 0.05), (4.0, 0.05)))
    out = perturb_report(report, pert, families=["tv", "dr"])
    assert out["families"]["tv"]["bound"] == pytest.approx(0.030, abs=0.001)
    assert out["families"]["dr"]["bound"] == pytest.approx(0.026, abs=0.001)
    assert out["families"]["tv"]["verdict"] == "sustained"
    assert out["families"]["dr"]["verdict"] == "sustained"


def test_perturb_zero_sketch(ex2_report):
    pert = Perturbation(((-2.32, 0.0), (3.19, 0.0)))
    out = perturb_report(ex2_report, pert)
    for fam, entry in out["families"].items():
        assert entry["bound"] == pytest.approx(0.0, abs=1e-12), fam
        lo, hi = entry["interval"]
        # classical interval recovered
        assert hi - lo == pytest.approx(
            2 * 1.959963984540054 * out["se"], abs=1e-9
        )


def test_perturb_spike_contrast(ex2_report):
    # a steep narrow spike: huge slope magnitude, moderate sup-norm, so the
    # transport-family bound dwarfs the sup-norm-family bound
    pert = Perturbation(((0.0, 0.0), (0.001, 0.5), (0.002, 0.0)))
    out = perturb_report(ex2_report, pert, families=["mkw", "tv"])
    mkw, tv = out["families"]["mkw"], out["families"]["tv"]
    assert mkw["m"] == pytest.approx(500.0, abs=1e-9)
    assert mkw["bound"] > 10 * tv["bound"]


def test_perturb_cli_round_trip(tmp_path, ex2_csv_path):
    sub = tmp_path / "sub.txt"
    sub.write_text("\n".join(SUBSAMPLE_IDS))
    rep = tmp_path / "report.json"
    main(["analyze", str(ex2_csv_path), "--map", "const", "--subsample-file", str(sub),
          "--out", str(rep), "--outdir", str(tmp_path / "f")])
    pert = tmp_path / "p.json"
    pert.write_text(json.dumps({"knots": [{"t": -1.4, "h": 0.0}, {"t": 0.8, "h": 0.2}]}))
    out = tmp_path / "verdicts.json"
    code = main(["perturb", "--report", str(rep), "--perturbation", str(pert),
                 "--families", "ks,mkw", "--out", str(out)])
    assert code == 0
    v = json.loads(out.read_text())
    assert set(v["families"]) == {"ks", "mkw"}


def test_report_validation_rejects_corrupt():
    with pytest.raises(ValidationError):
        validate_report({"schema_version": 1})
    with pytest.raises(ValidationError):
        loads_report("not json")


def test_serve_endpoints(ex2_report):
    httpd = serve_report(ex2_report, port=0)
    port = httpd.server_address[1]
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    try:
        got = json.load(urllib.request.urlopen(f"{base}/api/report"))
        assert got["schema_version"] == 1

        tz = json.load(urllib.request.urlopen(f"{base}/api/trapezoid?family=ks&alpha=0.05"))
        assert tz["c"] == pytest.approx(1 / 6, abs=1e-12)
        assert len(tz["grid"]) == 41

        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(f"{base}/api/trapezoid?family=nope")
        assert err.value.code == 400

        body = json.dumps({"knots": [{"t": 0.0, "h": 0.1}, {"t": 1.0, "h": 0.3}]}).encode()
        req = urllib.request.Request(
            f"{base}/api/perturb", data=body, headers={"Content-Type": "application/json"}
        )
        resp1 = urllib.request.urlopen(req).read()
        resp2 = urllib.request.urlopen(
            urllib.request.Request(
                f"{base}/api/perturb", data=body, headers={"Content-Type": "application/json"}
            )
        ).read()
        assert resp1 == resp2  # stateless and deterministic
        parsed = json.loads(resp1)
        assert parsed["families"]["ks"]["m"] == pytest.approx(0.2, abs=1e-12)

        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(
                urllib.request.Request(
                    f"{base}/api/perturb", data=b'{"knots": []}',
                    headers={"Content-Type": "application/json"},
                )
            )
        assert err.value.code == 400
        assert "knots" in json.load(err.value)["error"]
    finally:
        httpd.shutdown()
        httpd.server_close()


def test_perturb_response_pure_function(ex2_report):
    body = {"knots": [{"t": 0.0, "h": 0.1}, {"t": 1.0, "h": 0.5}], "families": ["ks", "tv"]}
    assert perturb_response_bytes(ex2_report, body) == perturb_response_bytes(ex2_report, dict(body))


def test_oracle_commands(tmp_path, capsys):
    assert main(["oracle", "example1", "--p", "0.1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["bias_a"] == pytest.approx(0.6, abs=1e-12)

    csv_path = tmp_path / "ex2.csv"
    assert main(["oracle", "example2", "--csv-out", str(csv_path)]) == 0
    assert csv_path.read_text().startswith("id,y,d,x1")


def test_simulate_command(tmp_path):
    outdir = tmp_path / "sim"
    code = main(["simulate", "--n1", "20", "--n0", "40", "--reps", "3",
                 "--seed", "99", "--outdir", str(outdir)])
    assert code == 0
    assert (outdir / "replications.csv").exists()
    assert (outdir / "sim_bias.png").exists()
    summary = json.loads((outdir / "summary.json").read_text())
    assert summary["plan"]["seed"] == 99


def test_simulate_env_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("BB_SEED", "4711")
    outdir = tmp_path / "sim"
    main(["simulate", "--n1", "20", "--n0", "40", "--reps", "2",
          "--seed", "1", "--outdir", str(outdir)])
    summary = json.loads((outdir / "summary.json").read_text())
    assert summary["plan"]["seed"] == 4711


def _write_synthetic_csv(path, seed=31, n_treated=60, n_control=160, p=3):
    from balancebounds.dgp import synthetic_population

    pop = synthetic_population(seed, n_treated=n_treated, n_control=n_control, p=p)
    lines = ["id,y,d," + ",".join(f"x{j + 1}" for j in range(p))]
    for u in pop.units:
        lines.append(f"{u.id},{u.y},{u.d}," + ",".join(str(v) for v in u.x))
    path.write_text("\n".join(lines) + "\n")
    return pop


def test_analyze_multicovariate_induced_index(tmp_path):
    csv_path = tmp_path / "syn.csv"
    _write_synthetic_csv(csv_path)
    out = tmp_path / "rep.json"
    code = main([
        "analyze", str(csv_path), "--map", "identity", "--match", "nn",
        "--alpha", "0.05", "--null", "0", "--family", "ks",
        "--eps", "0.05",
        "--out", str(out), "--outdir", str(tmp_path / "f"),
    ])
    assert code == 0
    r = loads_report(out.read_text())
    # the support block lives at the induced-index level
    assert r["support"]["index_label"] == "index"
    assert len(r["support"]["arm1"]["t"]) >= 2
    assert r["inference"]["trapezoid"] and r["inference"]["m_values"]
    # budget block present per family with duality, budget * c = eps
    ks = r["bounds"]["ks"]
    assert ks["budget"] * ks["c"] == pytest.approx(0.05, abs=1e-12)
    # the sketch path works against this report end to end
    pert = Perturbation(((min(r["support"]["arm0"]["t"]), 0.0),
                         (max(r["support"]["arm1"]["t"]), 0.1)))
    res = perturb_report(r, pert, families=["ks", "md"])
    assert res["families"]["ks"]["bound"] >= 0.0
    assert "md" in res["families"] or "md" in res["unavailable"]


def test_analyze_strata_map(tmp_path):
    csv_path = tmp_path / "syn.csv"
    _write_synthetic_csv(csv_path, seed=77)
    out = tmp_path / "rep.json"
    code = main([
        "analyze", str(csv_path), "--map", "strata", "--strata-count", "4",
        "--out", str(out), "--outdir", str(tmp_path / "f"),
    ])
    assert code == 0
    r = loads_report(out.read_text())
    # pushforward locations are stratum labels
    assert set(r["support"]["arm0"]["t"]) <= {1.0, 2.0, 3.0, 4.0}
    assert r["imbalance"]["c"]["tv"] > 0
    assert r["imbalance"]["c"]["dr"] >= 0


def test_analyze_design_only(tmp_path):
    csv_path = tmp_path / "d.csv"
    csv_path.write_text("id,y,d,x1\nu1,,1,0.3\nu2,,0,0.1\nu3,,1,0.5\nu4,,0,0.6\n")
    out = tmp_path / "rep.json"
    code = main([
        "analyze", str(csv_path), "--design-only", "--map", "identity",
        "--out", str(out), "--outdir", str(tmp_path / "f"),
    ])
    assert code == 0
    r = loads_report(out.read_text())
    assert "inference" not in r and "fit" not in r
    assert r["imbalance"]["c"]["ks"] is not None


def test_serve_concurrent_posts(ex2_report):
    import concurrent.futures

    httpd = serve_report(ex2_report, port=0)
    port = httpd.server_address[1]
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    try:
        def post(k):
            body = json.dumps(
                {"knots": [{"t": 0.0, "h": 0.1 * k}, {"t": 1.0, "h": 0.3}]}
            ).encode()
            req = urllib.request.Request(
                f"http://127.0.0.1:{port}/api/perturb", data=body,
                headers={"Content-Type": "application/json"},
            )
            return json.loads(urllib.request.urlopen(req).read())

        with concurrent.futures.ThreadPoolExecutor(max_workers=6) as pool:
            results = list(pool.map(post, range(12)))
        for k, res in enumerate(results):
            expected = abs(0.3 - 0.1 * k)
            assert res["families"]["ks"]["m"] == pytest.approx(expected, abs=1e-12)
    finally:
        httpd.shutdown()
        httpd.server_close()


def test_perturb_matches_recorded_frontend_fixture():
    # the explorer's recorded fixtures must stay in sync with the backend
    from pathlib import Path

    fixtures = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures"
    if not fixtures.exists():
        pytest.skip("frontend fixtures not present")
    report = loads_report((fixtures / "example1_report.json").read_text())
    sketch = json.loads((fixtures / "example1_sketch_a.json").read_text())
    live = perturb_response_bytes(report, sketch)
    assert live == (fixtures / "example1_perturb_a.json").read_bytes()
    parsed = json.loads(live)
    assert parsed["families"]["ks"]["m"] == pytest.approx(1.0, abs=1e-12)
    assert parsed["families"]["ks"]["bound"] == pytest.approx(0.6, abs=1e-12)


def test_report_json_round_trip(ex2_report):
    from balancebounds.report import dumps_report

    text = dumps_report(ex2_report)
    again = loads_report(text)
    assert again == ex2_report
    assert dumps_report(again) == text


def test_analyze_neg_model_summary(tmp_path, ex2_csv_path):
    out = tmp_path / "rep.json"
    code = main([
        "analyze", str(ex2_csv_path), "--map", "identity",
        "--summaries", "const,value,neg-model",
        "--out", str(out), "--outdir", str(tmp_path / "f"),
    ])
    assert code == 0
    r = loads_report(out.read_text())
    assert r["imbalance"]["c"]["md_names"] == ["const", "value", "neg_model_clip"]
    assert len(r["imbalance"]["c"]["md"]) == 3
    # the tabulated summaries expose the clipped model to the perturb path
    assert r["support"]["summaries"]["names"][-1] == "neg_model_clip"
