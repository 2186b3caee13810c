"""Command-line front door.

Subcommands: analyze, perturb, simulate, serve, oracle. Validation problems
exit with code 2, numerical failures with code 3. The analyze and simulate
report paths render figures next to the delimited output series.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .bounds import assemble_bounds
from .design import MatchSpec, balance_compare, nn_match
from .dgp import SimPlan, example1_oracle, example2_csv, example2_dataset, run_simulation, simulation_csv
from .errors import NumericError, ValidationError
from .imbalance import (
    SummarySet,
    compute_imbalance,
    summary_clipped_negative_line,
    summary_constant,
    summary_coordinate,
    summary_value,
)
from .inference import RobustCI, matched_pair_variance, t_stat
from .misspec import Perturbation
from .perturb import perturb_report
from .regression import (
    ConstantOnlyMap,
    IdentityMap,
    IndexMap,
    LinearPropensityMap,
    StrataMap,
    fit_ols,
    induced_index_refit,
)
from .report import (
    SCHEMA_VERSION,
    dumps_report,
    fit_block,
    imbalance_block,
    loads_report,
    meta_block,
    support_block,
)
from .sample import CsvSchema, Sample, SubsampleHandle, empirical_cond, load_csv
from .server import serve_report


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="balancebounds")
    sub = ap.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="full pipeline: fit, design, balance, inference")
    an.add_argument("csv", help="input CSV with columns id,y,d,x1..xp")
    an.add_argument("--map", default="identity", choices=["identity", "index", "strata", "const"])
    an.add_argument("--index-coeffs", default=None, help="comma-separated index coefficients")
    an.add_argument("--strata-count", type=int, default=4)
    an.add_argument("--alpha", type=float, default=0.05)
    an.add_argument("--summaries", default="const,value",
                    help="comma list: const,value,x1..xp,neg-model")
    an.add_argument("--match", default="none", choices=["none", "nn"])
    an.add_argument("--metric", default=None, choices=[None, "index", "euclidean"])
    an.add_argument("--replacement", action="store_true")
    an.add_argument("--order", default="greedy", choices=["greedy", "treated-order"])
    an.add_argument("--caliper", type=float, default=None)
    an.add_argument("--subsample-file", default=None,
                    help="file with one unit id per line; overrides --match")
    an.add_argument("--null", type=float, action="append", default=None)
    an.add_argument("--eps", type=float, default=None, help="target bias precision for budgets")
    an.add_argument("--family", default="ks", choices=["ks", "mkw", "tv", "dr", "lp"])
    an.add_argument("--design-only", action="store_true", help="allow missing outcomes (no inference)")
    an.add_argument("--refit-propensity", action="store_true",
                    help="refit the propensity index within the subsample")
    an.add_argument("--out", default="report.json")
    an.add_argument("--outdir", default=None, help="directory for figures and CSV series")

    pe = sub.add_parser("perturb", help="evaluate a sketched perturbation against a report")
    pe.add_argument("--report", required=True)
    pe.add_argument("--perturbation", required=True, help="JSON file with {\"knots\": [...]}")
    pe.add_argument("--families", default=None, help="comma list of bound families")
    pe.add_argument("--alpha", type=float, default=None)
    pe.add_argument("--null", type=float, default=None)
    pe.add_argument("--out", default=None)

    si = sub.add_parser("simulate", help="desk-scale matching simulation")
    si.add_argument("--n1", type=int, default=50)
    si.add_argument("--n0", type=int, default=100)
    si.add_argument("--reps", type=int, default=100)
    si.add_argument("--seed", type=int, default=20240901)
    si.add_argument("--specs", default="A,B")
    si.add_argument("--outdir", default="simulation")

    se = sub.add_parser("serve", help="HTTP endpoints over a report")
    se.add_argument("--report", required=True)
    se.add_argument("--host", default="127.0.0.1")
    se.add_argument("--port", type=int, default=8787)

    orc = sub.add_parser("oracle", help="closed-form oracle outputs")
    orc_sub = orc.add_subparsers(dest="which", required=True)
    o1 = orc_sub.add_parser("example1")
    o1.add_argument("--p", type=float, required=True)
    o1.add_argument("--out", default=None)
    o2 = orc_sub.add_parser("example2")
    o2.add_argument("--csv-out", default=None)
    o2.add_argument("--out", default=None)
    return ap


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _make_map(args, sample: Sample):
    if args.map == "const":
        return ConstantOnlyMap()
    if args.map == "identity":
        return IdentityMap(p=sample.p)
    if args.map == "index":
        if args.index_coeffs:
            coeffs = tuple(float(v) for v in args.index_coeffs.split(","))
            if len(coeffs) != sample.p:
                raise ValidationError(
                    f"--index-coeffs has {len(coeffs)} entries for p={sample.p}"
                )
            return IndexMap(coefficients=coeffs)
        base = fit_ols(sample, IdentityMap(p=sample.p))
        if not np.any(base.gamma != 0.0):
            raise NumericError("cannot induce an index: all covariate coefficients are zero")
        return IndexMap(coefficients=tuple(float(g) for g in base.gamma))
    if args.map == "strata":
        pmap = LinearPropensityMap.fit(sample.design_view())
        scores = sorted(pmap.index_value(u.x) for u in sample.units if u.d == 0)
        qs = [scores[int(len(scores) * k / args.strata_count)] for k in range(1, args.strata_count)]
        cutpoints = tuple(sorted(set(qs)))
        if not cutpoints:
            raise ValidationError("strata cutpoints degenerate: control scores identical")
        return StrataMap(cutpoints=cutpoints, index=pmap)
    raise ValidationError(f"unknown map {args.map!r}")


def _reduction_index(cmap, fit, sample: Sample):
    """Scalar index used for pushforward distributions and matching."""
    if cmap.is_scalar_index:
        return cmap
    if fit is not None and np.any(fit.gamma != 0.0):
        return IndexMap(coefficients=tuple(float(g) for g in fit.gamma), base=cmap)
    if sample.p == 1:
        return IdentityMap(p=1)
    return None


def _make_summaries(tokens: list[str], index, model_line) -> SummarySet:
    out = []
    for tok in tokens:
        tok = tok.strip()
        if not tok:
            continue
        if tok == "const":
            out.append(summary_constant())
        elif tok == "value":
            out.append(summary_value())
        elif tok == "neg-model":
            out.append(summary_clipped_negative_line(model_line[0], model_line[1]))
        elif tok.startswith("x") and tok[1:].isdigit():
            out.append(summary_coordinate(int(tok[1:]) - 1))
        else:
            raise ValidationError(f"unknown summary token {tok!r}")
    if not out:
        raise ValidationError("no summaries requested")
    return SummarySet(tuple(out))


def _load_subsample(path: str, sample: Sample) -> SubsampleHandle:
    ids = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    return SubsampleHandle(parent=sample, member_ids=tuple(ids),
                           provenance={"method": "file", "path": str(path)})


def cmd_analyze(args) -> int:
    schema = CsvSchema(design_only=args.design_only)
    sample = load_csv(args.csv, schema)
    cmap = _make_map(args, sample)
    fit_full = None if args.design_only else fit_ols(sample, cmap)
    index = _reduction_index(cmap, fit_full, sample)

    handle = None
    if args.subsample_file:
        handle = _load_subsample(args.subsample_file, sample)
    elif args.match == "nn":
        metric = args.metric or ("index" if index is not None else "euclidean")
        if metric == "index" and index is None:
            raise ValidationError("no scalar index available for index matching")
        spec = MatchSpec(metric=metric, index_map=index, replacement=args.replacement,
                         order=args.order, caliper=args.caliper)
        handle = nn_match(sample.design_view(), spec)

    analysis = handle if handle is not None else sample
    if args.refit_propensity and handle is not None and isinstance(cmap, StrataMap):
        cmap = _make_map(args, handle.as_sample())
    fit = None if args.design_only else fit_ols(analysis, cmap)

    # index-level model line for the support block
    model_line = (0.0, 0.0)
    fit_induced = None
    if fit is not None and index is not None:
        if cmap.is_scalar_index:
            model_line = (fit.alpha, float(fit.gamma[0]) if fit.gamma.size else 0.0)
            fit_induced = fit
        elif fit.gamma.size and np.any(fit.gamma != 0.0):
            fit_induced = induced_index_refit(analysis, fit)
            model_line = (fit_induced.alpha, float(fit_induced.gamma[0]))
        else:
            # constant-only model: flat line at the intercept
            model_line = (fit.alpha, 0.0)

    rset = _make_summaries(args.summaries.split(","), index, model_line)

    g1 = empirical_cond(analysis, 1, index)
    g0 = empirical_cond(analysis, 0, index)
    c_vec = compute_imbalance(g1, g0, rset=rset)

    report = {
        "schema_version": SCHEMA_VERSION,
        "meta": meta_block("analyze", {k: v for k, v in vars(args).items() if k != "command"}),
        "data": {
            "path": str(args.csv),
            "n": sample.n,
            "p": sample.p,
            "n_treated": len(sample.arm(1)),
            "n_control": len(sample.arm(0)),
            "design_only": sample.design_only,
        },
        "imbalance": imbalance_block(c_vec),
    }
    if fit is not None:
        report["fit"] = fit_block(fit)
    if handle is not None:
        report["design"] = {
            "provenance": handle.provenance,
            "pairs": handle.provenance.get("pairs", []),
            "n_pre": sample.n,
            "n_post": handle.n,
        }
        table = balance_compare(sample, handle, index=index, rset=rset)
        report["balance"] = table.to_json_dict()
    if index is not None:
        report["support"] = support_block(
            g1, g0, index_label="index" if sample.p > 1 else "x",
            model_intercept=model_line[0], model_slope=model_line[1], rset=rset,
        )
    if args.eps is not None:
        report["bounds"] = assemble_bounds(c_vec, None, eps=args.eps).to_json_dict()

    nulls = args.null if args.null is not None else [0.0]
    inference = None
    if fit is not None:
        var = matched_pair_variance(analysis, fit if fit_induced is None else fit_induced)
        fam_c = {"ks": c_vec.ks, "mkw": c_vec.w1, "tv": c_vec.tv, "dr": c_vec.dr,
                 "lp": c_vec.lp[1] if c_vec.lp else None}[args.family]
        if fam_c is None:
            raise ValidationError(
                f"family {args.family!r} has no scalar c here; choose another family"
            )
        ci = RobustCI(beta_hat=fit.beta, se=var.se_beta, c=float(fam_c), alpha=args.alpha)
        m_values = {}
        t_stats = {}
        for null in nulls:
            mv = ci.m_value(null)
            m_values[repr(null)] = None if math.isinf(mv) else mv
            # a zero standard error (noiseless outcomes) has no t-statistic
            t_stats[repr(null)] = t_stat(fit, var, null) if var.se_beta > 0 else None
        inference = {
            "beta_hat": fit.beta,
            "se": var.se_beta,
            "alpha": args.alpha,
            "family": args.family,
            "c": float(fam_c),
            "trapezoid": ci.grid(),
            "m_values": m_values,
            "t_stats": t_stats,
        }
        report["inference"] = inference

    out_path = Path(args.out)
    out_path.write_text(dumps_report(report))

    outdir = Path(args.outdir) if args.outdir else out_path.parent / "report_files"
    _emit_analyze_files(report, outdir)
    print(f"report written to {out_path}")
    return 0


def _emit_analyze_files(report: dict, outdir: Path):
    from . import figures

    outdir.mkdir(parents=True, exist_ok=True)
    inference = report.get("inference")
    if inference is not None:
        fam = inference["family"]
        grid = inference["trapezoid"]
        with open(outdir / f"trapezoid_{fam}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "lo", "hi"])
            for row in grid:
                w.writerow([row["m"], row["lo"], row["hi"]])
        marks = {f"m-value({k})": v for k, v in inference["m_values"].items()}
        figures.render_trapezoid(grid, fam, outdir / f"trapezoid_{fam}.png", m_marks=marks)
    balance = report.get("balance")
    if balance is not None:
        with open(outdir / "balance.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "pre", "post"])
            for key in ("ks", "w1", "tv", "dr"):
                w.writerow([key, balance["pre"][key], balance["post"][key]])
    design = report.get("design")
    if design is not None:
        with open(outdir / "pairs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["treated_id", "control_id", "distance"])
            for pair in design.get("pairs", []):
                w.writerow([pair["treated_id"], pair["control_id"], pair["distance"]])
    support = report.get("support")
    if support is not None:
        figures.render_model_support(support, outdir / "model_support.png")
        if report.get("balance") is not None:
            # rebuild pre/post arm blocks for the ECDF panels
            pre = {"arm1": support["arm1"], "arm0": support["arm0"]}
            figures.render_balance(pre, None, outdir / "balance_ecdf.png")


# ---------------------------------------------------------------------------
# other commands
# ---------------------------------------------------------------------------


def cmd_perturb(args) -> int:
    report = loads_report(Path(args.report).read_text())
    pert = Perturbation.from_json_dict(json.loads(Path(args.perturbation).read_text()))
    families = args.families.split(",") if args.families else None
    out = perturb_report(report, pert, families=families, alpha=args.alpha, null_tau=args.null)
    text = json.dumps(out, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"perturbation verdicts written to {args.out}")
    else:
        print(text)
    return 0


def cmd_simulate(args) -> int:
    from . import figures

    seed = int(os.environ["BB_SEED"]) if os.environ.get("BB_SEED") else args.seed
    plan = SimPlan(
        n1=args.n1, n0=args.n0, replications=args.reps, seed=seed,
        specs=tuple(s.strip() for s in args.specs.split(",") if s.strip()),
    )
    rows = run_simulation(plan)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "replications.csv").write_text(simulation_csv(rows))
    figures.render_sim_bias(rows, outdir / "sim_bias.png")
    figures.render_sim_mc(rows, "ks", outdir / "sim_mc_ks.png")
    ok = [r for r in rows if not r["skipped"]]
    summary = {
        "plan": {"n1": plan.n1, "n0": plan.n0, "replications": plan.replications,
                 "seed": plan.seed, "specs": list(plan.specs)},
        "skipped": len(rows) - len(ok),
        "improved_share": {
            spec: float(np.mean([
                abs(r["bias_post"]) < abs(r["bias_pre"])
                for r in ok if r["spec"] == spec
            ]))
            for spec in plan.specs
        },
    }
    (outdir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_serve(args) -> int:
    report = loads_report(Path(args.report).read_text())
    httpd = serve_report(report, host=args.host, port=args.port)
    print(f"serving report on http://{args.host}:{httpd.server_address[1]}")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


def cmd_oracle(args) -> int:
    if args.which == "example1":
        record = example1_oracle(args.p).to_json_dict()
        text = json.dumps(record, sort_keys=True, indent=2)
        if args.out:
            Path(args.out).write_text(text)
        else:
            print(text)
        return 0
    sample, handle, dgp = example2_dataset()
    if args.csv_out:
        Path(args.csv_out).write_text(example2_csv())
        print(f"dataset written to {args.csv_out}")
    g1 = empirical_cond(sample, 1)
    g0 = empirical_cond(sample, 0)
    h1 = empirical_cond(handle, 1)
    h0 = empirical_cond(handle, 0)
    pre = compute_imbalance(g1, g0)
    post = compute_imbalance(h1, h0)
    record = {
        "n": sample.n,
        "subsample_ids": list(handle.member_ids),
        "pre": pre.to_json_dict(),
        "post": post.to_json_dict(),
    }
    text = json.dumps(record, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "analyze": cmd_analyze,
        "perturb": cmd_perturb,
        "simulate": cmd_simulate,
        "serve": cmd_serve,
        "oracle": cmd_oracle,
    }
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
