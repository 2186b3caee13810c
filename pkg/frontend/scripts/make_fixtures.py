#!/usr/bin/env python3
"""Generate recorded API fixtures for the frontend tests by running the real
backend: an analyze report for the binary toy population at p = 0.1 and the
serve-mode perturbation responses for two scripted sketches.

Run from the repository root:  python3 frontend/scripts/make_fixtures.py
"""
import json
from pathlib import Path

from balancebounds.cli import main as cli_main
from balancebounds.perturb import perturb_response_bytes
from balancebounds.report import loads_report

HERE = Path(__file__).resolve().parent
FIXTURES = HERE.parent / "test" / "fixtures"
P = 0.1


def toy_csv(path: Path):
    # empirical sample matching the toy population exactly at p = 0.1:
    # joint masses 0.4/0.1/0.1/0.4 over (x,d) in {0,1}^2, outcomes y = f(x,d)
    counts = {(0, 0): 8, (1, 0): 2, (0, 1): 2, (1, 1): 8}
    lines = ["id,y,d,x1"]
    i = 0
    for (x, d), n in counts.items():
        y = d + d * x + x
        for _ in range(n):
            lines.append(f"u{i},{y},{d},{x}")
            i += 1
    path.write_text("\n".join(lines) + "\n")


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    csv_path = HERE / "_toy.csv"
    report_path = FIXTURES / "example1_report.json"
    toy_csv(csv_path)
    code = cli_main([
        "analyze", str(csv_path), "--map", "const",
        "--alpha", "0.05", "--null", "0",
        "--out", str(report_path), "--outdir", str(HERE / "_files"),
    ])
    assert code == 0, "analyze failed"
    report = loads_report(report_path.read_text())

    # spec-A sketch: the gap between the truth at d=0 (y = x) and the fitted
    # intercept 2p, tabulated on the support {0, 1}
    sketch_a = {
        "knots": [{"t": 0.0, "h": -2 * P}, {"t": 1.0, "h": 1 - 2 * P}],
        "families": ["ks", "mkw", "tv", "dr", "md"],
        "alpha": 0.05,
        "null": 0.0,
    }
    (FIXTURES / "example1_sketch_a.json").write_text(json.dumps(sketch_a, indent=2))
    resp = perturb_response_bytes(report, sketch_a)
    (FIXTURES / "example1_perturb_a.json").write_bytes(resp)

    flat = {"knots": [{"t": 0.0, "h": 0.0}, {"t": 1.0, "h": 0.0}],
            "families": ["ks", "mkw", "tv", "dr", "md"], "alpha": 0.05, "null": 0.0}
    (FIXTURES / "example1_sketch_flat.json").write_text(json.dumps(flat, indent=2))
    (FIXTURES / "example1_perturb_flat.json").write_bytes(
        perturb_response_bytes(report, flat)
    )
    csv_path.unlink()
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
