"""HTTP serve mode: read-only JSON endpoints over an immutable report.

    GET  /api/report                      the validated report
    GET  /api/trapezoid?family=&alpha=    interval endpoints over an m grid
    POST /api/perturb                     evaluate a sketched perturbation

Handlers share no mutable state; concurrent requests are independent. CORS is
open so a local browser client can call the API directly.
"""
from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .errors import ValidationError
from .inference import RobustCI
from .perturb import perturb_response_bytes
from .report import validate_report

_FAMILY_C_KEY = {"ks": "ks", "mkw": "w1", "tv": "tv", "dr": "dr"}


def trapezoid_payload(report: dict, family: str, alpha: float) -> dict:
    inference = report.get("inference")
    if inference is None:
        raise ValidationError("report has no inference section")
    if family == "lp":
        lp = report["imbalance"]["c"].get("lp")
        c = lp[1] if lp else None
    else:
        key = _FAMILY_C_KEY.get(family)
        if key is None:
            raise ValidationError(f"unknown trapezoid family {family!r}")
        c = report["imbalance"]["c"].get(key)
    if c is None:
        raise ValidationError(f"report has no scalar c for family {family!r}")
    ci = RobustCI(
        beta_hat=float(inference["beta_hat"]),
        se=float(inference["se"]),
        c=float(c),
        alpha=alpha,
    )
    return {
        "family": family,
        "alpha": alpha,
        "c": float(c),
        "beta_hat": ci.beta_hat,
        "se": ci.se,
        "grid": ci.grid(),
    }


def make_handler(report: dict):
    report_bytes = json.dumps(report, sort_keys=True).encode("utf-8")

    class Handler(BaseHTTPRequestHandler):
        server_version = "balancebounds"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, code: int, payload: bytes):
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()
            self.wfile.write(payload)

        def _error(self, code: int, reason: str):
            self._send(code, json.dumps({"error": reason}).encode("utf-8"))

        def do_OPTIONS(self):
            self._send(204, b"")

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/api/report":
                self._send(200, report_bytes)
                return
            if url.path == "/api/trapezoid":
                qs = parse_qs(url.query)
                family = qs.get("family", ["ks"])[0]
                try:
                    alpha = float(qs.get("alpha", ["0.05"])[0])
                    payload = trapezoid_payload(report, family, alpha)
                except (ValidationError, ValueError) as exc:
                    self._error(400, str(exc))
                    return
                self._send(200, json.dumps(payload, sort_keys=True).encode("utf-8"))
                return
            self._error(404, f"unknown path {url.path!r}")

        def do_POST(self):
            url = urlparse(self.path)
            if url.path != "/api/perturb":
                self._error(404, f"unknown path {url.path!r}")
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
                if not isinstance(body, dict):
                    raise ValidationError("body must be a JSON object")
                payload = perturb_response_bytes(report, body)
            except (ValidationError, json.JSONDecodeError) as exc:
                self._error(400, str(exc))
                return
            self._send(200, payload)

    return Handler


def serve_report(report: dict, host: str = "127.0.0.1", port: int = 8787) -> ThreadingHTTPServer:
    """Validate the report and return a ready ThreadingHTTPServer; the caller
    decides between serve_forever and a background thread."""
    validate_report(report)
    return ThreadingHTTPServer((host, port), make_handler(report))
