"""Matplotlib rendering of report figures: trapezoid graphs of the
robustified interval, pre/post balance ECDFs, the model line over the index
support, and simulation scatters. Every figure is written next to its
delimited data series.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_trapezoid(grid: list[dict], family: str, path, m_marks: dict | None = None):
    """The interval C(m) as a shaded trapezoid over the misspecification
    axis; optional vertical cursors at named m values."""
    ms = [g["m"] for g in grid]
    lo = [g["lo"] for g in grid]
    hi = [g["hi"] for g in grid]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.fill_between(ms, lo, hi, alpha=0.25, color="tab:blue")
    ax.plot(ms, lo, color="tab:blue", lw=1.2)
    ax.plot(ms, hi, color="tab:blue", lw=1.2)
    ax.axhline(0.0, color="0.4", lw=0.8, ls=":")
    for label, m in (m_marks or {}).items():
        if m is not None and np.isfinite(m) and ms[0] <= m <= ms[-1]:
            ax.axvline(m, color="tab:red", lw=1.0, ls="--")
            ax.annotate(label, (m, max(hi)), fontsize=8, color="tab:red",
                        textcoords="offset points", xytext=(3, -10))
    ax.set_xlabel("allowed misspecification m")
    ax.set_ylabel("interval endpoints")
    ax.set_title(f"robustified interval, {family} family")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _ecdf_steps(t, mass):
    order = np.argsort(t)
    return np.asarray(t)[order], np.cumsum(np.asarray(mass)[order])


def render_balance(pre: dict, post: dict | None, path):
    """Arm ECDFs at the index level, before and (when present) after the
    design step."""
    ncols = 2 if post is not None else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5.2 * ncols, 3.6), squeeze=False)
    panels = [("full sample", pre)] + ([("subsample", post)] if post is not None else [])
    for ax, (title, block) in zip(axes[0], panels):
        for key, color, label in (("arm1", "tab:red", "treated"), ("arm0", "tab:blue", "untreated")):
            t, c = _ecdf_steps(block[key]["t"], block[key]["mass"])
            ax.step(t, c, where="post", color=color, label=label)
        ax.set_title(title)
        ax.set_xlabel("index value")
        ax.set_ylabel("ECDF")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_model_support(support: dict, path):
    """The fitted model line at d = 0 with the support rug of both arms."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    line = support["model_line"]
    t_all = sorted(set(support["arm1"]["t"]) | set(support["arm0"]["t"]))
    ts = np.linspace(min(t_all), max(t_all), 100)
    ax.plot(ts, line["intercept"] + line["slope"] * ts, color="0.2", label="model at d=0")
    ax.plot(support["arm1"]["t"], np.zeros(len(support["arm1"]["t"])), "|",
            color="tab:red", ms=14, label="treated support")
    ax.plot(support["arm0"]["t"], np.zeros(len(support["arm0"]["t"])), "|",
            color="tab:blue", ms=8, label="untreated support")
    ax.set_xlabel(support.get("index_label", "index"))
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sim_bias(rows: list[dict], path):
    """Pre vs post |bias| by specification, with the identity line."""
    specs = sorted({r["spec"] for r in rows if not r["skipped"]})
    fig, axes = plt.subplots(1, max(len(specs), 1), figsize=(4.0 * max(len(specs), 1), 3.6),
                             squeeze=False)
    for ax, spec in zip(axes[0], specs):
        sel = [r for r in rows if r["spec"] == spec and not r["skipped"]]
        pre = [abs(r["bias_pre"]) for r in sel]
        post = [abs(r["bias_post"]) for r in sel]
        lim = max(pre + post + [1e-6]) * 1.05
        ax.scatter(pre, post, s=12, alpha=0.6)
        ax.plot([0, lim], [0, lim], color="0.5", lw=0.8)
        ax.set_xlim(0, lim)
        ax.set_ylim(0, lim)
        ax.set_xlabel("|bias| before matching")
        ax.set_ylabel("|bias| after matching")
        ax.set_title(f"specification {spec}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sim_mc(rows: list[dict], family: str, path, eps_levels=(0.005, 0.01, 0.02)):
    """(c, m) scatter before/after matching with target-precision curves."""
    key_c = {"ks": "c_ks", "mkw": "c_w1", "tv": "c_tv", "dr": "c_dr"}[family]
    key_m = {"ks": "m_ks", "mkw": "m_mkw", "tv": "m_tv", "dr": "m_dr"}[family]
    specs = sorted({r["spec"] for r in rows if not r["skipped"]})
    fig, axes = plt.subplots(1, max(len(specs), 1), figsize=(4.0 * max(len(specs), 1), 3.6),
                             squeeze=False)
    for ax, spec in zip(axes[0], specs):
        sel = [r for r in rows if r["spec"] == spec and not r["skipped"]]
        cp = [r[f"{key_c}_pre"] for r in sel]
        mp = [r[f"{key_m}_pre"] for r in sel]
        cq = [r[f"{key_c}_post"] for r in sel]
        mq = [r[f"{key_m}_post"] for r in sel]
        ax.scatter(cp, mp, s=10, color="tab:red", alpha=0.5, label="full sample")
        ax.scatter(cq, mq, s=10, color="tab:blue", alpha=0.5, label="matched")
        cmax = max(cp + cq + [1e-6])
        mmax = max(mp + mq + [1e-6])
        cs = np.linspace(cmax * 1e-3, cmax, 200)
        for eps in eps_levels:
            ax.plot(cs, eps / cs, lw=0.7, color="0.6")
        ax.set_xlim(0, cmax * 1.05)
        ax.set_ylim(0, mmax * 1.05)
        ax.set_xlabel(f"imbalance c ({family})")
        ax.set_ylabel(f"misspecification m ({family})")
        ax.set_title(f"specification {spec}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
