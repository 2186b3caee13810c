// Pure rendering: API responses in, HTML/SVG strings out. Rendering the same
// response twice yields identical markup, and every number shown comes from
// the response object.

import { fmt, fmtInterval, fmtVector } from "./format.js";
import { PerturbResponse, TrapezoidResponse } from "./types.js";

const FAMILY_LABELS: Record<string, string> = {
  ks: "distribution gap (KS)",
  mkw: "transport (W1)",
  tv: "total variation",
  dr: "density ratio (L2)",
  md: "mean differences",
  lp: "Levy-Prokhorov (sandwich)",
};

export function renderVerdictPanel(resp: PerturbResponse): string {
  const rows = Object.keys(resp.families)
    .sort()
    .map((fam) => {
      const e = resp.families[fam];
      const verdictClass = e.verdict === "sustained" ? "ok" : "warn";
      return (
        `<tr data-family="${fam}">` +
        `<td>${FAMILY_LABELS[fam] ?? fam}</td>` +
        `<td class="num" data-field="m">${fmtVector(e.m)}</td>` +
        `<td class="num" data-field="c">${fmtVector(e.c)}</td>` +
        `<td class="num" data-field="bound">${fmt(e.bound)}</td>` +
        `<td class="num" data-field="interval">${fmtInterval(e.interval)}</td>` +
        `<td class="num" data-field="m_value">${fmt(e.m_value)}</td>` +
        `<td class="${verdictClass}" data-field="verdict">${e.verdict ?? "–"}</td>` +
        `</tr>`
      );
    });
  const missing = Object.entries(resp.unavailable)
    .sort()
    .map(([fam, reason]) => `<li><b>${fam}</b>: ${reason}</li>`);
  return (
    `<table class="verdicts"><thead><tr>` +
    `<th>family</th><th>m</th><th>c</th><th>bound</th>` +
    `<th>interval C(m)</th><th>m-value</th><th>verdict</th>` +
    `</tr></thead><tbody>${rows.join("")}</tbody></table>` +
    (missing.length ? `<ul class="unavailable">${missing.join("")}</ul>` : "")
  );
}

export interface TrapezoidGeometry {
  width: number;
  height: number;
  pad: number;
}

const GEO: TrapezoidGeometry = { width: 460, height: 300, pad: 40 };

export function renderTrapezoidSvg(
  tz: TrapezoidResponse,
  mCurrent: number | null,
  nullValue: number | null,
  geo: TrapezoidGeometry = GEO,
): string {
  const grid = tz.grid;
  const ms = grid.map((g) => g.m);
  const los = grid.map((g) => g.lo);
  const his = grid.map((g) => g.hi);
  const mMax = Math.max(...ms);
  const yMin = Math.min(...los, nullValue ?? Infinity);
  const yMax = Math.max(...his, nullValue ?? -Infinity);
  const xscale = (m: number) => geo.pad + ((geo.width - 2 * geo.pad) * m) / (mMax || 1);
  const yscale = (v: number) =>
    geo.height - geo.pad - ((geo.height - 2 * geo.pad) * (v - yMin)) / (yMax - yMin || 1);

  const upper = grid.map((g) => `${xscale(g.m)},${yscale(g.hi)}`);
  const lower = [...grid].reverse().map((g) => `${xscale(g.m)},${yscale(g.lo)}`);
  const polygon = [...upper, ...lower].join(" ");

  let cursor = "";
  if (mCurrent !== null && Number.isFinite(mCurrent)) {
    const x = xscale(Math.min(mCurrent, mMax));
    const clippedClass = mCurrent > mMax ? " clipped" : "";
    cursor =
      `<line class="cursor${clippedClass}" x1="${x}" y1="${geo.pad}" x2="${x}" ` +
      `y2="${geo.height - geo.pad}"></line>` +
      `<text class="cursor-label" x="${x}" y="${geo.pad - 6}">m = ${fmt(mCurrent)}</text>`;
  }
  let nullLine = "";
  if (nullValue !== null && Number.isFinite(nullValue)) {
    const y = yscale(nullValue);
    nullLine =
      `<line class="null" x1="${geo.pad}" y1="${y}" x2="${geo.width - geo.pad}" y2="${y}"></line>` +
      `<text class="null-label" x="${geo.width - geo.pad + 4}" y="${y}">${fmt(nullValue)}</text>`;
  }
  return (
    `<svg viewBox="0 0 ${geo.width} ${geo.height}" class="trapezoid" data-family="${tz.family}">` +
    `<polygon class="band" points="${polygon}"></polygon>` +
    nullLine +
    cursor +
    `<text class="axis" x="${geo.width / 2}" y="${geo.height - 8}">allowed misspecification m ` +
    `(family ${tz.family}, c = ${fmt(tz.c)})</text>` +
    `</svg>`
  );
}

export function extractNumbers(markup: string): string[] {
  const matches = markup.match(/-?\d+(?:\.\d+)?(?:e[+-]?\d+)?/gi);
  return matches ?? [];
}
