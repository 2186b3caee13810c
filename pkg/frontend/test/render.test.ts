import { readFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { fmt } from "../src/format.js";
import { extractNumbers, renderTrapezoidSvg, renderVerdictPanel } from "../src/render.js";
import { PerturbResponse, TrapezoidResponse } from "../src/types.js";

const FIXTURES = join(__dirname, "fixtures");

function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

function collectNumbers(value: unknown, out: number[] = []): number[] {
  if (typeof value === "number") out.push(value);
  else if (Array.isArray(value)) value.forEach((v) => collectNumbers(v, out));
  else if (value && typeof value === "object") {
    Object.values(value).forEach((v) => collectNumbers(v, out));
  }
  return out;
}

describe("verdict panel", () => {
  const resp = fixture<PerturbResponse>("example1_perturb_a.json");

  it("is deterministic: same response, identical markup", () => {
    expect(renderVerdictPanel(resp)).toBe(renderVerdictPanel(resp));
  });

  it("displays only numbers that exist in the API response", () => {
    const html = renderVerdictPanel(resp);
    const allowed = new Set(collectNumbers(resp).map((v) => fmt(v)));
    for (const numText of extractNumbers(html)) {
      expect(allowed.has(fmt(Number(numText)))).toBe(true);
    }
  });

  it("shows zero bounds and no overturn for the flat sketch", () => {
    const flat = fixture<PerturbResponse>("example1_perturb_flat.json");
    const html = renderVerdictPanel(flat);
    expect(html).not.toContain("overturned");
    for (const fam of Object.values(flat.families)) {
      expect(fam.bound).toBe(0);
    }
  });
});

describe("trapezoid", () => {
  const tz: TrapezoidResponse = {
    family: "ks",
    alpha: 0.05,
    c: 0.6,
    beta_hat: 2.4,
    se: 0.0,
    grid: [
      { m: 0, lo: 2.4, hi: 2.4 },
      { m: 1, lo: 1.8, hi: 3.0 },
      { m: 2, lo: 1.2, hi: 3.6 },
    ],
  };

  it("marks the current sketch magnitude with a cursor", () => {
    const svg = renderTrapezoidSvg(tz, 1.0, 0.0);
    expect(svg).toContain('class="cursor"');
    expect(svg).toContain(`m = ${fmt(1.0)}`);
    expect(renderTrapezoidSvg(tz, 1.0, 0.0)).toBe(svg);
  });

  it("clips an out-of-range cursor and omits it when absent", () => {
    expect(renderTrapezoidSvg(tz, 5.0, null)).toContain("clipped");
    expect(renderTrapezoidSvg(tz, null, null)).not.toContain("cursor");
  });
});
