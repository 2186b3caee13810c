// Sketch state: the knots the reader drags over the index axis, the bound
// families to evaluate, and the test level/null. The editor keeps knot
// positions strictly increasing; submission needs at least one family.

import { Knot, PerturbRequest } from "./types.js";

const MIN_GAP = 1e-9;

export interface SketchState {
  knots: Knot[];
  families: string[];
  alpha: number;
  nullValue: number;
}

export function initialState(support: number[], families: string[]): SketchState {
  const lo = Math.min(...support);
  const hi = Math.max(...support);
  return {
    knots: [
      { t: lo, h: 0 },
      { t: hi, h: 0 },
    ],
    families: [...families],
    alpha: 0.05,
    nullValue: 0,
  };
}

function sortedStrictly(knots: Knot[]): boolean {
  return knots.every((k, i) => i === 0 || knots[i - 1].t < k.t);
}

export function addKnot(state: SketchState, t: number, h: number): SketchState {
  if (state.knots.some((k) => Math.abs(k.t - t) < MIN_GAP)) {
    return state; // would collide with an existing knot
  }
  const knots = [...state.knots, { t, h }].sort((a, b) => a.t - b.t);
  return { ...state, knots };
}

export function moveKnot(state: SketchState, index: number, t: number, h: number): SketchState {
  if (index < 0 || index >= state.knots.length) return state;
  const prev = state.knots[index - 1];
  const next = state.knots[index + 1];
  let clamped = t;
  if (prev !== undefined) clamped = Math.max(clamped, prev.t + MIN_GAP);
  if (next !== undefined) clamped = Math.min(clamped, next.t - MIN_GAP);
  const knots = state.knots.map((k, i) => (i === index ? { t: clamped, h } : k));
  if (!sortedStrictly(knots)) return state;
  return { ...state, knots };
}

export function removeKnot(state: SketchState, index: number): SketchState {
  if (state.knots.length <= 1) return state; // keep at least one knot
  return { ...state, knots: state.knots.filter((_, i) => i !== index) };
}

export function toggleFamily(state: SketchState, family: string): SketchState {
  const families = state.families.includes(family)
    ? state.families.filter((f) => f !== family)
    : [...state.families, family];
  return { ...state, families };
}

export function canSubmit(state: SketchState): boolean {
  return state.knots.length >= 1 && state.families.length >= 1 && sortedStrictly(state.knots);
}

export function toRequest(state: SketchState): PerturbRequest {
  return {
    knots: state.knots.map((k) => ({ t: k.t, h: k.h })),
    families: [...state.families],
    alpha: state.alpha,
    null: state.nullValue,
  };
}
