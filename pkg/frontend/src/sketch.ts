// Canvas knot editor: the reader drags perturbation knots over the index
// axis, anchored by the support rug of both arms. Drawing is imperative; the
// coordinate transforms are exported pure functions.

import { SketchState, addKnot, moveKnot, removeKnot } from "./state.js";
import { ReportSupport } from "./types.js";

export interface Viewport {
  width: number;
  height: number;
  pad: number;
  tMin: number;
  tMax: number;
  hMax: number; // vertical half-range of the deviation axis
}

export function makeViewport(support: ReportSupport, width = 640, height = 320): Viewport {
  const ts = [...support.arm1.t, ...support.arm0.t];
  const tMin = Math.min(...ts);
  const tMax = Math.max(...ts);
  const span = tMax - tMin || 1;
  return {
    width,
    height,
    pad: 32,
    tMin: tMin - 0.05 * span,
    tMax: tMax + 0.05 * span,
    hMax: 1.0,
  };
}

export function dataToPixel(vp: Viewport, t: number, h: number): [number, number] {
  const x = vp.pad + ((vp.width - 2 * vp.pad) * (t - vp.tMin)) / (vp.tMax - vp.tMin);
  const y = vp.height / 2 - (h / vp.hMax) * (vp.height / 2 - vp.pad);
  return [x, y];
}

export function pixelToData(vp: Viewport, x: number, y: number): [number, number] {
  const t = vp.tMin + ((x - vp.pad) / (vp.width - 2 * vp.pad)) * (vp.tMax - vp.tMin);
  const h = ((vp.height / 2 - y) / (vp.height / 2 - vp.pad)) * vp.hMax;
  return [t, h];
}

export function hitKnot(vp: Viewport, state: SketchState, x: number, y: number, radius = 9): number {
  for (let i = 0; i < state.knots.length; i++) {
    const [kx, ky] = dataToPixel(vp, state.knots[i].t, state.knots[i].h);
    if ((kx - x) ** 2 + (ky - y) ** 2 <= radius * radius) return i;
  }
  return -1;
}

export function drawSketch(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  support: ReportSupport,
  state: SketchState,
): void {
  ctx.clearRect(0, 0, vp.width, vp.height);

  // deviation-from-model baseline (the researcher's model is h = 0)
  ctx.strokeStyle = "#555";
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.moveTo(...dataToPixel(vp, vp.tMin, 0));
  ctx.lineTo(...dataToPixel(vp, vp.tMax, 0));
  ctx.stroke();
  ctx.setLineDash([]);

  // support rug for both arms
  for (const [pts, color, len] of [
    [support.arm1.t, "#c0392b", 12],
    [support.arm0.t, "#2471a3", 7],
  ] as [number[], string, number][]) {
    ctx.strokeStyle = color;
    for (const t of pts) {
      const [x] = dataToPixel(vp, t, 0);
      ctx.beginPath();
      ctx.moveTo(x, vp.height - vp.pad);
      ctx.lineTo(x, vp.height - vp.pad - len);
      ctx.stroke();
    }
  }

  // the sketched perturbation: linear between knots, constant beyond
  ctx.strokeStyle = "#1a7f37";
  ctx.lineWidth = 2;
  ctx.beginPath();
  const first = state.knots[0];
  const last = state.knots[state.knots.length - 1];
  ctx.moveTo(...dataToPixel(vp, vp.tMin, first.h));
  for (const k of state.knots) ctx.lineTo(...dataToPixel(vp, k.t, k.h));
  ctx.lineTo(...dataToPixel(vp, vp.tMax, last.h));
  ctx.stroke();
  ctx.lineWidth = 1;

  for (const k of state.knots) {
    const [x, y] = dataToPixel(vp, k.t, k.h);
    ctx.fillStyle = "#1a7f37";
    ctx.beginPath();
    ctx.arc(x, y, 5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

export interface SketchEditor {
  getState(): SketchState;
  setState(state: SketchState): void;
}

export function attachSketchEditor(
  canvas: HTMLCanvasElement,
  support: ReportSupport,
  initial: SketchState,
  onChange: (state: SketchState) => void,
): SketchEditor {
  const vp = makeViewport(support, canvas.width, canvas.height);
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");
  let state = initial;
  let dragging = -1;

  const redraw = () => drawSketch(ctx, vp, support, state);
  const update = (next: SketchState) => {
    state = next;
    redraw();
    onChange(state);
  };

  const pos = (e: MouseEvent): [number, number] => {
    const rect = canvas.getBoundingClientRect();
    return [e.clientX - rect.left, e.clientY - rect.top];
  };

  canvas.addEventListener("mousedown", (e) => {
    const [x, y] = pos(e);
    dragging = hitKnot(vp, state, x, y);
    e.preventDefault();
  });
  canvas.addEventListener("mousemove", (e) => {
    if (dragging < 0) return;
    const [x, y] = pos(e);
    const [t, h] = pixelToData(vp, x, y);
    update(moveKnot(state, dragging, t, h));
  });
  window.addEventListener("mouseup", () => {
    dragging = -1;
  });
  canvas.addEventListener("dblclick", (e) => {
    const [x, y] = pos(e);
    const [t, h] = pixelToData(vp, x, y);
    update(addKnot(state, t, h));
  });
  canvas.addEventListener("contextmenu", (e) => {
    e.preventDefault();
    const [x, y] = pos(e);
    const idx = hitKnot(vp, state, x, y);
    if (idx >= 0) update(removeKnot(state, idx));
  });

  redraw();
  return {
    getState: () => state,
    setState: (next) => update(next),
  };
}
