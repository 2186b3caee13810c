// Page bootstrap: load the report, mount the sketch editor over its index
// support, and wire sketch submissions to the verdict panel and the
// trapezoid. All displayed numbers come from API responses.

import { ApiClient, ApiError } from "./api.js";
import { fmt } from "./format.js";
import { renderTrapezoidSvg, renderVerdictPanel } from "./render.js";
import { attachSketchEditor } from "./sketch.js";
import { SketchState, canSubmit, initialState, toRequest, toggleFamily } from "./state.js";
import { ALL_FAMILIES, PerturbResponse, Report } from "./types.js";

const API_BASE = (window as { BB_API_BASE?: string }).BB_API_BASE ?? "http://127.0.0.1:8787";

function toast(message: string): void {
  const el = document.getElementById("toast");
  if (!el) return;
  el.textContent = message;
  el.classList.add("visible");
  window.setTimeout(() => el.classList.remove("visible"), 4000);
}

function currentM(resp: PerturbResponse, family: string): number | null {
  const entry = resp.families[family];
  if (!entry) return null;
  return Array.isArray(entry.m) ? null : entry.m;
}

async function refreshTrapezoid(
  api: ApiClient,
  state: SketchState,
  family: string,
  resp: PerturbResponse | null,
): Promise<void> {
  const target = document.getElementById("trapezoid");
  if (!target) return;
  try {
    const tz = await api.getTrapezoid(family, state.alpha);
    target.innerHTML = renderTrapezoidSvg(
      tz,
      resp ? currentM(resp, family) : null,
      state.nullValue,
    );
  } catch (err) {
    if (err instanceof ApiError) toast(`trapezoid unavailable: ${err.message}`);
  }
}

async function boot(): Promise<void> {
  const api = new ApiClient(API_BASE);
  let report: Report;
  try {
    report = await api.getReport();
  } catch (err) {
    toast(`cannot reach the report server at ${API_BASE}: ${String(err)}`);
    return;
  }
  const support = report.support;
  if (!support) {
    toast("report has no index-level support; sketching is unavailable");
    return;
  }

  const headline = document.getElementById("headline");
  if (headline && report.inference) {
    headline.textContent =
      `estimate ${fmt(report.inference.beta_hat)} (se ${fmt(report.inference.se)}), ` +
      `n = ${report.data.n}`;
  }

  let state = initialState([...support.arm1.t, ...support.arm0.t], ["ks", "mkw", "tv"]);
  let lastResponse: PerturbResponse | null = null;
  let trapezoidFamily = report.inference?.family ?? "ks";

  const canvas = document.getElementById("sketch") as HTMLCanvasElement | null;
  if (!canvas) return;
  const editor = attachSketchEditor(canvas, support, state, (next) => {
    state = next;
  });

  const familyBox = document.getElementById("families");
  if (familyBox) {
    familyBox.innerHTML = ALL_FAMILIES.map(
      (fam) =>
        `<label><input type="checkbox" data-family="${fam}" ` +
        `${state.families.includes(fam) ? "checked" : ""}/> ${fam}</label>`,
    ).join(" ");
    familyBox.addEventListener("change", (e) => {
      const box = e.target as HTMLInputElement;
      const fam = box.dataset.family;
      if (fam) {
        state = toggleFamily(state, fam);
        editor.setState(state);
      }
    });
  }

  const alphaInput = document.getElementById("alpha") as HTMLInputElement | null;
  const nullInput = document.getElementById("null") as HTMLInputElement | null;
  alphaInput?.addEventListener("change", () => {
    state = { ...state, alpha: Number(alphaInput.value) };
  });
  nullInput?.addEventListener("change", () => {
    state = { ...state, nullValue: Number(nullInput.value) };
  });

  const familySelect = document.getElementById("trapezoid-family") as HTMLSelectElement | null;
  familySelect?.addEventListener("change", () => {
    trapezoidFamily = familySelect.value;
    void refreshTrapezoid(api, state, trapezoidFamily, lastResponse);
  });

  document.getElementById("submit")?.addEventListener("click", async () => {
    state = editor.getState();
    if (!canSubmit(state)) {
      toast("pick at least one family and keep at least one knot");
      return;
    }
    try {
      const resp = await api.postPerturb(toRequest(state));
      lastResponse = resp;
      const panel = document.getElementById("verdicts");
      if (panel) panel.innerHTML = renderVerdictPanel(resp);
      await refreshTrapezoid(api, state, trapezoidFamily, resp);
    } catch (err) {
      if ((err as Error).name === "AbortError") return; // superseded sketch
      if (err instanceof ApiError) {
        toast(`server rejected the sketch: ${err.message}`);
      } else {
        toast(`network problem: ${String(err)}`);
      }
    }
  });

  await refreshTrapezoid(api, state, trapezoidFamily, null);
}

void boot();
