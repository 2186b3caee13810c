// Thin client for the report server. At most one perturbation request is in
// flight: submitting a newer sketch aborts the older request.

import { PerturbRequest, PerturbResponse, Report, TrapezoidResponse } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let reason = resp.statusText;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) reason = body.error;
    } catch {
      // keep the status text
    }
    throw new ApiError(resp.status, reason);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  private inflight: AbortController | null = null;

  constructor(
    private base: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async getReport(): Promise<Report> {
    return asJson<Report>(await this.fetchFn(`${this.base}/api/report`));
  }

  async getTrapezoid(family: string, alpha: number): Promise<TrapezoidResponse> {
    const url = `${this.base}/api/trapezoid?family=${encodeURIComponent(family)}&alpha=${alpha}`;
    return asJson<TrapezoidResponse>(await this.fetchFn(url));
  }

  async postPerturb(req: PerturbRequest): Promise<PerturbResponse> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const resp = await this.fetchFn(`${this.base}/api/perturb`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(req),
        signal: controller.signal,
      });
      return await asJson<PerturbResponse>(resp);
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }
}
