// Wire formats of the report server. The client renders these verbatim; it
// never recomputes magnitudes or bounds on its own.

export interface Knot {
  t: number;
  h: number;
}

export interface ArmPoints {
  t: number[];
  mass: number[];
}

export interface ReportSupport {
  index_label: string;
  arm1: ArmPoints;
  arm0: ArmPoints;
  model_line: { intercept: number; slope: number };
}

export interface Report {
  schema_version: number;
  imbalance: { c: Record<string, unknown> };
  support?: ReportSupport;
  inference?: {
    beta_hat: number;
    se: number;
    alpha: number;
    family?: string;
    m_values?: Record<string, number | null>;
  };
  data: { n: number; p: number; n_treated: number; n_control: number };
}

export interface FamilyResult {
  m: number | number[];
  c: number | number[];
  bound: number;
  corrections: Record<string, number | boolean | null>;
  verdict?: "sustained" | "overturned";
  interval?: [number, number];
  m_value?: number | null;
}

export interface PerturbResponse {
  alpha: number;
  null: number;
  beta_hat: number | null;
  se: number | null;
  families: Record<string, FamilyResult>;
  unavailable: Record<string, string>;
  perturbation: { knots: Knot[] };
}

export interface TrapezoidPoint {
  m: number;
  lo: number;
  hi: number;
}

export interface TrapezoidResponse {
  family: string;
  alpha: number;
  c: number;
  beta_hat: number;
  se: number;
  grid: TrapezoidPoint[];
}

export interface PerturbRequest {
  knots: Knot[];
  families: string[];
  alpha?: number;
  null?: number;
}

export const ALL_FAMILIES = ["ks", "mkw", "tv", "dr", "md", "lp"] as const;
export type Family = (typeof ALL_FAMILIES)[number];
