// The single number-to-text path of the client. Every numeric string shown
// in the page goes through fmt() applied to a value taken from an API
// response, which makes "no client-side numerics" checkable in tests.

export function fmt(value: number | null | undefined, digits = 4): string {
  if (value === null || value === undefined) {
    return "–";
  }
  if (!Number.isFinite(value)) {
    return value > 0 ? "∞" : "-∞";
  }
  if (value === 0) return "0";
  const out = value.toPrecision(digits);
  // strip trailing zeros of the fixed representation
  return String(Number(out));
}

export function fmtVector(value: number | number[], digits = 4): string {
  if (Array.isArray(value)) {
    return `(${value.map((v) => fmt(v, digits)).join(", ")})`;
  }
  return fmt(value, digits);
}

export function fmtInterval(iv: [number, number] | undefined, digits = 4): string {
  if (!iv) return "–";
  return `[${fmt(iv[0], digits)}, ${fmt(iv[1], digits)}]`;
}
