/**
 * Closed-form dual value for the constant-coefficient consumption benchmark,
 * reimplemented here so the overlay is independent of the solver output:
 * W(t, y) = ((1-p)/p) D(t) y^{-q} with q = p/(1-p),
 * kappa = q (q+1) (b/sigma)^2 / 2 and
 * D(t) = a_c^{1/(1-p)} (e^{kappa (T-t)} - 1)/kappa + a_T^{1/(1-p)} e^{kappa (T-t)}.
 */

export interface MertonOracle {
  kind: string;
  p: number;
  b: number;
  sigma: number;
  T: number;
  a_c: number;
  a_T: number;
}

export function dualValueW(o: MertonOracle, t: number, y: number): number {
  const q = o.p / (1 - o.p);
  const kappa = 0.5 * q * (q + 1) * (o.b / o.sigma) ** 2;
  const ek = Math.exp(kappa * (o.T - t));
  const run = Math.pow(o.a_c, 1 / (1 - o.p)) * (ek - 1) / kappa;
  const tail = o.a_T > 0 ? Math.pow(o.a_T, 1 / (1 - o.p)) * ek : 0;
  return ((1 - o.p) / o.p) * (run + tail) * Math.pow(y, -q);
}

export function oracleFromManifest(manifest: unknown): MertonOracle | null {
  if (typeof manifest !== "object" || manifest === null) return null;
  const oracle = (manifest as Record<string, unknown>)["oracle"];
  if (typeof oracle !== "object" || oracle === null) return null;
  const o = oracle as Record<string, unknown>;
  if (o["kind"] !== "merton") return null;
  return {
    kind: "merton",
    p: Number(o["p"]),
    b: Number(o["b"]),
    sigma: Number(o["sigma"]),
    T: Number(o["T"]),
    a_c: Number(o["a_c"] ?? 1),
    a_T: Number(o["a_T"] ?? 0),
  };
}
