import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { main, renderFigure } from "../src/cli.js";
import { dualSurface, equivalenceBars, gapHeatmap, mcFan, policyCurves, primalCurves } from "../src/figures.js";
import { dualValueW, oracleFromManifest } from "../src/merton.js";

const FIX = join(__dirname, "fixtures");
const read = (name: string) => readFileSync(join(FIX, name), "utf8");

describe("merton overlay closed form", () => {
  it("matches the derived spot value", () => {
    const oracle = { kind: "merton", p: 0.5, b: 0.3, sigma: 0.5, T: 1.0, a_c: 1.0, a_T: 0.0 };
    // (e^0.36 - 1) / 0.36 at t = 0, y = 1
    expect(dualValueW(oracle, 0, 1)).toBeCloseTo(1.2036928, 6);
    expect(dualValueW(oracle, 1, 2)).toBeCloseTo(0, 9);
  });

  it("reads the oracle marker from the manifest", () => {
    const oracle = oracleFromManifest(JSON.parse(read("solve_manifest.json")));
    expect(oracle?.kind).toBe("merton");
    expect(oracle?.a_T).toBe(1.0);
  });
});

describe("figure rendering", () => {
  it("dual surface renders with a tight oracle overlay", () => {
    const oracle = oracleFromManifest(JSON.parse(read("solve_manifest.json")));
    const out = dualSurface(read("dual.csv"), oracle);
    expect(out.svg).toContain("<svg");
    expect(out.svg).toContain("Dual value surface");
    expect(out.stats["oracle"]).toBe(true);
    // coarse 32x80 fixture grid still sits well inside the 5e-3 band
    expect(out.stats["maxRelDeviation"]).toBeLessThan(5e-3);
  });

  it("dual surface is deterministic", () => {
    const oracle = oracleFromManifest(JSON.parse(read("solve_manifest.json")));
    const a = dualSurface(read("dual.csv"), oracle).svg;
    const b = dualSurface(read("dual.csv"), oracle).svg;
    expect(a).toBe(b);
  });

  it("primal and policy curves render", () => {
    expect(primalCurves(read("primal.csv")).svg).toContain("Recovered primal value");
    const pol = policyCurves(read("primal.csv"));
    expect(pol.svg).toContain("consumption rate");
    expect(pol.svg).toContain("risky amount");
  });

  it("gap heatmap reports a near-zero field on a consistent run", () => {
    const out = gapHeatmap(read("primal.csv"));
    expect(out.svg).toContain("Duality gap");
    expect(out.stats["maxRelativeGap"]).toBeLessThan(0.05);
  });

  it("mc fan draws bands and the reference line", () => {
    const out = mcFan([read("simreport.json")]);
    expect(out.svg).toContain("convergence fan");
    expect(out.svg).toContain("reference V");
  });

  it("equivalence bars carry the 2SE verdict", () => {
    const out = equivalenceBars(read("rh_equivalence.json"));
    expect(out.stats["within2se"]).toBe(true);
    expect(out.svg).toContain("consistent");
  });
});

describe("cli", () => {
  it("renders every figure kind from the fixtures", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const jobs: Array<[string, string]> = [
      ["dual_surface", `${join(FIX, "dual.csv")},${join(FIX, "solve_manifest.json")}`],
      ["primal_curves", join(FIX, "primal.csv")],
      ["policy_curves", join(FIX, "primal.csv")],
      ["gap_heatmap", join(FIX, "primal.csv")],
      ["mc_fan", join(FIX, "simreport.json")],
      ["equivalence_bars", join(FIX, "rh_equivalence.json")],
    ];
    for (const [kind, input] of jobs) {
      const out = join(dir, `${kind}.svg`);
      expect(main([kind, "--in", input, "--out", out])).toBe(0);
      expect(readFileSync(out, "utf8")).toContain("</svg>");
    }
  });

  it("enforces the overlay assertion", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const input = `${join(FIX, "dual.csv")},${join(FIX, "solve_manifest.json")}`;
    expect(main(["dual_surface", "--in", input, "--out", join(dir, "a.svg"),
                 "--assert-overlay", "5e-3"])).toBe(0);
    expect(main(["dual_surface", "--in", input, "--out", join(dir, "b.svg"),
                 "--assert-overlay", "1e-9"])).toBe(3);
  });

  it("maps bad inputs to exit code 2", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    expect(main(["nope", "--in", "x", "--out", "y"])).toBe(2);
    expect(main(["dual_surface", "--in", join(FIX, "missing.csv"),
                 "--out", join(dir, "x.svg")])).toBe(2);
    expect(main(["dual_surface", "--in", join(FIX, "simreport.json"),
                 "--out", join(dir, "x.svg")])).toBe(2);
  });

  it("rejects --assert-overlay without an oracle manifest", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    expect(main(["dual_surface", "--in", join(FIX, "dual.csv"),
                 "--out", join(dir, "x.svg"), "--assert-overlay", "5e-3"])).toBe(2);
  });
});
