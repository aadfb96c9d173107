import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { DUAL_SCHEMA, PRIMAL_SCHEMA, groupByTime, parseCsv, readArtifact } from "../src/csv.js";
import { EmptyInput, SchemaMismatch } from "../src/errors.js";

const FIX = join(__dirname, "fixtures");

describe("csv parsing", () => {
  it("parses metadata, header and rows", () => {
    const t = parseCsv("# schema = x.v1\n# n = 2\na,b\n1,2\n3,4\n");
    expect(t.meta["schema"]).toBe("x.v1");
    expect(t.nRows).toBe(2);
    expect(Array.from(t.columns["b"])).toEqual([2, 4]);
  });

  it("rejects empty input", () => {
    expect(() => parseCsv("# only = meta\n")).toThrow(EmptyInput);
  });

  it("rejects wrong schema", () => {
    const text = readFileSync(join(FIX, "dual.csv"), "utf8");
    expect(() => readArtifact(text, PRIMAL_SCHEMA)).toThrow(SchemaMismatch);
  });

  it("rejects missing columns", () => {
    expect(() => readArtifact(`# schema = ${DUAL_SCHEMA}\nt,y\n0,1\n`, DUAL_SCHEMA))
      .toThrow(SchemaMismatch);
  });

  it("loads the dual artifact and groups slices", () => {
    const text = readFileSync(join(FIX, "dual.csv"), "utf8");
    const table = readArtifact(text, DUAL_SCHEMA);
    const grid = groupByTime(table, "y", ["W"]);
    expect(grid.times.length).toBe(65);
    expect(grid.space.length).toBe(100);
    const w0 = grid.slices.get(0)!["W"];
    // W is strictly decreasing in y on every slice
    for (let j = 1; j < w0.length; j++) expect(w0[j]).toBeLessThan(w0[j - 1]);
  });
});
