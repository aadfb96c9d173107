/**
 * Reader for the dualhjb CSV artifact format: leading `# key = value`
 * metadata lines, a header row, then comma-separated float rows.
 * Columns are validated against the versioned schema before use.
 */

import { EmptyInput, SchemaMismatch } from "./errors.js";

export interface CsvTable {
  meta: Record<string, string>;
  columns: Record<string, Float64Array>;
  nRows: number;
}

export const DUAL_SCHEMA = "dualhjb.dual.v1";
export const PRIMAL_SCHEMA = "dualhjb.primal.v1";

const SCHEMA_COLUMNS: Record<string, string[]> = {
  [DUAL_SCHEMA]: ["t", "y", "W", "W_y", "W_yy"],
  [PRIMAL_SCHEMA]: ["t", "x", "V", "V_x", "V_xx", "C_feedback", "Pi_feedback", "duality_gap"],
};

export function parseCsv(text: string): CsvTable {
  const meta: Record<string, string> = {};
  const lines = text.split("\n");
  let header: string[] | null = null;
  const rows: number[][] = [];
  for (const raw of lines) {
    const line = raw.trim();
    if (!line) continue;
    if (line.startsWith("#")) {
      const body = line.slice(1).trim();
      const eq = body.indexOf("=");
      if (eq > 0) meta[body.slice(0, eq).trim()] = body.slice(eq + 1).trim();
      continue;
    }
    if (header === null) {
      header = line.split(",").map((h) => h.trim());
      continue;
    }
    rows.push(line.split(",").map(Number));
  }
  if (header === null || rows.length === 0) {
    throw new EmptyInput("no header or data rows in CSV input");
  }
  const columns: Record<string, Float64Array> = {};
  header.forEach((name, j) => {
    const col = new Float64Array(rows.length);
    for (let i = 0; i < rows.length; i++) col[i] = rows[i][j];
    columns[name] = col;
  });
  return { meta, columns, nRows: rows.length };
}

/** Parse and verify the table carries the named schema and its columns. */
export function readArtifact(text: string, schema: string): CsvTable {
  const table = parseCsv(text);
  if (table.meta["schema"] !== schema) {
    throw new SchemaMismatch(
      `expected schema ${schema}, found ${table.meta["schema"] ?? "none"}`);
  }
  for (const col of SCHEMA_COLUMNS[schema] ?? []) {
    if (!(col in table.columns)) {
      throw new SchemaMismatch(`schema ${schema} is missing column ${col}`);
    }
  }
  return table;
}

/** Group a flat (t, space, values...) table into per-time slices. */
export interface SliceGrid {
  times: number[];
  space: Float64Array;           // shared space nodes of the first slice
  slices: Map<number, Record<string, Float64Array>>;
}

export function groupByTime(table: CsvTable, spaceCol: string, valueCols: string[]): SliceGrid {
  const t = table.columns["t"];
  const times: number[] = [];
  const starts: number[] = [];
  for (let i = 0; i < table.nRows; i++) {
    if (times.length === 0 || t[i] !== times[times.length - 1]) {
      times.push(t[i]);
      starts.push(i);
    }
  }
  starts.push(table.nRows);
  const nSpace = starts[1] - starts[0];
  const space = table.columns[spaceCol].slice(0, nSpace);
  const slices = new Map<number, Record<string, Float64Array>>();
  for (let k = 0; k < times.length; k++) {
    const rec: Record<string, Float64Array> = {};
    for (const col of valueCols) {
      rec[col] = table.columns[col].slice(starts[k], starts[k + 1]);
    }
    slices.set(k, rec);
  }
  return { times, space, slices };
}
