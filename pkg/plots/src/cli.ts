/**
 * plot <figure-kind> --in <files> --out <path> [--assert-overlay <tol>]
 *
 * Figure kinds and their inputs (comma-separated after --in):
 *   dual_surface      dual.csv [, solve_manifest.json]
 *   primal_curves     primal.csv
 *   policy_curves     primal.csv
 *   gap_heatmap       primal.csv
 *   mc_fan            simreport.json [, more simreport.json ...]
 *   equivalence_bars  rh_equivalence.json
 *
 * Exit codes: 0 ok, 2 bad input (schema/empty/arguments), 3 overlay
 * assertion failed, 1 unexpected.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { EmptyInput, SchemaMismatch } from "./errors.js";
import {
  FigureResult,
  dualSurface,
  equivalenceBars,
  gapHeatmap,
  mcFan,
  policyCurves,
  primalCurves,
} from "./figures.js";
import { oracleFromManifest } from "./merton.js";

const KINDS = ["dual_surface", "primal_curves", "policy_curves",
               "gap_heatmap", "mc_fan", "equivalence_bars"];

interface Args {
  kind: string;
  inputs: string[];
  out: string;
  assertOverlay: number | null;
}

function parseArgs(argv: string[]): Args {
  const [kind, ...rest] = argv;
  if (!kind || !KINDS.includes(kind)) {
    throw new EmptyInput(`figure kind must be one of: ${KINDS.join(", ")}`);
  }
  let inputs: string[] = [];
  let out = "";
  let assertOverlay: number | null = null;
  for (let i = 0; i < rest.length; i++) {
    if (rest[i] === "--in") inputs = rest[++i].split(",").map((s) => s.trim());
    else if (rest[i] === "--out") out = rest[++i];
    else if (rest[i] === "--assert-overlay") assertOverlay = Number(rest[++i]);
    else throw new EmptyInput(`unknown argument ${rest[i]}`);
  }
  if (inputs.length === 0 || !out) throw new EmptyInput("--in and --out are required");
  return { kind, inputs, out, assertOverlay };
}

export function renderFigure(kind: string, inputs: string[]): FigureResult {
  const texts = inputs.map((p) => readFileSync(p, "utf8"));
  switch (kind) {
    case "dual_surface": {
      const manifest = inputs.length > 1 ? JSON.parse(texts[1]) : null;
      return dualSurface(texts[0], oracleFromManifest(manifest));
    }
    case "primal_curves":
      return primalCurves(texts[0]);
    case "policy_curves":
      return policyCurves(texts[0]);
    case "gap_heatmap":
      return gapHeatmap(texts[0]);
    case "mc_fan":
      return mcFan(texts);
    case "equivalence_bars":
      return equivalenceBars(texts[0]);
    default:
      throw new EmptyInput(`unknown figure kind ${kind}`);
  }
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  try {
    const result = renderFigure(args.kind, args.inputs);
    writeFileSync(args.out, result.svg);
    const statText = Object.entries(result.stats)
      .map(([k, v]) => `${k}=${typeof v === "number" ? Number(v.toPrecision(4)) : v}`)
      .join(" ");
    console.log(`wrote ${args.out} (${statText})`);
    if (args.assertOverlay !== null) {
      const dev = result.stats["maxRelDeviation"];
      if (typeof dev !== "number" || result.stats["oracle"] !== true) {
        console.error("error: --assert-overlay needs an oracle-marked dual_surface run");
        return 2;
      }
      if (dev > args.assertOverlay) {
        console.error(`overlay deviation ${dev} exceeds ${args.assertOverlay}`);
        return 3;
      }
    }
    return 0;
  } catch (err) {
    if (err instanceof SchemaMismatch || err instanceof EmptyInput) {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    if ((err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    console.error(`unexpected error: ${(err as Error).stack}`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
