#!/usr/bin/env node
/**
 * Standalone plot scripts over the promptlf report bundle.
 *
 * Usage:
 *   promptlf-viz umap --features features.csv --importances importances.csv \
 *       --out umap.svg [--seed 42] [--n-neighbors 15] [--min-dist 0.1]
 *   promptlf-viz heatmap --jaccard jaccard.csv --out heatmap.svg
 */

import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";

import { plotJaccardHeatmap } from "./heatmap.js";
import { plotUmap } from "./umapPlot.js";

const USAGE = `usage:
  promptlf-viz umap --features <csv> --importances <csv> --out <svg> [--seed N] [--n-neighbors N] [--min-dist X]
  promptlf-viz heatmap --jaccard <csv> --out <svg>`;

function required(value: string | undefined, flag: string): string {
  if (value === undefined) {
    throw new Error(`missing required flag ${flag}\n${USAGE}`);
  }
  return value;
}

export function run(argv: string[]): string {
  const [command, ...rest] = argv;
  if (command === "umap") {
    const { values } = parseArgs({
      args: rest,
      options: {
        features: { type: "string" },
        importances: { type: "string" },
        out: { type: "string" },
        seed: { type: "string" },
        "n-neighbors": { type: "string" },
        "min-dist": { type: "string" },
      },
    });
    const out = required(values.out, "--out");
    const result = plotUmap(
      required(values.features, "--features"),
      required(values.importances, "--importances"),
      out,
      {
        seed: values.seed === undefined ? undefined : Number(values.seed),
        nNeighbors: values["n-neighbors"] === undefined
          ? undefined : Number(values["n-neighbors"]),
        minDist: values["min-dist"] === undefined
          ? undefined : Number(values["min-dist"]),
      },
    );
    const labeled = result.points.filter((p) => p.labeled).length;
    return `wrote ${out}: ${result.points.length} points, ${labeled} labeled ` +
      `(seed ${result.seed}, nNeighbors ${result.nNeighbors}, ` +
      `minDist ${result.minDist})`;
  }
  if (command === "heatmap") {
    const { values } = parseArgs({
      args: rest,
      options: {
        jaccard: { type: "string" },
        out: { type: "string" },
      },
    });
    const out = required(values.out, "--out");
    const result = plotJaccardHeatmap(required(values.jaccard, "--jaccard"), out);
    return `wrote ${out}: ${result.names.length}x${result.names.length} heatmap`;
  }
  throw new Error(`unknown command ${command ?? "(none)"}\n${USAGE}`);
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  try {
    console.log(run(process.argv.slice(2)));
  } catch (error) {
    console.error(error instanceof Error ? error.message : String(error));
    process.exit(1);
  }
}
