/**
 * Jaccard heatmap of removed-feature sets.
 *
 * The input CSV is square with matching row/column labels; every cell reads
 * "similarity (shared count)" and the rendered annotations preserve exactly
 * those values.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { JaccardTable, parseJaccardCsv } from "./csv.js";
import { HeatmapCell, renderHeatmapSvg } from "./svg.js";

export interface HeatmapResult {
  names: string[];
  cells: HeatmapCell[];
  svg: string;
}

export function computeJaccardHeatmap(table: JaccardTable): HeatmapResult {
  const cells: HeatmapCell[] = [];
  table.names.forEach((row, i) => {
    table.names.forEach((col, j) => {
      const similarity = table.similarity[i][j];
      const shared = table.shared[i][j];
      cells.push({
        row,
        col,
        similarity,
        shared,
        annotation: `${similarity.toFixed(3)} (${shared})`,
      });
    });
  });
  const svg = renderHeatmapSvg(table.names, cells,
                               "Removed-feature Jaccard similarity");
  return { names: table.names, cells, svg };
}

export function plotJaccardHeatmap(jaccardCsv: string,
                                   outImage: string): HeatmapResult {
  const table = parseJaccardCsv(readFileSync(jaccardCsv, "utf-8"));
  const result = computeJaccardHeatmap(table);
  writeFileSync(outImage, result.svg, "utf-8");
  return result;
}
