/**
 * UMAP projection of labeling-function feature columns.
 *
 * Each LF becomes one point, embedded from its per-meme code vector; point
 * color encodes forest importance and the flagged top-20 points carry lf_id
 * labels. The embedding is seeded and the effective UMAP parameters are
 * recorded in the SVG metadata so a rerun is reproducible and auditable.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { UMAP } from "umap-js";

import { FeatureTable, ImportanceRow, parseFeaturesCsv,
         parseImportancesCsv } from "./csv.js";
import { SchemaMismatchError, TooFewFeaturesError } from "./errors.js";
import { mulberry32 } from "./seeded.js";
import { renderScatterSvg, ScatterPoint } from "./svg.js";

export const DEFAULT_SEED = 42;
export const DEFAULT_N_NEIGHBORS = 15;
export const DEFAULT_MIN_DIST = 0.1;
export const MIN_FEATURE_COLUMNS = 3;

export interface UmapOptions {
  seed?: number;
  nNeighbors?: number;
  minDist?: number;
}

export interface UmapPlotResult {
  points: ScatterPoint[];
  seed: number;
  /** effective value after clamping to the point count */
  nNeighbors: number;
  minDist: number;
  svg: string;
}

export function computeUmapPlot(
  features: FeatureTable,
  importances: ImportanceRow[],
  options: UmapOptions = {},
): UmapPlotResult {
  if (features.lfIds.length < MIN_FEATURE_COLUMNS) {
    throw new TooFewFeaturesError(
      `need at least ${MIN_FEATURE_COLUMNS} feature columns to embed, ` +
      `got ${features.lfIds.length}`);
  }
  const importanceByLf = new Map(importances.map((r) => [r.lfId, r]));
  if (importanceByLf.size !== importances.length) {
    throw new SchemaMismatchError("importances CSV repeats an lf_id");
  }
  for (const lfId of features.lfIds) {
    if (!importanceByLf.has(lfId)) {
      throw new SchemaMismatchError(
        `feature column "${lfId}" missing from the importances CSV`);
    }
  }
  if (importances.length !== features.lfIds.length) {
    throw new SchemaMismatchError(
      `importances CSV lists ${importances.length} LFs, ` +
      `features CSV has ${features.lfIds.length}`);
  }

  const seed = options.seed ?? DEFAULT_SEED;
  const minDist = options.minDist ?? DEFAULT_MIN_DIST;
  const nPoints = features.lfIds.length;
  // UMAP needs nNeighbors strictly below the point count
  const nNeighbors = Math.max(
    2, Math.min(options.nNeighbors ?? DEFAULT_N_NEIGHBORS, nPoints - 1));

  const umap = new UMAP({
    nComponents: 2,
    nNeighbors,
    minDist,
    random: mulberry32(seed),
  });
  const coords = umap.fit(features.columns);

  const points: ScatterPoint[] = features.lfIds.map((lfId, j) => {
    const row = importanceByLf.get(lfId)!;
    return {
      lfId,
      x: coords[j][0],
      y: coords[j][1],
      importance: row.importance,
      labeled: row.isTop20,
    };
  });

  const svg = renderScatterSvg(points, "LF feature columns (UMAP)", {
    plot: "umap-lf-columns",
    seed,
    nNeighbors,
    minDist,
    nPoints,
    nLabeled: points.filter((p) => p.labeled).length,
  });
  return { points, seed, nNeighbors, minDist, svg };
}

export function plotUmap(
  featuresCsv: string,
  importancesCsv: string,
  outImage: string,
  options: UmapOptions = {},
): UmapPlotResult {
  const features = parseFeaturesCsv(readFileSync(featuresCsv, "utf-8"));
  const importances = parseImportancesCsv(readFileSync(importancesCsv, "utf-8"));
  const result = computeUmapPlot(features, importances, options);
  writeFileSync(outImage, result.svg, "utf-8");
  return result;
}
