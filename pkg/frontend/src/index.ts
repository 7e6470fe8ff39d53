export { parseFeaturesCsv, parseImportancesCsv, parseJaccardCsv } from "./csv.js";
export type { FeatureTable, ImportanceRow, JaccardTable } from "./csv.js";
export { NonSquareInputError, SchemaMismatchError,
         TooFewFeaturesError } from "./errors.js";
export { computeJaccardHeatmap, plotJaccardHeatmap } from "./heatmap.js";
export type { HeatmapResult } from "./heatmap.js";
export { mulberry32 } from "./seeded.js";
export { importanceColor, renderHeatmapSvg, renderScatterSvg,
         similarityColor } from "./svg.js";
export type { HeatmapCell, ScatterPoint } from "./svg.js";
export { computeUmapPlot, plotUmap, DEFAULT_MIN_DIST, DEFAULT_N_NEIGHBORS,
         DEFAULT_SEED, MIN_FEATURE_COLUMNS } from "./umapPlot.js";
export type { UmapOptions, UmapPlotResult } from "./umapPlot.js";
