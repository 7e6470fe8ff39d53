/**
 * Readers for the promptlf report bundle.
 *
 * Three CSV contracts come out of the pipeline's `report` stage:
 *  - features.csv:     meme_id + one integer-code column per labeling function
 *  - importances.csv:  lf_id, importance, rank, is_top20
 *  - jaccard.csv:      square matrix of "similarity (shared count)" cells
 */

import Papa from "papaparse";

import { NonSquareInputError, SchemaMismatchError } from "./errors.js";

export interface FeatureTable {
  memeIds: string[];
  lfIds: string[];
  /** columns[j][i] = code of LF j on meme i; the vectors we embed. */
  columns: number[][];
}

export interface ImportanceRow {
  lfId: string;
  importance: number;
  rank: number;
  isTop20: boolean;
}

export interface JaccardTable {
  names: string[];
  similarity: number[][];
  shared: number[][];
}

function parseRows(text: string, what: string): string[][] {
  const result = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (result.errors.length > 0) {
    const first = result.errors[0];
    throw new SchemaMismatchError(`${what}: ${first.message} (row ${first.row})`);
  }
  if (result.data.length === 0) {
    throw new SchemaMismatchError(`${what}: empty file`);
  }
  return result.data;
}

export function parseFeaturesCsv(text: string): FeatureTable {
  const rows = parseRows(text, "features CSV");
  const header = rows[0];
  if (header[0] !== "meme_id") {
    throw new SchemaMismatchError(
      `features CSV: first header cell must be "meme_id", got "${header[0]}"`);
  }
  const lfIds = header.slice(1);
  const memeIds: string[] = [];
  const columns: number[][] = lfIds.map(() => []);
  for (const row of rows.slice(1)) {
    if (row.length !== header.length) {
      throw new SchemaMismatchError(
        `features CSV: row "${row[0]}" has ${row.length - 1} cells, expected ${lfIds.length}`);
    }
    memeIds.push(row[0]);
    row.slice(1).forEach((cell, j) => {
      const code = Number(cell);
      if (!Number.isInteger(code) || code < 0 || code > 6) {
        throw new SchemaMismatchError(
          `features CSV: bad code "${cell}" for meme "${row[0]}"`);
      }
      columns[j].push(code);
    });
  }
  if (memeIds.length === 0) {
    throw new SchemaMismatchError("features CSV: no meme rows");
  }
  return { memeIds, lfIds, columns };
}

const IMPORTANCE_HEADER = ["lf_id", "importance", "rank", "is_top20"];

export function parseImportancesCsv(text: string): ImportanceRow[] {
  const rows = parseRows(text, "importances CSV");
  const header = rows[0];
  if (header.join(",") !== IMPORTANCE_HEADER.join(",")) {
    throw new SchemaMismatchError(
      `importances CSV: header must be "${IMPORTANCE_HEADER.join(",")}"`);
  }
  return rows.slice(1).map((row) => {
    if (row.length !== 4) {
      throw new SchemaMismatchError(
        `importances CSV: row "${row[0]}" has ${row.length} cells, expected 4`);
    }
    const importance = Number(row[1]);
    const rank = Number(row[2]);
    if (!Number.isFinite(importance) || !Number.isInteger(rank)) {
      throw new SchemaMismatchError(
        `importances CSV: bad numbers in row "${row[0]}"`);
    }
    if (row[3] !== "0" && row[3] !== "1") {
      throw new SchemaMismatchError(
        `importances CSV: is_top20 must be 0 or 1 in row "${row[0]}"`);
    }
    return { lfId: row[0], importance, rank, isTop20: row[3] === "1" };
  });
}

const JACCARD_CELL = /^(\d+\.\d+) \((\d+)\)$/;

export function parseJaccardCsv(text: string): JaccardTable {
  const rows = parseRows(text, "jaccard CSV");
  const header = rows[0];
  if (header[0] !== "") {
    throw new SchemaMismatchError(
      'jaccard CSV: top-left header cell must be empty');
  }
  const names = header.slice(1);
  const body = rows.slice(1);
  if (body.length !== names.length) {
    throw new NonSquareInputError(
      `jaccard CSV: ${names.length} columns but ${body.length} rows`);
  }
  const similarity: number[][] = [];
  const shared: number[][] = [];
  body.forEach((row, i) => {
    if (row.length !== names.length + 1) {
      throw new NonSquareInputError(
        `jaccard CSV: row "${row[0]}" has ${row.length - 1} cells, expected ${names.length}`);
    }
    if (row[0] !== names[i]) {
      throw new NonSquareInputError(
        `jaccard CSV: row label "${row[0]}" does not match column label "${names[i]}"`);
    }
    const simRow: number[] = [];
    const sharedRow: number[] = [];
    for (const cell of row.slice(1)) {
      const match = JACCARD_CELL.exec(cell);
      if (match === null) {
        throw new SchemaMismatchError(
          `jaccard CSV: cell "${cell}" is not "similarity (shared count)"`);
      }
      simRow.push(Number(match[1]));
      sharedRow.push(Number(match[2]));
    }
    similarity.push(simRow);
    shared.push(sharedRow);
  });
  return { names, similarity, shared };
}
