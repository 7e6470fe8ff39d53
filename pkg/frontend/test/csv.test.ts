import { readFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { NonSquareInputError, parseFeaturesCsv, parseImportancesCsv,
         parseJaccardCsv, SchemaMismatchError } from "../src/index.js";

const FIXTURES = fileURLToPath(new URL("./fixtures", import.meta.url));

function fixture(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf-8");
}

describe("parseFeaturesCsv", () => {
  it("reads the exported 89-column bundle", () => {
    const table = parseFeaturesCsv(fixture("features_89.csv"));
    expect(table.lfIds).toHaveLength(89);
    expect(table.memeIds).toHaveLength(60);
    expect(table.lfIds[0]).toBe("lf000");
    expect(table.lfIds[88]).toBe("lf088");
    expect(table.columns).toHaveLength(89);
    for (const column of table.columns) {
      expect(column).toHaveLength(60);
      for (const code of column) {
        expect(Number.isInteger(code)).toBe(true);
        expect(code).toBeGreaterThanOrEqual(0);
        expect(code).toBeLessThanOrEqual(6);
      }
    }
  });

  it("rejects a wrong leading header cell", () => {
    expect(() => parseFeaturesCsv("id,lf000\nm0,1\n"))
      .toThrow(SchemaMismatchError);
  });

  it("rejects ragged rows and non-code cells", () => {
    expect(() => parseFeaturesCsv("meme_id,lf000,lf001\nm0,1\n"))
      .toThrow(SchemaMismatchError);
    expect(() => parseFeaturesCsv("meme_id,lf000\nm0,7\n"))
      .toThrow(SchemaMismatchError);
    expect(() => parseFeaturesCsv("meme_id,lf000\nm0,1.5\n"))
      .toThrow(SchemaMismatchError);
  });

  it("rejects an empty body", () => {
    expect(() => parseFeaturesCsv("meme_id,lf000\n"))
      .toThrow(SchemaMismatchError);
  });
});

describe("parseImportancesCsv", () => {
  it("reads the exported importance vector", () => {
    const rows = parseImportancesCsv(fixture("importances_89.csv"));
    expect(rows).toHaveLength(89);
    expect(rows.filter((r) => r.isTop20)).toHaveLength(20);
    expect(rows[0].lfId).toBe("lf000");
    expect(rows[0].importance).toBeCloseTo(0.0033141724, 9);
    expect(rows[0].rank).toBe(85);
    const ranks = rows.map((r) => r.rank).sort((a, b) => a - b);
    expect(ranks).toEqual(Array.from({ length: 89 }, (_, i) => i + 1));
  });

  it("rejects a drifted header", () => {
    expect(() => parseImportancesCsv("lf,imp,rank,top\nlf0,0.5,1,1\n"))
      .toThrow(SchemaMismatchError);
  });

  it("rejects non-boolean top-20 flags", () => {
    expect(() =>
      parseImportancesCsv("lf_id,importance,rank,is_top20\nlf0,0.5,1,yes\n"))
      .toThrow(SchemaMismatchError);
  });
});

describe("parseJaccardCsv", () => {
  it("reads the replication matrix with shared counts", () => {
    const table = parseJaccardCsv(fixture("jaccard_replication.csv"));
    expect(table.names).toEqual(["zh", "hi"]);
    expect(table.similarity[0][1]).toBe(0.689);
    expect(table.shared[0][1]).toBe(44);
    expect(table.similarity[0][0]).toBe(1.0);
    expect(table.shared[1][1]).toBe(56);
  });

  it("rejects a non-square matrix", () => {
    expect(() => parseJaccardCsv(fixture("jaccard_nonsquare.csv")))
      .toThrow(NonSquareInputError);
  });

  it("rejects mismatched row labels", () => {
    const text = ",a,b\na,1.000 (1),0.000 (0)\nc,0.000 (0),1.000 (1)\n";
    expect(() => parseJaccardCsv(text)).toThrow(NonSquareInputError);
  });

  it("rejects rows with the wrong cell count", () => {
    const text = ",a,b\na,1.000 (1)\nb,0.000 (0),1.000 (1)\n";
    expect(() => parseJaccardCsv(text)).toThrow(NonSquareInputError);
  });

  it("rejects cells without the annotation shape", () => {
    const text = ",a\na,0.5\n";
    expect(() => parseJaccardCsv(text)).toThrow(SchemaMismatchError);
  });
});
