/** Minimal SVG emitters for the two plots; no rendering dependencies. */

export interface ScatterPoint {
  lfId: string;
  x: number;
  y: number;
  importance: number;
  labeled: boolean;
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

/** Two-stop importance ramp: dark violet (low) to yellow (high). */
export function importanceColor(t: number): string {
  const clamped = Math.max(0, Math.min(1, t));
  const r = Math.round(lerp(0x44, 0xfd, clamped));
  const g = Math.round(lerp(0x01, 0xe7, clamped));
  const b = Math.round(lerp(0x54, 0x25, clamped));
  return `#${[r, g, b].map((v) => v.toString(16).padStart(2, "0")).join("")}`;
}

/** Blue ramp for heatmap cells, white (0) to steel blue (1). */
export function similarityColor(t: number): string {
  const clamped = Math.max(0, Math.min(1, t));
  const r = Math.round(lerp(0xff, 0x1f, clamped));
  const g = Math.round(lerp(0xff, 0x77, clamped));
  const b = Math.round(lerp(0xff, 0xb4, clamped));
  return `#${[r, g, b].map((v) => v.toString(16).padStart(2, "0")).join("")}`;
}

function extent(values: number[]): [number, number] {
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  // degenerate extents still need a nonzero span to scale against
  return hi > lo ? [lo, hi] : [lo - 0.5, hi + 0.5];
}

export function renderScatterSvg(
  points: ScatterPoint[],
  title: string,
  metadata: Record<string, unknown>,
): string {
  const width = 720;
  const height = 540;
  const margin = 50;
  const [xLo, xHi] = extent(points.map((p) => p.x));
  const [yLo, yHi] = extent(points.map((p) => p.y));
  const maxImportance = Math.max(...points.map((p) => p.importance), 0) || 1;
  const sx = (x: number) =>
    margin + ((x - xLo) / (xHi - xLo)) * (width - 2 * margin);
  const sy = (y: number) =>
    height - margin - ((y - yLo) / (yHi - yLo)) * (height - 2 * margin);

  const shapes = points.map((p) => {
    const cx = sx(p.x).toFixed(2);
    const cy = sy(p.y).toFixed(2);
    const fill = importanceColor(p.importance / maxImportance);
    const circle =
      `<circle class="lf-point" data-lf="${escapeXml(p.lfId)}" ` +
      `cx="${cx}" cy="${cy}" r="4" fill="${fill}"/>`;
    if (!p.labeled) {
      return circle;
    }
    const label =
      `<text class="lf-label" x="${(sx(p.x) + 6).toFixed(2)}" ` +
      `y="${(sy(p.y) - 6).toFixed(2)}" font-size="9">${escapeXml(p.lfId)}</text>`;
    return circle + label;
  });

  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}">`,
    `<metadata>${escapeXml(JSON.stringify(metadata))}</metadata>`,
    `<title>${escapeXml(title)}</title>`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    `<text x="${width / 2}" y="24" text-anchor="middle" font-size="14">` +
      `${escapeXml(title)}</text>`,
    ...shapes,
    "</svg>",
    "",
  ].join("\n");
}

export interface HeatmapCell {
  row: string;
  col: string;
  similarity: number;
  shared: number;
  annotation: string;
}

export function renderHeatmapSvg(
  names: string[],
  cells: HeatmapCell[],
  title: string,
): string {
  const cellSize = 96;
  const labelGutter = 70;
  const top = 40;
  const width = labelGutter + names.length * cellSize + 20;
  const height = top + labelGutter + names.length * cellSize + 20;
  const colX = (j: number) => labelGutter + j * cellSize;
  const rowY = (i: number) => top + labelGutter + i * cellSize;

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}">`,
    `<title>${escapeXml(title)}</title>`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    `<text x="${width / 2}" y="24" text-anchor="middle" font-size="14">` +
      `${escapeXml(title)}</text>`,
  ];
  names.forEach((name, j) => {
    parts.push(
      `<text x="${colX(j) + cellSize / 2}" y="${top + labelGutter - 10}" ` +
        `text-anchor="middle" font-size="12">${escapeXml(name)}</text>`);
  });
  names.forEach((name, i) => {
    parts.push(
      `<text x="${labelGutter - 10}" y="${rowY(i) + cellSize / 2 + 4}" ` +
        `text-anchor="end" font-size="12">${escapeXml(name)}</text>`);
  });
  for (const cell of cells) {
    const i = names.indexOf(cell.row);
    const j = names.indexOf(cell.col);
    const fill = similarityColor(cell.similarity);
    const textColor = cell.similarity > 0.6 ? "white" : "black";
    parts.push(
      `<rect x="${colX(j)}" y="${rowY(i)}" width="${cellSize}" ` +
        `height="${cellSize}" fill="${fill}" stroke="#999"/>`,
      `<text x="${colX(j) + cellSize / 2}" y="${rowY(i) + cellSize / 2 + 4}" ` +
        `text-anchor="middle" font-size="11" fill="${textColor}">` +
        `${escapeXml(cell.annotation)}</text>`);
  }
  parts.push("</svg>", "");
  return parts.join("\n");
}
