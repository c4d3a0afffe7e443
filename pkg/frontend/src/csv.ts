/**
 * Reader for the diagnostics CSV contract: an optional first line
 * `# {json metadata}`, a header row of column names (the first column is the
 * monotone key), then float rows with no missing cells.
 */
import { readFileSync } from "node:fs";

export interface Series {
  keyName: string;
  columns: Map<string, number[]>;
  metadata: Record<string, unknown>;
}

export class CsvError extends Error {}

export function parseSeries(text: string): Series {
  const lines = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  if (lines.length === 0) throw new CsvError("empty CSV");

  let metadata: Record<string, unknown> = {};
  let start = 0;
  if (lines[0].startsWith("#")) {
    const body = lines[0].replace(/^#\s*/, "");
    try {
      metadata = JSON.parse(body) as Record<string, unknown>;
    } catch {
      throw new CsvError("malformed metadata line");
    }
    start = 1;
  }
  if (lines.length <= start) throw new CsvError("missing header row");
  const names = lines[start].split(",").map((s) => s.trim());
  if (new Set(names).size !== names.length) {
    throw new CsvError("duplicate column names");
  }
  const columns = new Map<string, number[]>(names.map((n) => [n, []]));
  for (const line of lines.slice(start + 1)) {
    const cells = line.split(",");
    if (cells.length !== names.length) {
      throw new CsvError(`row with ${cells.length} cells, expected ${names.length}`);
    }
    cells.forEach((cell, i) => {
      const v = Number(cell);
      if (!Number.isFinite(v)) throw new CsvError(`non-numeric cell ${cell}`);
      columns.get(names[i])!.push(v);
    });
  }
  const key = columns.get(names[0])!;
  for (let i = 1; i < key.length; i++) {
    if (key[i] < key[i - 1]) throw new CsvError("key column is not monotone");
  }
  return { keyName: names[0], columns, metadata };
}

export function readSeries(path: string): Series {
  return parseSeries(readFileSync(path, "utf-8"));
}

export function requireColumn(series: Series, name: string): number[] {
  const col = series.columns.get(name);
  if (col === undefined) {
    throw new CsvError(`column not found: ${name}`);
  }
  return col;
}
