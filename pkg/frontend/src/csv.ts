// Reader for the toolkit's provenance-headed CSV files.
// Dialect: comma-separated, '.' decimal, scientific floats with 17
// significant digits, leading '#' comment lines.

import { readFileSync } from "fs";

export interface Table {
  header: string[];
  rows: Record<string, string>[];
  provenance: string | null;
}

export class SchemaError extends Error {}

export function readCsv(path: string): Table {
  const text = readFileSync(path, "utf8");
  const lines = text.split("\n").filter((l) => l.length > 0);
  const comments = lines.filter((l) => l.startsWith("#"));
  const body = lines.filter((l) => !l.startsWith("#"));
  if (body.length === 0) throw new SchemaError(`${path}: no header row`);
  const header = body[0].split(",");
  const rows: Record<string, string>[] = [];
  for (const line of body.slice(1)) {
    const parts = line.split(",");
    const row: Record<string, string> = {};
    header.forEach((h, i) => (row[h] = parts[i] ?? ""));
    rows.push(row);
  }
  return { header, rows, provenance: comments[0] ?? null };
}

/** Assert columns exist; raise naming the first offender. */
export function requireColumns(table: Table, cols: string[], path: string) {
  for (const c of cols) {
    if (!table.header.includes(c)) {
      throw new SchemaError(`${path}: missing required column '${c}'`);
    }
  }
}

export function floats(table: Table, col: string): number[] {
  return table.rows.map((r) => Number(r[col]));
}

/** Serialize a binary64 the way the producer does (17 significant digits). */
export function format17(x: number): string {
  if (Number.isNaN(x)) return "nan";
  return x.toExponential(16);
}
