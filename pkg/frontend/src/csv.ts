import { readFileSync } from "node:fs";

export interface Table {
  header: string[];
  rows: string[][];
}

/** Strict reader for the simulator's plain numeric/text CSV files. */
export function readCsv(path: string): Table {
  const text = readFileSync(path, "utf-8").trim();
  if (!text) throw new Error(`empty CSV file: ${path}`);
  const lines = text.split(/\r?\n/);
  const header = lines[0].split(",").map((s) => s.trim());
  const rows = lines.slice(1).map((line, i) => {
    const cells = line.split(",");
    if (cells.length !== header.length) {
      throw new Error(`row ${i + 2} of ${path} has ${cells.length} cells, header has ${header.length}`);
    }
    return cells;
  });
  if (rows.length === 0) throw new Error(`no data rows in ${path}`);
  return { header, rows };
}

/** Numeric column by name; throws when the column is missing or non-numeric. */
export function column(table: Table, name: string, path = "<csv>"): Float64Array {
  const idx = table.header.indexOf(name);
  if (idx < 0) throw new Error(`missing column '${name}' in ${path} (have: ${table.header.join(", ")})`);
  const out = new Float64Array(table.rows.length);
  for (let i = 0; i < table.rows.length; i++) {
    const v = Number(table.rows[i][idx]);
    if (!Number.isFinite(v)) throw new Error(`non-numeric value '${table.rows[i][idx]}' in column '${name}' of ${path}`);
    out[i] = v;
  }
  return out;
}

/** String column by name. */
export function textColumn(table: Table, name: string, path = "<csv>"): string[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) throw new Error(`missing column '${name}' in ${path}`);
  return table.rows.map((r) => r[idx]);
}

export function readManifest(dir: string): { params: Record<string, number>; settings: Record<string, unknown> } {
  const raw = JSON.parse(readFileSync(`${dir}/manifest.json`, "utf-8"));
  return { params: raw.params ?? {}, settings: raw.settings ?? {} };
}
