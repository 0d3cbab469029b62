import * as fs from "node:fs";
import * as path from "node:path";
import { PlotError } from "./errors";

/** Band table: one row per quasimomentum, header kx,ky,E1..EB. */
export interface BandTable {
  kx: number[];
  ky: number[];
  /** energies[b][i] is band b at row i */
  energies: number[][];
  bands: number;
  source: string;
}

export function readBandCsv(file: string): BandTable {
  const text = fs.readFileSync(file, "utf8");
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length < 2) {
    throw new PlotError(`${file}: empty or headerless band table`);
  }
  const header = lines[0].split(",");
  if (header[0] !== "kx" || header[1] !== "ky" || header.length < 3) {
    throw new PlotError(`${file}: expected header kx,ky,E1..EB`);
  }
  const bands = header.length - 2;
  const kx: number[] = [];
  const ky: number[] = [];
  const energies: number[][] = Array.from({ length: bands }, () => []);
  for (const line of lines.slice(1)) {
    const cols = line.split(",").map(Number);
    if (cols.length !== header.length || cols.some((v) => !Number.isFinite(v))) {
      throw new PlotError(`${file}: malformed row "${line}"`);
    }
    kx.push(cols[0]);
    ky.push(cols[1]);
    for (let b = 0; b < bands; b++) energies[b].push(cols[2 + b]);
  }
  return { kx, ky, energies, bands, source: file };
}

export interface ConvergenceCase {
  epsilon: number;
  error: number;
}

export interface ConvergenceReport {
  cases: ConvergenceCase[];
  fittedRate?: number;
  source: string;
}

export function readConvergenceJson(file: string): ConvergenceReport {
  let parsed: any;
  try {
    parsed = JSON.parse(fs.readFileSync(file, "utf8"));
  } catch (e) {
    throw new PlotError(`${file}: not valid JSON (${(e as Error).message})`);
  }
  if (!Array.isArray(parsed.cases) || parsed.cases.length === 0) {
    throw new PlotError(`${file}: missing or empty "cases" field`);
  }
  const cases: ConvergenceCase[] = parsed.cases.map((c: any, i: number) => {
    if (typeof c.epsilon !== "number" || typeof c.error !== "number") {
      throw new PlotError(`${file}: case ${i} lacks numeric epsilon/error`);
    }
    return { epsilon: c.epsilon, error: c.error };
  });
  const out: ConvergenceReport = { cases, source: file };
  if (typeof parsed.fittedRate === "number") out.fittedRate = parsed.fittedRate;
  return out;
}

export const SNAPSHOT_SCHEMA_VERSION = 1;

export interface FieldSnapshot {
  magnitude: number[][]; // |psi| row-major
  rows: number;
  cols: number;
  epsilon: number;
  t: number;
  sigma: number | null;
  source: string;
}

/** Read a field snapshot pair <base>.json / <base>.bin. */
export function readFieldSnapshot(base: string): FieldSnapshot {
  const metaPath = base + ".json";
  const binPath = base + ".bin";
  let meta: any;
  try {
    meta = JSON.parse(fs.readFileSync(metaPath, "utf8"));
  } catch (e) {
    throw new PlotError(`${metaPath}: unreadable sidecar (${(e as Error).message})`);
  }
  if (meta.schemaVersion !== SNAPSHOT_SCHEMA_VERSION) {
    throw new PlotError(
      `${metaPath}: sidecar schema version ${meta.schemaVersion} != ${SNAPSHOT_SCHEMA_VERSION}`);
  }
  if (meta.byteOrder !== "LE" || meta.layout !== "row-major-interleaved") {
    throw new PlotError(`${metaPath}: unsupported layout/byte order`);
  }
  const [rows, cols] = meta.shape;
  const buf = fs.readFileSync(binPath);
  if (buf.length !== rows * cols * 16) {
    throw new PlotError(
      `${binPath}: ${buf.length} bytes but expected ${rows * cols * 16}`);
  }
  const magnitude: number[][] = [];
  for (let i = 0; i < rows; i++) {
    const row: number[] = new Array(cols);
    for (let j = 0; j < cols; j++) {
      const off = (i * cols + j) * 16;
      const re = buf.readDoubleLE(off);
      const im = buf.readDoubleLE(off + 8);
      row[j] = Math.hypot(re, im);
    }
    magnitude.push(row);
  }
  return {
    magnitude, rows, cols,
    epsilon: meta.epsilon, t: meta.t, sigma: meta.sigma ?? null,
    source: base,
  };
}

export function fileStem(p: string): string {
  return path.basename(p).replace(/\.[^.]+$/, "");
}
