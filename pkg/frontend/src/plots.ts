import * as fs from "node:fs";
import { colormap } from "./colormap";
import { PlotError } from "./errors";
import {
  BandTable, fileStem, readBandCsv, readConvergenceJson, readFieldSnapshot,
} from "./readers";
import { Axes, Scene, fmtTick } from "./svg";

/** |k2| for the honeycomb dual basis; converts path positions to lambda. */
const K2_NORM = (4 * Math.PI) / Math.sqrt(3);

const CURVE_COLORS = ["#2a9d34", "#1f5fbf", "#d62728", "#9467bd", "#8c564b"];

function writeSvg(outPath: string, content: string): void {
  if (!outPath.endsWith(".svg")) {
    throw new PlotError(
      `output must be an .svg path (got ${outPath}); raster formats are not `
      + "supported by this renderer");
  }
  fs.writeFileSync(outPath, content);
}

function colorbar(scene: Scene, x: number, y: number, w: number, h: number,
                  lo: number, hi: number): void {
  const steps = 48;
  for (let i = 0; i < steps; i++) {
    scene.rect(x, y + h - ((i + 1) * h) / steps, w + 0.4, h / steps + 0.4,
               colormap(i / (steps - 1)));
  }
  scene.rect(x, y, w, h, "none", "#555");
  scene.text(x + w + 4, y + 8, fmtTick(hi), 10);
  scene.text(x + w + 4, y + h, fmtTick(lo), 10);
}

interface GridData {
  xs: number[];
  ys: number[];
  value: (ix: number, iy: number) => number;
}

/** Infer the square-patch structure of a grid-mode band table. */
function asGrid(table: BandTable): { xs: number[]; ys: number[] } {
  const xs = Array.from(new Set(table.kx)).sort((a, b) => a - b);
  const ys = Array.from(new Set(table.ky)).sort((a, b) => a - b);
  if (xs.length < 2 || ys.length < 2 || xs.length * ys.length !== table.kx.length) {
    throw new PlotError(
      `${table.source}: not a grid-mode table (${table.kx.length} rows, `
      + `${xs.length} x ${ys.length} unique coordinates)`);
  }
  return { xs, ys };
}

function heatmapPanel(scene: Scene, px: number, py: number, pw: number,
                      ph: number, grid: GridData, lo: number, hi: number,
                      title: string, xLabel: string, yLabel: string): void {
  const nx = grid.xs.length;
  const ny = grid.ys.length;
  const cw = pw / nx;
  const ch = ph / ny;
  const span = hi > lo ? hi - lo : 1;
  for (let ix = 0; ix < nx; ix++) {
    for (let iy = 0; iy < ny; iy++) {
      const t = (grid.value(ix, iy) - lo) / span;
      // iy increases upward in data, downward in pixels
      scene.rect(px + ix * cw, py + ph - (iy + 1) * ch, cw + 0.4, ch + 0.4,
                 colormap(t));
    }
  }
  scene.rect(px, py, pw, ph, "none", "#555");
  scene.text(px + pw / 2, py - 6, title, 12, "middle");
  const x0 = grid.xs[0];
  const x1 = grid.xs[nx - 1];
  const y0 = grid.ys[0];
  const y1 = grid.ys[ny - 1];
  for (const [v, frac] of [[x0, 0], [0, (0 - x0) / (x1 - x0)], [x1, 1]] as const) {
    if (frac < 0 || frac > 1) continue;
    const x = px + frac * pw;
    scene.line(x, py + ph, x, py + ph + 4, "#555");
    scene.text(x, py + ph + 15, fmtTick(v), 9, "middle");
  }
  for (const [v, frac] of [[y0, 0], [0, (0 - y0) / (y1 - y0)], [y1, 1]] as const) {
    if (frac < 0 || frac > 1) continue;
    const y = py + ph - frac * ph;
    scene.line(px - 4, y, px, y, "#555");
    scene.text(px - 6, y + 3, fmtTick(v), 9, "end");
  }
  scene.text(px + pw / 2, py + ph + 28, xLabel, 11, "middle");
  scene.text(px - 8, py - 6, yLabel, 11, "end");
}

/** Two lowest band surfaces over a k-patch around K, shared color scale. */
export function plotSurface(csvPath: string, outPath: string): void {
  const table = readBandCsv(csvPath);
  if (table.bands < 2) {
    throw new PlotError(`${csvPath}: surface plot needs at least two bands`);
  }
  const { xs, ys } = asGrid(table);
  // offsets from the patch centre (the centre row is K by construction)
  const cx = xs[(xs.length - 1) / 2 | 0];
  const cy = ys[(ys.length - 1) / 2 | 0];
  const xo = xs.map((v) => v - cx);
  const yo = ys.map((v) => v - cy);

  const lookup = new Map<string, number>();
  table.kx.forEach((kx, i) => lookup.set(`${kx},${table.ky[i]}`, i));
  const valueOf = (b: number) => (ix: number, iy: number) => {
    const i = lookup.get(`${xs[ix]},${ys[iy]}`);
    if (i === undefined) throw new PlotError(`${csvPath}: ragged grid`);
    return table.energies[b][i];
  };

  const all = table.energies[0].concat(table.energies[1]);
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const gap = Math.min(...table.energies[1].map(
    (e, i) => e - table.energies[0][i]));

  const W = 760;
  const H = 420;
  const scene = new Scene(W, H);
  scene.text(W / 2, 22, "band surfaces near K", 14, "middle");
  heatmapPanel(scene, 70, 60, 260, 260,
               { xs: xo, ys: yo, value: valueOf(0) }, lo, hi,
               "E1 (lower)", "k1 offset from K", "k2 offset");
  heatmapPanel(scene, 390, 60, 260, 260,
               { xs: xo, ys: yo, value: valueOf(1) }, lo, hi,
               "E2 (upper)", "k1 offset from K", "k2 offset");
  colorbar(scene, 680, 60, 14, 260, lo, hi);
  scene.text(70, 400, `min gap over patch: ${gap.toExponential(3)}`, 11);
  writeSvg(outPath, scene.render());
}

/** Overlaid dispersion curves E1,2(K + lambda k2) for one or more tables. */
export function plotCurves(csvPaths: string[], outPath: string): void {
  if (csvPaths.length === 0) {
    throw new PlotError("plot-curves needs at least one CSV input");
  }
  const tables = csvPaths.map(readBandCsv);
  const first = tables[0];
  for (const t of tables.slice(1)) {
    if (t.kx.length !== first.kx.length
        || t.kx.some((v, i) => Math.abs(v - first.kx[i]) > 1e-12)
        || t.ky.some((v, i) => Math.abs(v - first.ky[i]) > 1e-12)) {
      throw new PlotError(
        `${t.source}: lambda grid differs from ${first.source}`);
    }
  }
  const n = first.kx.length;
  const mid = Math.floor(n / 2);
  const lambda = first.kx.map((kx, i) => {
    const dx = kx - first.kx[mid];
    const dy = first.ky[i] - first.ky[mid];
    const sign = i >= mid ? 1 : -1;
    return (sign * Math.hypot(dx, dy)) / K2_NORM;
  });

  // order by Dirac energy so the legend tracks the exponent ordering
  const order = tables
    .map((t, i) => ({ i, ed: 0.5 * (t.energies[0][mid] + t.energies[1][mid]) }))
    .sort((a, b) => a.ed - b.ed)
    .map((o) => o.i);

  let lo = Infinity;
  let hi = -Infinity;
  for (const t of tables) {
    for (let b = 0; b < 2; b++) {
      lo = Math.min(lo, ...t.energies[b]);
      hi = Math.max(hi, ...t.energies[b]);
    }
  }
  const pad = 0.05 * (hi - lo || 1);

  const W = 640;
  const H = 460;
  const scene = new Scene(W, H);
  scene.text(W / 2, 24, "dispersion along the k2 direction through K", 14,
             "middle");
  const axes = new Axes(scene, {
    x0: lambda[0], x1: lambda[n - 1], y0: lo - pad, y1: hi + pad,
    px: 70, py: 50, pw: 480, ph: 340,
    xLabel: "lambda (path K + lambda k2)", yLabel: "E",
  });
  axes.draw();
  order.forEach((idx, rank) => {
    const t = tables[idx];
    const color = CURVE_COLORS[rank % CURVE_COLORS.length];
    for (let b = 0; b < 2; b++) {
      const pts = lambda.map((lam, i): [number, number] =>
        [axes.sx(lam), axes.sy(t.energies[b][i])]);
      scene.polyline(pts, color);
    }
    const label = fileStem(t.source).replace(/^bands_/, "").replace("p", ".");
    scene.text(560, 60 + 16 * rank, label, 11, "start", color);
  });
  writeSvg(outPath, scene.render());
}

/** Log-log error versus epsilon with the fitted rate annotated. */
export function plotConvergence(jsonPath: string, outPath: string): void {
  const rep = readConvergenceJson(jsonPath);
  const eps = rep.cases.map((c) => c.epsilon);
  const err = rep.cases.map((c) => c.error);
  if (err.some((e) => !(e > 0)) || eps.some((e) => !(e > 0))) {
    throw new PlotError(`${jsonPath}: nonpositive epsilon or error`);
  }
  const exp = (lo: number, hi: number): [number, number] =>
    [lo / Math.pow(hi / lo || 2, 0.15) , hi * Math.pow(hi / lo || 2, 0.15)];
  const [ex0, ex1] = exp(Math.min(...eps), Math.max(...eps));
  const [ey0, ey1] = exp(Math.min(...err), Math.max(...err));

  const W = 560;
  const H = 440;
  const scene = new Scene(W, H);
  scene.text(W / 2, 24, "envelope approximation error vs epsilon", 14,
             "middle");
  const axes = new Axes(scene, {
    x0: ex0, x1: ex1 === ex0 ? ex0 * 2 : ex1,
    y0: ey0, y1: ey1 === ey0 ? ey0 * 2 : ey1,
    px: 80, py: 50, pw: 420, ph: 320,
    xLabel: "epsilon", yLabel: "error",
    xLog: true, yLog: true,
  });
  axes.draw();
  if (rep.cases.length >= 2 && rep.fittedRate !== undefined) {
    // fitted power law through the geometric mean point
    const mx = Math.exp(eps.reduce((a, e) => a + Math.log(e), 0) / eps.length);
    const my = Math.exp(err.reduce((a, e) => a + Math.log(e), 0) / err.length);
    const r = rep.fittedRate;
    const yAt = (x: number) => my * Math.pow(x / mx, r);
    scene.polyline(
      [[axes.sx(ex0), axes.sy(yAt(ex0))], [axes.sx(ex1), axes.sy(yAt(ex1))]],
      "#bbbbbb", 1.2);
    scene.text(90, 60, `fitted rate: ${r.toFixed(3)}`, 12);
  }
  for (let i = 0; i < eps.length; i++) {
    scene.circle(axes.sx(eps[i]), axes.sy(err[i]), 4, "#1f5fbf");
  }
  writeSvg(outPath, scene.render());
}

/** Field magnitude heatmap from a snapshot pair <base>.bin/.json. */
export function plotField(basePath: string, outPath: string): void {
  const base = basePath.replace(/\.(bin|json)$/, "");
  const snap = readFieldSnapshot(base);

  // block-maximum downsample to keep the SVG tractable
  const maxSide = 128;
  const step = Math.max(1, Math.ceil(Math.max(snap.rows, snap.cols) / maxSide));
  const rows = Math.floor(snap.rows / step);
  const cols = Math.floor(snap.cols / step);
  let hi = 0;
  const img: number[][] = [];
  for (let i = 0; i < rows; i++) {
    const row: number[] = new Array(cols).fill(0);
    for (let j = 0; j < cols; j++) {
      let v = 0;
      for (let a = 0; a < step; a++) {
        for (let b = 0; b < step; b++) {
          v = Math.max(v, snap.magnitude[i * step + a][j * step + b]);
        }
      }
      row[j] = v;
      hi = Math.max(hi, v);
    }
    img.push(row);
  }
  const W = 560;
  const H = 520;
  const scene = new Scene(W, H);
  const tstr = snap.t.toPrecision(3);
  scene.text(W / 2, 24, `|psi| at t = ${tstr} (epsilon = ${snap.epsilon})`, 14,
             "middle");
  const px = 60;
  const py = 50;
  const pw = 420;
  const ph = 420;
  const cw = pw / cols;
  const ch = ph / rows;
  const span = hi || 1;
  for (let i = 0; i < rows; i++) {
    for (let j = 0; j < cols; j++) {
      scene.rect(px + i * cw, py + ph - (j + 1) * ch, cw + 0.4, ch + 0.4,
                 colormap(img[i][j] / span));
    }
  }
  scene.rect(px, py, pw, ph, "none", "#555");
  scene.text(px + pw / 2, py + ph + 18, "lattice direction 1", 11, "middle");
  scene.text(px - 8, py - 6, "lattice direction 2", 11, "start");
  colorbar(scene, 500, py, 14, ph, 0, hi);
  writeSvg(outPath, scene.render());
}
