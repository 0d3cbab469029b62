/**
 * Minimal deterministic SVG scene builder: fixed coordinate precision, no
 * timestamps, no randomness, so re-rendering identical inputs reproduces
 * identical bytes.
 */

const P = (v: number): string => {
  const s = v.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
};

export interface Margins {
  left: number;
  right: number;
  top: number;
  bottom: number;
}

export class Scene {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {}

  add(part: string): void {
    this.parts.push(part);
  }

  rect(x: number, y: number, w: number, h: number, fill: string,
       stroke = "none"): void {
    this.add(`<rect x="${P(x)}" y="${P(y)}" width="${P(w)}" height="${P(h)}" `
      + `fill="${fill}" stroke="${stroke}"/>`);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke = "#000",
       strokeWidth = 1): void {
    this.add(`<line x1="${P(x1)}" y1="${P(y1)}" x2="${P(x2)}" y2="${P(y2)}" `
      + `stroke="${stroke}" stroke-width="${strokeWidth}"/>`);
  }

  polyline(points: Array<[number, number]>, stroke: string,
           strokeWidth = 1.5): void {
    const pts = points.map(([x, y]) => `${P(x)},${P(y)}`).join(" ");
    this.add(`<polyline points="${pts}" fill="none" stroke="${stroke}" `
      + `stroke-width="${strokeWidth}"/>`);
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.add(`<circle cx="${P(x)}" cy="${P(y)}" r="${P(r)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, s: string, size = 11, anchor = "start",
       fill = "#222"): void {
    const esc = s.replace(/&/g, "&amp;").replace(/</g, "&lt;")
      .replace(/>/g, "&gt;");
    this.add(`<text x="${P(x)}" y="${P(y)}" font-size="${size}" `
      + `font-family="Helvetica, Arial, sans-serif" text-anchor="${anchor}" `
      + `fill="${fill}">${esc}</text>`);
  }

  render(): string {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" `
      + `height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">\n`
      + `<rect width="${this.width}" height="${this.height}" fill="#ffffff"/>\n`
      + this.parts.join("\n") + "\n</svg>\n";
  }
}

/** 1-2-5 tick positions covering [lo, hi]. */
export function ticks(lo: number, hi: number, target = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const rawStep = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (rawStep <= m * mag) {
      step = m * mag;
      break;
    }
  }
  const out: number[] = [];
  let v = Math.ceil(lo / step) * step;
  for (; v <= hi + 1e-12 * span; v += step) {
    out.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return out;
}

export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return String(parseFloat(v.toPrecision(4)));
}

export interface AxesSpec {
  x0: number; x1: number; y0: number; y1: number; // data ranges
  px: number; py: number; pw: number; ph: number; // pixel box
  xLabel: string;
  yLabel: string;
  xLog?: boolean;
  yLog?: boolean;
}

export class Axes {
  constructor(readonly scene: Scene, readonly spec: AxesSpec) {}

  sx(x: number): number {
    const { x0, x1, px, pw, xLog } = this.spec;
    const t = xLog
      ? (Math.log(x) - Math.log(x0)) / (Math.log(x1) - Math.log(x0))
      : (x - x0) / (x1 - x0);
    return px + t * pw;
  }

  sy(y: number): number {
    const { y0, y1, py, ph, yLog } = this.spec;
    const t = yLog
      ? (Math.log(y) - Math.log(y0)) / (Math.log(y1) - Math.log(y0))
      : (y - y0) / (y1 - y0);
    return py + ph - t * ph;
  }

  private logTicks(lo: number, hi: number): number[] {
    const out: number[] = [];
    for (let e = Math.ceil(Math.log10(lo) - 1e-9);
         e <= Math.floor(Math.log10(hi) + 1e-9); e++) {
      out.push(Math.pow(10, e));
    }
    if (out.length === 0) out.push(lo, hi);
    return out;
  }

  draw(): void {
    const s = this.scene;
    const { px, py, pw, ph, x0, x1, y0, y1, xLog, yLog } = this.spec;
    s.rect(px, py, pw, ph, "none", "#555");
    const xt = xLog ? this.logTicks(x0, x1) : ticks(x0, x1);
    for (const v of xt) {
      const x = this.sx(v);
      if (x < px - 0.5 || x > px + pw + 0.5) continue;
      s.line(x, py + ph, x, py + ph + 4, "#555");
      s.text(x, py + ph + 16, fmtTick(v), 10, "middle");
    }
    const yt = yLog ? this.logTicks(y0, y1) : ticks(y0, y1);
    for (const v of yt) {
      const y = this.sy(v);
      if (y < py - 0.5 || y > py + ph + 0.5) continue;
      s.line(px - 4, y, px, y, "#555");
      s.text(px - 7, y + 3, fmtTick(v), 10, "end");
    }
    s.text(px + pw / 2, py + ph + 32, this.spec.xLabel, 12, "middle");
    // vertical label drawn horizontally above the axis to keep things simple
    s.text(px - 8, py - 8, this.spec.yLabel, 12, "start");
  }
}
