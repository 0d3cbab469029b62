import * as crypto from "node:crypto";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import { PlotError } from "../src/errors";
import { plotConvergence, plotCurves, plotField, plotSurface } from "../src/plots";
import { readBandCsv, readFieldSnapshot } from "../src/readers";

const SAMPLES = path.join(__dirname, "..", "samples");
const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "plots-"));

afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

function sha256(file: string): string {
  return crypto.createHash("sha256").update(fs.readFileSync(file)).digest("hex");
}

function out(name: string): string {
  return path.join(tmp, name);
}

function expectSvg(file: string): string {
  const text = fs.readFileSync(file, "utf8");
  expect(text.startsWith("<svg")).toBe(true);
  expect(text.trimEnd().endsWith("</svg>")).toBe(true);
  return text;
}

describe("plot-surface", () => {
  const fig1a = path.join(SAMPLES, "fig1a", "bands_sigma2.csv");
  const fig1b = path.join(SAMPLES, "fig1b", "bands_sigma2.csv");

  it("renders the unperturbed patch with a touching cone", () => {
    const before = sha256(fig1a);
    plotSurface(fig1a, out("fig1a.svg"));
    const svg = expectSvg(out("fig1a.svg"));
    expect(sha256(fig1a)).toBe(before); // pure reader
    const m = svg.match(/min gap over patch: ([0-9.e+-]+)/);
    expect(m).not.toBeNull();
    expect(parseFloat(m![1])).toBeLessThan(1e-6);
  });

  it("renders the perturbed patch with a visible gap", () => {
    plotSurface(fig1b, out("fig1b.svg"));
    const svg = expectSvg(out("fig1b.svg"));
    const m = svg.match(/min gap over patch: ([0-9.e+-]+)/);
    expect(parseFloat(m![1])).toBeGreaterThan(1e-3);
  });

  it("rejects an empty file", () => {
    const empty = out("empty.csv");
    fs.writeFileSync(empty, "");
    expect(() => plotSurface(empty, out("x.svg"))).toThrow(PlotError);
  });

  it("rejects path-mode input", () => {
    const fig2 = path.join(SAMPLES, "fig2", "bands_sigma2.csv");
    expect(() => plotSurface(fig2, out("y.svg"))).toThrow(PlotError);
  });

  it("refuses non-svg output paths", () => {
    expect(() => plotSurface(fig1a, out("z.png"))).toThrow(PlotError);
  });
});

describe("plot-curves", () => {
  const files = ["bands_sigma1p2.csv", "bands_sigma1p6.csv", "bands_sigma2.csv"]
    .map((f) => path.join(SAMPLES, "fig2", f));

  it("renders three stacked dispersion pairs ordered by energy", () => {
    const hashes = files.map(sha256);
    plotCurves(files, out("fig2.svg"));
    const svg = expectSvg(out("fig2.svg"));
    files.forEach((f, i) => expect(sha256(f)).toBe(hashes[i]));
    // legend entries present, ordered by Dirac energy = by exponent
    const i12 = svg.indexOf("sigma1.2");
    const i16 = svg.indexOf("sigma1.6");
    const i20 = svg.indexOf("sigma2");
    expect(i12).toBeGreaterThan(-1);
    expect(i16).toBeGreaterThan(i12);
    expect(i20).toBeGreaterThan(i16);
  });

  it("accepts a single input", () => {
    plotCurves([files[2]], out("single.svg"));
    expectSvg(out("single.svg"));
  });

  it("rejects mismatched lambda grids", () => {
    const table = readBandCsv(files[0]);
    const lines = fs.readFileSync(files[0], "utf8").split("\n");
    const clipped = lines.slice(0, lines.length - 2).join("\n") + "\n";
    const other = out("clipped.csv");
    fs.writeFileSync(other, clipped);
    expect(table.kx.length).toBeGreaterThan(2);
    expect(() => plotCurves([files[0], other], out("m.svg"))).toThrow(PlotError);
  });
});

describe("plot-convergence", () => {
  const report = {
    cases: [
      { epsilon: 0.2, error: 1.2, runtimeSec: 1.0 },
      { epsilon: 0.1, error: 0.62, runtimeSec: 2.0 },
      { epsilon: 0.05, error: 0.33, runtimeSec: 4.0 },
    ],
    fittedRate: 0.93,
  };

  it("renders a log-log plot with the fitted slope", () => {
    const p = out("report.json");
    fs.writeFileSync(p, JSON.stringify(report));
    plotConvergence(p, out("conv.svg"));
    const svg = expectSvg(out("conv.svg"));
    expect(svg).toContain("fitted rate: 0.930");
  });

  it("draws a scatter without a fit for a single point", () => {
    const p = out("single.json");
    fs.writeFileSync(p, JSON.stringify({ cases: [report.cases[0]] }));
    plotConvergence(p, out("conv1.svg"));
    const svg = expectSvg(out("conv1.svg"));
    expect(svg).not.toContain("fitted rate");
  });

  it("rejects a report without cases", () => {
    const p = out("broken.json");
    fs.writeFileSync(p, JSON.stringify({ fittedRate: 1.0 }));
    expect(() => plotConvergence(p, out("c.svg"))).toThrow(PlotError);
  });
});

describe("plot-field", () => {
  const base = path.join(SAMPLES, "field", "field_001");

  it("renders a magnitude heatmap and leaves inputs untouched", () => {
    const hb = sha256(base + ".bin");
    const hj = sha256(base + ".json");
    plotField(base, out("field.svg"));
    expectSvg(out("field.svg"));
    expect(sha256(base + ".bin")).toBe(hb);
    expect(sha256(base + ".json")).toBe(hj);
  });

  it("accepts the sidecar path as input too", () => {
    plotField(base + ".json", out("field2.svg"));
    expectSvg(out("field2.svg"));
  });

  it("rejects sidecars with a different schema version", () => {
    const meta = JSON.parse(fs.readFileSync(base + ".json", "utf8"));
    meta.schemaVersion = 99;
    const fake = out("fake_field");
    fs.writeFileSync(fake + ".json", JSON.stringify(meta));
    fs.copyFileSync(base + ".bin", fake + ".bin");
    expect(() => plotField(fake, out("f.svg"))).toThrow(/schema version/);
  });

  it("rejects truncated payloads", () => {
    const fake = out("short_field");
    fs.copyFileSync(base + ".json", fake + ".json");
    const buf = fs.readFileSync(base + ".bin");
    fs.writeFileSync(fake + ".bin", buf.subarray(0, buf.length - 16));
    expect(() => plotField(fake, out("g.svg"))).toThrow(/bytes/);
  });
});

describe("determinism", () => {
  it("re-rendering identical inputs produces identical bytes", () => {
    const src = path.join(SAMPLES, "fig1a", "bands_sigma2.csv");
    plotSurface(src, out("d1.svg"));
    plotSurface(src, out("d2.svg"));
    expect(sha256(out("d1.svg"))).toBe(sha256(out("d2.svg")));
  });

  it("snapshot magnitudes round-trip the binary layout", () => {
    const snap = readFieldSnapshot(path.join(SAMPLES, "field", "field_000"));
    expect(snap.rows).toBe(snap.cols);
    expect(Math.max(...snap.magnitude.flat())).toBeGreaterThan(0);
  });
});
