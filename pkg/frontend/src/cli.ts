import { PlotError } from "./errors";
import { plotConvergence, plotCurves, plotField, plotSurface } from "./plots";

export type JobKind = "surface" | "curves" | "convergence" | "field";

const USAGE: Record<JobKind, string> = {
  surface: "plot-surface IN.csv OUT.svg",
  curves: "plot-curves IN1.csv[,IN2...] OUT.svg",
  convergence: "plot-convergence report.json OUT.svg",
  field: "plot-field field_000 OUT.svg",
};

export function runJob(kind: JobKind, argv: string[]): number {
  if (argv.length !== 2) {
    process.stderr.write(`usage: ${USAGE[kind]}\n`);
    return 2;
  }
  const [input, output] = argv;
  try {
    switch (kind) {
      case "surface":
        plotSurface(input, output);
        break;
      case "curves":
        plotCurves(input.split(","), output);
        break;
      case "convergence":
        plotConvergence(input, output);
        break;
      case "field":
        plotField(input, output);
        break;
    }
  } catch (e) {
    if (e instanceof PlotError) {
      process.stderr.write(`error: ${e.message}\n`);
      return 1;
    }
    if ((e as NodeJS.ErrnoException).code === "ENOENT") {
      process.stderr.write(`error: input not found: ${(e as Error).message}\n`);
      return 1;
    }
    throw e;
  }
  return 0;
}
