/** Structured failure for malformed or mismatched inputs. */
export class PlotError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "PlotError";
  }
}
