/**
 * Deterministic SVG line plots for diagnostics series, with an optional
 * refinement-pair mode annotating the observed convergence order
 * p = log2(e_h / e_{h/2}) (general grids: log-ratio of errors over
 * log-ratio of spacings).
 */
import { Series, CsvError, requireColumn } from "./csv.js";

export interface PlotSpec {
  inputs: string[];
  columns: string[];
  scale?: "linear" | "log";
  refinementPair?: { column: string };
  output: string;
  title?: string;
  width?: number;
  height?: number;
}

export function validateSpec(raw: unknown): PlotSpec {
  const spec = raw as Partial<PlotSpec>;
  if (!Array.isArray(spec.inputs) || spec.inputs.length === 0) {
    throw new CsvError("plot spec needs at least one input CSV");
  }
  if (!Array.isArray(spec.columns) || spec.columns.length === 0) {
    throw new CsvError("plot spec needs at least one column");
  }
  if (typeof spec.output !== "string") {
    throw new CsvError("plot spec needs an output path");
  }
  if (spec.scale !== undefined && spec.scale !== "linear" && spec.scale !== "log") {
    throw new CsvError(`unknown scale ${String(spec.scale)}`);
  }
  return {
    scale: "linear",
    width: 720,
    height: 440,
    ...spec,
  } as PlotSpec;
}

/** Observed order from two resolutions of one error column. */
export function observedOrder(
  coarse: { h: number; err: number },
  fine: { h: number; err: number },
): number {
  if (coarse.err <= 0 || fine.err <= 0) return NaN;
  return Math.log(coarse.err / fine.err) / Math.log(coarse.h / fine.h);
}

/** Refinement data from series rows keyed by resolution n (h ~ 1/n). */
export function refinementFromSeries(series: Series[], column: string) {
  const points: { h: number; err: number }[] = [];
  for (const s of series) {
    const key = requireColumn(s, s.keyName);
    const err = requireColumn(s, column);
    for (let i = 0; i < key.length; i++) {
      points.push({ h: 1.0 / key[i], err: err[i] });
    }
  }
  points.sort((a, b) => b.h - a.h);
  if (points.length < 2) throw new CsvError("refinement mode needs two resolutions");
  const orders: number[] = [];
  for (let i = 0; i + 1 < points.length; i++) {
    orders.push(observedOrder(points[i], points[i + 1]));
  }
  return { points, orders };
}

const MARGIN = { left: 64, right: 16, top: 28, bottom: 44 };

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e-3 && a < 1e4) return String(Number(v.toPrecision(5)));
  return v.toExponential(2);
}

class Scale {
  constructor(
    readonly lo: number,
    readonly hi: number,
    readonly outLo: number,
    readonly outHi: number,
    readonly log: boolean,
  ) {}

  map(v: number): number {
    const [a, b] = this.log
      ? [Math.log10(this.lo), Math.log10(this.hi)]
      : [this.lo, this.hi];
    const t = this.log ? Math.log10(v) : v;
    const frac = b === a ? 0.5 : (t - a) / (b - a);
    return this.outLo + frac * (this.outHi - this.outLo);
  }

  ticks(n = 5): number[] {
    const out: number[] = [];
    if (this.log) {
      const a = Math.ceil(Math.log10(this.lo));
      const b = Math.floor(Math.log10(this.hi));
      for (let e = a; e <= b; e++) out.push(10 ** e);
      if (out.length === 0) out.push(this.lo, this.hi);
      return out;
    }
    for (let i = 0; i <= n; i++) out.push(this.lo + ((this.hi - this.lo) * i) / n);
    return out;
  }
}

const PALETTE = ["#1f6fb2", "#c44e52", "#55a868", "#8172b2", "#ccb974", "#64b5cd"];

export function renderSvg(spec: PlotSpec, series: Series[]): string {
  const width = spec.width ?? 720;
  const height = spec.height ?? 440;
  const log = spec.scale === "log";

  const traces: { label: string; xs: number[]; ys: number[] }[] = [];
  for (let si = 0; si < series.length; si++) {
    const s = series[si];
    const xs = requireColumn(s, s.keyName);
    for (const col of spec.columns) {
      const ys = requireColumn(s, col);
      const label = series.length > 1 ? `${col} [${si}]` : col;
      traces.push({ label, xs, ys });
    }
  }

  let xlo = Infinity, xhi = -Infinity, ylo = Infinity, yhi = -Infinity;
  for (const t of traces) {
    for (let i = 0; i < t.xs.length; i++) {
      const y = t.ys[i];
      if (log && y <= 0) continue;
      xlo = Math.min(xlo, t.xs[i]);
      xhi = Math.max(xhi, t.xs[i]);
      ylo = Math.min(ylo, y);
      yhi = Math.max(yhi, y);
    }
  }
  if (!Number.isFinite(xlo)) throw new CsvError("nothing to plot (log scale with no positive values?)");
  if (ylo === yhi) {
    ylo -= 0.5;
    yhi += 0.5;
  }
  const sx = new Scale(xlo, xhi, MARGIN.left, width - MARGIN.right, false);
  const sy = new Scale(ylo, yhi, height - MARGIN.bottom, MARGIN.top, log);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
  );
  // axes
  parts.push(
    `<line x1="${MARGIN.left}" y1="${height - MARGIN.bottom}" x2="${width - MARGIN.right}" y2="${height - MARGIN.bottom}" stroke="#444"/>`,
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${height - MARGIN.bottom}" stroke="#444"/>`,
  );
  for (const tx of new Scale(xlo, xhi, 0, 1, false).ticks(6)) {
    const x = sx.map(tx);
    parts.push(
      `<line x1="${x.toFixed(2)}" y1="${height - MARGIN.bottom}" x2="${x.toFixed(2)}" y2="${height - MARGIN.bottom + 5}" stroke="#444"/>`,
      `<text x="${x.toFixed(2)}" y="${height - MARGIN.bottom + 18}" font-size="11" text-anchor="middle" fill="#333">${fmt(tx)}</text>`,
    );
  }
  for (const ty of sy.ticks(5)) {
    const y = sy.map(ty);
    parts.push(
      `<line x1="${MARGIN.left - 5}" y1="${y.toFixed(2)}" x2="${MARGIN.left}" y2="${y.toFixed(2)}" stroke="#444"/>`,
      `<text x="${MARGIN.left - 8}" y="${(y + 4).toFixed(2)}" font-size="11" text-anchor="end" fill="#333">${fmt(ty)}</text>`,
    );
  }
  // traces
  traces.forEach((t, i) => {
    const pts: string[] = [];
    for (let j = 0; j < t.xs.length; j++) {
      if (log && t.ys[j] <= 0) continue;
      pts.push(`${sx.map(t.xs[j]).toFixed(2)},${sy.map(t.ys[j]).toFixed(2)}`);
    }
    const color = PALETTE[i % PALETTE.length];
    parts.push(`<polyline points="${pts.join(" ")}" fill="none" stroke="${color}" stroke-width="1.6"/>`);
    parts.push(
      `<text x="${width - MARGIN.right - 6}" y="${MARGIN.top + 14 * (i + 1)}" font-size="11" text-anchor="end" fill="${color}">${t.label}</text>`,
    );
  });
  if (spec.title) {
    parts.push(
      `<text x="${(width / 2).toFixed(0)}" y="16" font-size="13" text-anchor="middle" fill="#111">${spec.title}</text>`,
    );
  }
  if (spec.refinementPair) {
    const { orders } = refinementFromSeries(series, spec.refinementPair.column);
    const label = orders.map((o) => (Number.isNaN(o) ? "n/a" : o.toFixed(3))).join(", ");
    parts.push(
      `<text x="${MARGIN.left + 8}" y="${MARGIN.top + 2}" font-size="12" fill="#111">observed order p = ${label}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("\n");
}
