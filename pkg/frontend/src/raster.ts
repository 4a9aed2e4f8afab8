// (mu, eta) raster of a sweep channel (lambda_thresholded by default),
// rendered as filled grid cells with zero cells in grey.

import { writeFileSync } from "fs";
import { fileURLToPath } from "url";
import { readCsv, requireColumns, floats, Table } from "./csv.js";
import { makeAxes, rasterColor } from "./svg.js";
import { parseFlags, Flags } from "./flags.js";

const LYAP_COLS = ["mu", "eta", "lambda_raw", "lambda_thresholded", "converged"];

export function renderRaster(table: Table, path: string,
                             flags: Partial<Flags> = {}): string {
  const channel = flags.channel ?? "lambda_thresholded";
  requireColumns(table, table.header.includes("lambda_thresholded")
    ? LYAP_COLS : ["mu", "eta", channel], path);
  const mu = floats(table, "mu");
  const eta = floats(table, "eta");
  const val = floats(table, channel);
  const mus = [...new Set(mu)].sort((a, b) => a - b);
  const etas = [...new Set(eta)].sort((a, b) => a - b);
  const dx = mus.length > 1 ? mus[1] - mus[0] : 1;
  const dy = etas.length > 1 ? etas[1] - etas[0] : 1;
  const xlim = flags.xlim ?? [mus[0] - dx / 2, mus[mus.length - 1] + dx / 2];
  const ylim = flags.ylim ?? [etas[0] - dy / 2, etas[etas.length - 1] + dy / 2];
  const { svg, xs, ys } = makeAxes(
    flags.width ?? 720,
    flags.height ?? 640,
    xlim as [number, number],
    ylim as [number, number],
    "mu",
    "eta",
    flags.title ?? `${channel} over (mu, eta)`,
  );
  const pos = val.filter((v) => Number.isFinite(v) && v > 0);
  const vmax = pos.length ? Math.max(...pos) : 1;
  for (let i = 0; i < mu.length; i++) {
    const v = val[i];
    const fill = !Number.isFinite(v)
      ? "#ffffff"
      : v > 0
        ? rasterColor(v / vmax)
        : "#d8d8d8";
    const x0 = xs.map(mu[i] - dx / 2);
    const x1 = xs.map(mu[i] + dx / 2);
    const y0 = ys.map(eta[i] + dy / 2);
    const y1 = ys.map(eta[i] - dy / 2);
    svg.rect(Math.min(x0, x1), Math.min(y0, y1), Math.abs(x1 - x0),
             Math.abs(y1 - y0), fill);
  }
  return svg.render();
}

export function main(argv: string[]) {
  const flags = parseFlags(argv, "raster");
  const table = readCsv(flags.input);
  writeFileSync(flags.out, renderRaster(table, flags.input, flags));
  console.log(`wrote ${flags.out}`);
}

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  main(process.argv.slice(2));
}
