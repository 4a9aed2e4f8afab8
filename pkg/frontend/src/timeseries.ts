// Time series of a trajectory channel (K_N by default, or Psi), with
// shutdown events marked by orange dots at the event minima.

import { writeFileSync } from "fs";
import { fileURLToPath } from "url";
import { readCsv, requireColumns, floats, Table } from "./csv.js";
import { makeAxes, COLOR } from "./svg.js";
import { parseFlags, extent, Flags } from "./flags.js";

const TRAJ_COLS = ["t", "x_N", "y_N", "y_E", "x_D", "Psi", "K_N", "K_E"];
const EVENT_COLS = ["t_enter_intermediate", "t_enter_diffusive", "t_recover", "min_K_N"];

export function renderTimeseries(table: Table, events: Table | null,
                                 path: string,
                                 flags: Partial<Flags> = {}): string {
  requireColumns(table, TRAJ_COLS, path);
  const channel = flags.channel ?? "K_N";
  if (!TRAJ_COLS.includes(channel)) {
    throw new Error(`timeseries: unknown channel '${channel}'`);
  }
  const t = floats(table, "t");
  const v = floats(table, channel);
  const xlim = flags.xlim ?? extent(t, 0.0);
  const ylim = flags.ylim ?? extent(v);
  const { svg, xs, ys } = makeAxes(
    flags.width ?? 860,
    flags.height ?? 360,
    xlim,
    ylim,
    "t",
    channel,
    flags.title ?? `${channel}(t)`,
  );
  svg.polyline(t.map((ti, i) => [xs.map(ti), ys.map(v[i])] as [number, number]),
               "#1f60c4", 1.0);
  if (events) {
    requireColumns(events, EVENT_COLS, "events");
    for (const ev of events.rows) {
      const tm = Number(ev.t_enter_diffusive);
      const val = channel === "K_N" ? Number(ev.min_K_N) : interp(t, v, tm);
      svg.circle(xs.map(tm), ys.map(val), 4, COLOR.event, "#222");
    }
  }
  return svg.render();
}

function interp(t: number[], v: number[], x: number): number {
  let i = t.findIndex((ti) => ti >= x);
  if (i <= 0) i = 1;
  const w = (x - t[i - 1]) / (t[i] - t[i - 1] || 1);
  return v[i - 1] + w * (v[i] - v[i - 1]);
}

export function main(argv: string[]) {
  const flags = parseFlags(argv, "timeseries");
  const table = readCsv(flags.input);
  const events = flags.events ? readCsv(flags.events) : null;
  writeFileSync(flags.out, renderTimeseries(table, events, flags.input, flags));
  console.log(`wrote ${flags.out}`);
}

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  main(process.argv.slice(2));
}
