// (y_N, y_E) projection of an orbit or trajectory, colored by overturning
// strength |Psi|, with shutdown events marked by orange dots.

import { writeFileSync, readFileSync } from "fs";
import { fileURLToPath } from "url";
import { readCsv, requireColumns, floats, SchemaError, Table } from "./csv.js";
import { makeAxes, COLOR, strengthColor } from "./svg.js";
import { parseFlags, extent, Flags } from "./flags.js";

const TRAJ_COLS = ["t", "x_N", "y_N", "y_E", "x_D", "Psi"];

interface Series {
  t: number[];
  yN: number[];
  yE: number[];
  psi: number[];
}

export function loadSeries(path: string): Series {
  if (path.endsWith(".json")) {
    const doc = JSON.parse(readFileSync(path, "utf8"));
    if (!doc.states || !doc.mesh_times) {
      throw new SchemaError(`${path}: missing required column 'states'`);
    }
    const states: number[][] = doc.states;
    return {
      t: doc.mesh_times,
      yN: states.map((s) => s[1]),
      yE: states.map((s) => s[2]),
      psi: states.map(() => NaN),
    };
  }
  const table = readCsv(path);
  requireColumns(table, TRAJ_COLS, path);
  return {
    t: floats(table, "t"),
    yN: floats(table, "y_N"),
    yE: floats(table, "y_E"),
    psi: floats(table, "Psi"),
  };
}

export function renderOrbit(series: Series, events: Table | null,
                            flags: Partial<Flags> = {}): string {
  const xlim = flags.xlim ?? extent(series.yN);
  const ylim = flags.ylim ?? extent(series.yE);
  const { svg, xs, ys } = makeAxes(
    flags.width ?? 560,
    flags.height ?? 560,
    xlim,
    ylim,
    "y_N",
    "y_E",
    flags.title ?? "orbit projection",
  );
  const absPsi = series.psi.map(Math.abs);
  const finite = absPsi.filter(Number.isFinite);
  const lo = finite.length ? Math.min(...finite) : 0;
  const hi = finite.length ? Math.max(...finite) : 1;
  for (let i = 1; i < series.t.length; i++) {
    const color = Number.isFinite(absPsi[i])
      ? strengthColor((absPsi[i] - lo) / (hi - lo || 1))
      : "#555";
    svg.polyline(
      [
        [xs.map(series.yN[i - 1]), ys.map(series.yE[i - 1])],
        [xs.map(series.yN[i]), ys.map(series.yE[i])],
      ],
      color,
      1.2,
    );
  }
  if (events) {
    for (const ev of events.rows) {
      // mark the state at the diffusive entry (nearest sample in time)
      const tEv = Number(ev.t_enter_diffusive);
      let best = 0;
      for (let i = 0; i < series.t.length; i++) {
        if (Math.abs(series.t[i] - tEv) < Math.abs(series.t[best] - tEv)) best = i;
      }
      svg.circle(xs.map(series.yN[best]), ys.map(series.yE[best]), 4,
                 COLOR.event, "#222");
    }
  }
  return svg.render();
}

export function main(argv: string[]) {
  const flags = parseFlags(argv, "orbit");
  const series = loadSeries(flags.input);
  const events = flags.events ? readCsv(flags.events) : null;
  writeFileSync(flags.out, renderOrbit(series, events, flags));
  console.log(`wrote ${flags.out}`);
}

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  main(process.argv.slice(2));
}
