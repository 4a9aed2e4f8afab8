// Two-parameter (mu, eta) map of saddle-node and Hopf curves with
// codimension-2 markers (BT red, GH brown, ZH cyan).

import { writeFileSync } from "fs";
import { fileURLToPath } from "url";
import { readCsv, requireColumns, floats, Table } from "./csv.js";
import { makeAxes, COLOR } from "./svg.js";
import { parseFlags, extent, Flags } from "./flags.js";

const COLS = ["mu", "eta", "kind", "omega_or_sv", "codim2_flag"];

export function renderMap(tables: Array<[Table, string]>, flags: Partial<Flags> = {}): string {
  for (const [t, path] of tables) requireColumns(t, COLS, path);
  const allMu = tables.flatMap(([t]) => floats(t, "mu"));
  const allEta = tables.flatMap(([t]) => floats(t, "eta"));
  const xlim = flags.xlim ?? extent(allMu);
  const ylim = flags.ylim ?? extent(allEta);
  const { svg, xs, ys } = makeAxes(
    flags.width ?? 720,
    flags.height ?? 560,
    xlim,
    ylim,
    "mu",
    "eta",
    flags.title ?? "two-parameter bifurcation curves",
  );

  for (const [t] of tables) {
    const kind = t.rows[0]?.kind ?? "H";
    const stroke = kind === "SN" ? "#777777" : "#d62728";
    const pts: Array<[number, number]> = t.rows.map((r) => [
      xs.map(Number(r.mu)),
      ys.map(Number(r.eta)),
    ]);
    svg.polyline(pts, stroke, 1.6);
    t.rows.forEach((r, i) => {
      const flag = r.codim2_flag;
      if (flag && flag !== "none") {
        const color = (COLOR as Record<string, string>)[flag] ?? "#666";
        svg.circle(pts[i][0], pts[i][1], 4, color, "#222");
        svg.text(pts[i][0] + 8, pts[i][1] - 6, flag, 10, "start");
      }
    });
  }
  return svg.render();
}

export function main(argv: string[]) {
  const flags = parseFlags(argv, "map2p");
  const paths = flags.input.split(";");
  const tables: Array<[Table, string]> = paths.map((p) => [readCsv(p), p]);
  writeFileSync(flags.out, renderMap(tables, flags));
  console.log(`wrote ${flags.out}`);
}

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  main(process.argv.slice(2));
}
