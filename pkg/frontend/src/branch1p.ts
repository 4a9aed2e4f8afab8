// One-parameter bifurcation diagram: equilibrium branches as Psi(mu) with
// stability coloring, or a cycle branch as max/min Psi, with registered
// bifurcation markers.

import { writeFileSync } from "fs";
import { fileURLToPath } from "url";
import { readCsv, requireColumns, floats, Table } from "./csv.js";
import { makeAxes, COLOR } from "./svg.js";
import { parseFlags, extent, Flags } from "./flags.js";

const EQ_COLS = ["mu", "eta", "Psi", "stable", "bif"];
const CYCLE_COLS = ["mu", "eta", "period", "psi_max", "psi_min", "stable", "bif"];

export function renderBranch(table: Table, path: string, flags: Partial<Flags> = {}): string {
  const isCycle = table.header.includes("psi_max");
  requireColumns(table, isCycle ? CYCLE_COLS : EQ_COLS, path);
  const mu = floats(table, "mu");
  const psiCols = isCycle ? ["psi_max", "psi_min"] : ["Psi"];
  const allPsi = psiCols.flatMap((c) => floats(table, c));
  const xlim = flags.xlim ?? extent(mu);
  const ylim = flags.ylim ?? extent(allPsi);
  const { svg, xs, ys } = makeAxes(
    flags.width ?? 720,
    flags.height ?? 480,
    xlim,
    ylim,
    "mu",
    "Psi",
    flags.title ?? (isCycle ? "periodic-orbit branch" : "equilibrium branches"),
  );

  const plain = table.rows.filter((r) => r.bif === "none");
  for (const col of psiCols) {
    // split into runs of constant stability so color changes at bifurcations
    let run: Array<[number, number]> = [];
    let runColor = "";
    for (const r of plain) {
      const stable = r.stable === "1";
      const psi = Number(isCycle ? r[col] : r.Psi);
      const color = isCycle
        ? stable
          ? COLOR.cycleStable
          : COLOR.cycleUnstable
        : stable
          ? psi >= 0
            ? COLOR.stableNorth
            : COLOR.stableSouth
          : COLOR.unstable;
      if (color !== runColor && run.length) {
        svg.polyline(run, runColor, 1.4);
        run = [run[run.length - 1]];
      }
      runColor = color;
      run.push([xs.map(Number(r.mu)), ys.map(psi)]);
    }
    if (run.length) svg.polyline(run, runColor, 1.4);
  }

  for (const r of table.rows) {
    if (r.bif === "none" || !r.bif) continue;
    const kind = r.bif as keyof typeof COLOR;
    const color = COLOR[kind] ?? "#666";
    for (const col of psiCols) {
      const psi = Number(isCycle ? r[col] : r.Psi);
      svg.circle(xs.map(Number(r.mu)), ys.map(psi), 3.5, color, "#222");
    }
  }
  return svg.render();
}

export function main(argv: string[]) {
  const flags = parseFlags(argv, "branch1p");
  const table = readCsv(flags.input);
  writeFileSync(flags.out, renderBranch(table, flags.input, flags));
  console.log(`wrote ${flags.out}`);
}

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  main(process.argv.slice(2));
}
