// Minimal deterministic SVG scene builder: fixed float formatting, no
// timestamps, append-only element list.

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const DEFAULT_MARGIN: Margin = { top: 28, right: 16, bottom: 44, left: 64 };

const fmt = (x: number) => {
  const v = Number(x.toPrecision(6));
  return Object.is(v, -0) ? "0" : String(v);
};

export class LinearScale {
  constructor(
    public d0: number,
    public d1: number,
    public r0: number,
    public r1: number,
  ) {}

  map(x: number): number {
    const t = (x - this.d0) / (this.d1 - this.d0);
    return this.r0 + t * (this.r1 - this.r0);
  }

  ticks(n = 6): number[] {
    const span = this.d1 - this.d0;
    const step = Math.pow(10, Math.floor(Math.log10(Math.abs(span) / n)));
    const err = Math.abs(span) / (n * step);
    const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
    const s = mult * step * Math.sign(span);
    const start = Math.ceil(Math.min(this.d0, this.d1) / Math.abs(s)) * Math.abs(s);
    const out: number[] = [];
    for (let v = start; v <= Math.max(this.d0, this.d1) + 1e-12 * Math.abs(s); v += Math.abs(s)) {
      out.push(Number(v.toPrecision(12)));
    }
    return out;
  }
}

export class Svg {
  private parts: string[] = [];

  constructor(
    public width: number,
    public height: number,
  ) {}

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1, dash?: string) {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${fmt(width)}"${d}/>`,
    );
  }

  polyline(pts: Array<[number, number]>, stroke: string, width = 1.2, dash?: string) {
    if (pts.length < 2) return;
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    const str = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(
      `<polyline points="${str}" fill="none" stroke="${stroke}" stroke-width="${fmt(width)}"${d}/>`,
    );
  }

  circle(x: number, y: number, r: number, fill: string, stroke = "none") {
    this.parts.push(
      `<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${fmt(r)}" fill="${fill}" stroke="${stroke}"/>`,
    );
  }

  rect(x: number, y: number, w: number, h: number, fill: string) {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"/>`,
    );
  }

  text(x: number, y: number, s: string, size = 11, anchor = "middle", fill = "#222") {
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" font-family="sans-serif" text-anchor="${anchor}" fill="${fill}">${escapeXml(s)}</text>`,
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">\n` +
      `<rect x="0" y="0" width="${this.width}" height="${this.height}" fill="white"/>\n` +
      this.parts.join("\n") +
      "\n</svg>\n"
    );
  }
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export interface Axes {
  svg: Svg;
  xs: LinearScale;
  ys: LinearScale;
}

export function makeAxes(
  width: number,
  height: number,
  xlim: [number, number],
  ylim: [number, number],
  xlabel: string,
  ylabel: string,
  title: string,
  margin: Margin = DEFAULT_MARGIN,
): Axes {
  const svg = new Svg(width, height);
  const xs = new LinearScale(xlim[0], xlim[1], margin.left, width - margin.right);
  const ys = new LinearScale(ylim[0], ylim[1], height - margin.bottom, margin.top);
  svg.line(margin.left, height - margin.bottom, width - margin.right, height - margin.bottom, "#222");
  svg.line(margin.left, margin.top, margin.left, height - margin.bottom, "#222");
  for (const t of xs.ticks()) {
    const x = xs.map(t);
    svg.line(x, height - margin.bottom, x, height - margin.bottom + 4, "#222");
    svg.text(x, height - margin.bottom + 16, tickLabel(t), 9);
  }
  for (const t of ys.ticks()) {
    const y = ys.map(t);
    svg.line(margin.left - 4, y, margin.left, y, "#222");
    svg.text(margin.left - 8, y + 3, tickLabel(t), 9, "end");
  }
  svg.text((margin.left + width - margin.right) / 2, height - 8, xlabel);
  svg.text(14, margin.top - 10, ylabel, 11, "start");
  svg.text((margin.left + width - margin.right) / 2, 16, title, 12);
  return { svg, xs, ys };
}

function tickLabel(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return String(Number(v.toPrecision(4)));
}

// Paper conventions: stable northward blue, stable southward cyan, unstable
// black; bifurcation markers SN black, H green, S black, PD blue, T teal.
export const COLOR = {
  stableNorth: "#1f60c4",
  stableSouth: "#00b3c8",
  unstable: "#222222",
  cycleStable: "#f28c00",
  cycleUnstable: "#8d4bbf",
  SN: "#000000",
  H: "#2ca02c",
  S: "#000000",
  PD: "#1f60c4",
  T: "#0d9488",
  BT: "#d62728",
  GH: "#8c564b",
  ZH: "#00b3c8",
  event: "#ff8c00",
};

/** Blue -> red ramp used to color orbits by overturning strength. */
export function strengthColor(t: number): string {
  const u = Math.min(1, Math.max(0, t));
  const r = Math.round(30 + 200 * u);
  const g = Math.round(60 + 40 * (1 - Math.abs(u - 0.5) * 2));
  const b = Math.round(200 - 170 * u);
  return `rgb(${r},${g},${b})`;
}

/** Dark-to-yellow ramp for raster maps; grey for exact zero. */
export function rasterColor(t: number): string {
  const u = Math.min(1, Math.max(0, t));
  const r = Math.round(40 + 215 * u);
  const g = Math.round(20 + 200 * u);
  const b = Math.round(80 + 40 * (1 - u));
  return `rgb(${r},${g},${b})`;
}
