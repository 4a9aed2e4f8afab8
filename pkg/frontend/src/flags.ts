// Common flag set shared by the figure scripts:
//   --input PATH [--events PATH] --out PATH [--xlim a,b] [--ylim a,b]
//   [--title T] [--width W] [--height H] [--channel NAME]

export interface Flags {
  input: string;
  events?: string;
  out: string;
  xlim?: [number, number];
  ylim?: [number, number];
  title?: string;
  width: number;
  height: number;
  channel?: string;
}

export function parseFlags(argv: string[], name: string): Flags {
  const out: Partial<Flags> = { width: 720, height: 480 };
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const val = argv[i + 1];
    if (val === undefined) fail(name, `missing value for ${key}`);
    switch (key) {
      case "--input":
        out.input = val;
        break;
      case "--events":
        out.events = val;
        break;
      case "--out":
        out.out = val;
        break;
      case "--xlim":
        out.xlim = pair(val, name);
        break;
      case "--ylim":
        out.ylim = pair(val, name);
        break;
      case "--title":
        out.title = val;
        break;
      case "--width":
        out.width = Number(val);
        break;
      case "--height":
        out.height = Number(val);
        break;
      case "--channel":
        out.channel = val;
        break;
      default:
        fail(name, `unknown flag ${key}`);
    }
  }
  if (!out.input) fail(name, "--input is required");
  if (!out.out) fail(name, "--out is required");
  return out as Flags;
}

function pair(s: string, name: string): [number, number] {
  const parts = s.split(",").map(Number);
  if (parts.length !== 2 || parts.some(Number.isNaN)) {
    fail(name, `expected 'a,b' but got '${s}'`);
  }
  return [parts[0], parts[1]];
}

function fail(name: string, msg: string): never {
  console.error(`${name}: ${msg}`);
  process.exit(2);
}

export function extent(values: number[], pad = 0.05): [number, number] {
  const finite = values.filter((v) => Number.isFinite(v));
  const lo = Math.min(...finite);
  const hi = Math.max(...finite);
  const span = hi - lo || 1;
  return [lo - pad * span, hi + pad * span];
}
