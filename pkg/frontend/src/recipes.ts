import { readdirSync, statSync } from "node:fs";
import { column, readCsv, readManifest, textColumn } from "./csv.js";
import { linePlot } from "./svg.js";

export interface FeatureCheck {
  name: string;
  pass: boolean;
  detail: string;
}

export interface RenderResult {
  figure: string;
  svg: string;
  checks: FeatureCheck[];
  passed: boolean;
}

export type RecipeId = "2" | "4" | "7a";

function runDirs(inputDir: string): string[] {
  return readdirSync(inputDir)
    .map((name) => `${inputDir}/${name}`)
    .filter((p) => {
      try {
        return statSync(p).isDirectory() && statSync(`${p}/manifest.json`).isFile();
      } catch {
        return false;
      }
    })
    .sort();
}

function contrastOf(depth: Float64Array): number {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of depth) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return (hi - lo) / (hi + lo);
}

/** Lattice depth over one Bloch cycle per coupling; contrast grows with coupling. */
export function renderFig2(inputDir: string): RenderResult {
  const dirs = runDirs(inputDir);
  if (dirs.length === 0) throw new Error(`no run directories with manifest.json under ${inputDir}`);
  const curves = dirs.map((dir) => {
    const mf = readManifest(dir);
    const beta = (mf.params.n_atoms * mf.params.u0) / mf.params.kappa;
    const table = readCsv(`${dir}/trajectory.csv`);
    const t = column(table, "t", dir);
    const s = column(table, "s", dir);
    const tB = 2.0 / mf.params.force;
    return { beta, t: Array.from(t, (v) => v / tB), s, minDepth: Math.min(...s), contrast: contrastOf(s) };
  });
  curves.sort((a, b) => a.beta - b.beta);

  const checks: FeatureCheck[] = [];
  const contrasts = curves.map((c) => c.contrast);
  const ordered = contrasts.every((v, i) => i === 0 || v > contrasts[i - 1]);
  checks.push({
    name: "contrast-increases-with-coupling",
    pass: ordered,
    detail: curves.map((c) => `beta=${c.beta.toFixed(2)}: eps=${c.contrast.toFixed(4)}`).join("; "),
  });
  const minDepths = curves.map((c) => c.minDepth);
  const spread = (Math.max(...minDepths) - Math.min(...minDepths)) / Math.min(...minDepths);
  checks.push({
    name: "common-minimum-depth",
    pass: spread < 0.1,
    detail: `min depths ${minDepths.map((v) => v.toFixed(3)).join(", ")} (relative spread ${(spread * 100).toFixed(1)}%)`,
  });

  const svg = linePlot({
    title: "Intracavity lattice depth over one Bloch cycle",
    xLabel: "time (Bloch periods)",
    yLabel: "lattice depth (recoil units)",
    series: curves.map((c) => ({ x: c.t, y: c.s, label: `coupling ${c.beta.toFixed(2)}` })),
  });
  return { figure: "2", svg, checks, passed: checks.every((c) => c.pass) };
}

/** Quasiparticle branches over quasimomentum; marginal zeros at center and edges. */
export function renderFig4(inputDir: string): RenderResult {
  const mf = readManifest(inputDir);
  const kappa = mf.params.kappa;
  const table = readCsv(`${inputDir}/spectrum.csv`);
  const q = column(table, "x", inputDir);
  const band = column(table, "band", inputDir);
  const omega = column(table, "omega", inputDir);
  const gamma = column(table, "gamma", inputDir);
  const kind = textColumn(table, "kind", inputDir);

  // the two lowest positive-frequency non-cavity branches
  const byBand = new Map<number, { q: number[]; w: number[]; g: number[]; meanW: number }>();
  for (let i = 0; i < q.length; i++) {
    if (omega[i] <= 1e-9 || kind[i] === "cavity_like" || kind[i] === "zero_mode") continue;
    let entry = byBand.get(band[i]);
    if (!entry) {
      entry = { q: [], w: [], g: [], meanW: 0 };
      byBand.set(band[i], entry);
    }
    entry.q.push(q[i]);
    entry.w.push(omega[i]);
    entry.g.push(gamma[i]);
  }
  const branches = [...byBand.values()]
    .filter((b) => b.q.length >= 3)
    .map((b) => ({ ...b, meanW: b.w.reduce((a, v) => a + v, 0) / b.w.length }))
    .sort((a, b) => a.meanW - b.meanW)
    .slice(0, 2);
  if (branches.length < 2) throw new Error("spectrum has fewer than two tracked low branches");

  const atQ = (b: (typeof branches)[0], target: number) => {
    let best = 0;
    for (let i = 1; i < b.q.length; i++) if (Math.abs(b.q[i] - target) < Math.abs(b.q[best] - target)) best = i;
    return Math.abs(b.g[best]);
  };
  const marginalTol = 1e-6 * kappa;
  const edge = branches.map((b) => Math.min(atQ(b, 1.0), atQ(b, -1.0)) < marginalTol);
  const center = branches.map((b) => atQ(b, 0.0) < marginalTol);
  const checks: FeatureCheck[] = [
    {
      name: "one-branch-marginal-at-edges",
      pass: edge.filter(Boolean).length === 1,
      detail: `|gamma| at q=+-1: ${branches.map((b) => Math.min(atQ(b, 1), atQ(b, -1)).toExponential(2)).join(", ")}`,
    },
    {
      name: "other-branch-marginal-at-center",
      pass: center.filter(Boolean).length === 1 && edge.indexOf(true) !== center.indexOf(true),
      detail: `|gamma| at q=0: ${branches.map((b) => atQ(b, 0).toExponential(2)).join(", ")}`,
    },
    {
      name: "damped-everywhere",
      pass: branches.every((b) => b.g.every((g) => g <= 1e-9)),
      detail: "all imaginary parts non-positive (cooling side)",
    },
  ];

  const svg = linePlot({
    title: "Low quasiparticle branches: damping over quasimomentum",
    xLabel: "quasimomentum",
    yLabel: "|imaginary part| (recoil units)",
    series: branches.map((b, i) => ({
      x: b.q,
      y: b.g.map((g) => Math.abs(g)),
      label: `branch ${i + 1}`,
      markers: true,
    })),
    logY: true,
  });
  return { figure: "4", svg, checks, passed: checks.every((c) => c.pass) };
}

/** SNR against coupling for both fidelity modes; backaction dips beyond ~7. */
export function renderFig7a(inputDir: string): RenderResult {
  const table = readCsv(`${inputDir}/snr_scan.csv`);
  const value = column(table, "value", inputDir);
  const snr = column(table, "snr", inputDir);
  const mode = textColumn(table, "mode", inputDir);

  const series = new Map<string, { x: number[]; y: number[] }>();
  for (let i = 0; i < value.length; i++) {
    if (mode[i] === "failed") continue;
    let s = series.get(mode[i]);
    if (!s) {
      s = { x: [], y: [] };
      series.set(mode[i], s);
    }
    s.x.push(value[i]);
    s.y.push(snr[i]);
  }
  const shot = series.get("detector_shot");
  const full = series.get("full_backaction");
  if (!shot || !full) throw new Error("scan must contain detector_shot and full_backaction rows");

  const fullAt = new Map(full.x.map((x, i) => [x, full.y[i]]));
  const pairs = shot.x.filter((x) => fullAt.has(x)).map((x) => ({ x, shot: shot.y[shot.x.indexOf(x)], full: fullAt.get(x)! }));
  if (pairs.length === 0) throw new Error("no common scan points between the two modes");

  const below = pairs.every((p) => p.full <= p.shot * (1 + 1e-9));
  const upTo12 = pairs.filter((p) => p.x <= 12.000001);
  const monotone = upTo12.every((p, i) => i === 0 || p.shot > upTo12[i - 1].shot);
  const ratio = pairs.map((p) => p.full / p.shot);
  let dipCount = 0;
  for (let i = 1; i < pairs.length - 1; i++) {
    if (pairs[i].x > 7 && ratio[i] < ratio[i - 1] && ratio[i] <= ratio[i + 1]) dipCount++;
  }
  const checks: FeatureCheck[] = [
    { name: "backaction-lowers-snr", pass: below, detail: `full <= shot at all ${pairs.length} points` },
    {
      name: "shot-snr-monotone-to-12",
      pass: monotone,
      detail: `detector-shot strictly increasing over ${upTo12.length} points`,
    },
    { name: "dips-present-past-7", pass: dipCount >= 1, detail: `${dipCount} interior ratio minima at coupling > 7` },
  ];

  const svg = linePlot({
    title: "Bloch-frequency measurement SNR over coupling strength",
    xLabel: "collective coupling",
    yLabel: "SNR",
    series: [
      { x: shot.x, y: shot.y, label: "detector shot", markers: true },
      { x: full.x, y: full.y, label: "full backaction", markers: true, dashed: true },
    ],
  });
  return { figure: "7a", svg, checks, passed: checks.every((c) => c.pass) };
}

export function render(fig: RecipeId, inputDir: string): RenderResult {
  switch (fig) {
    case "2":
      return renderFig2(inputDir);
    case "4":
      return renderFig4(inputDir);
    case "7a":
      return renderFig7a(inputDir);
    default:
      throw new Error(`unknown figure '${fig}' (known: 2, 4, 7a)`);
  }
}
