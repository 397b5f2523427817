export interface Series {
  x: ArrayLike<number>;
  y: ArrayLike<number>;
  label: string;
  color?: string;
  dashed?: boolean;
  markers?: boolean;
}

export interface PlotSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  width?: number;
  height?: number;
  logY?: boolean;
}

const PALETTE = ["#c23b22", "#2b6cb0", "#2f855a", "#6b46c1", "#b7791f", "#319795"];

function extent(vals: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of vals) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) {
    lo -= 1;
    hi += 1;
  }
  return [lo, hi];
}

function ticks(lo: number, hi: number, n = 5): number[] {
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / n)));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const pick = candidates.find((s) => span / s <= n + 1) ?? 10 * step;
  const first = Math.ceil(lo / pick) * pick;
  const out: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += pick) out.push(v);
  return out;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-2) return v.toExponential(1);
  return String(Math.round(v * 1000) / 1000);
}

/** Minimal multi-series line plot as a standalone SVG document. */
export function linePlot(spec: PlotSpec): string {
  const w = spec.width ?? 760;
  const h = spec.height ?? 480;
  const m = { left: 72, right: 16, top: 36, bottom: 52 };
  const iw = w - m.left - m.right;
  const ih = h - m.top - m.bottom;

  const xs: number[] = [];
  const ys: number[] = [];
  for (const s of spec.series) {
    for (let i = 0; i < s.x.length; i++) {
      xs.push(s.x[i]);
      const y = spec.logY ? Math.log10(Math.max(s.y[i], 1e-300)) : s.y[i];
      ys.push(y);
    }
  }
  const [x0, x1] = extent(xs);
  const [y0, y1] = extent(ys);
  const px = (x: number) => m.left + ((x - x0) / (x1 - x0)) * iw;
  const py = (y: number) => m.top + ih - ((y - y0) / (y1 - y0)) * ih;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${w}" height="${h}" viewBox="0 0 ${w} ${h}" font-family="Helvetica, Arial, sans-serif" font-size="13">`,
  );
  parts.push(`<rect width="${w}" height="${h}" fill="white"/>`);
  parts.push(`<text x="${w / 2}" y="20" text-anchor="middle" font-size="15">${escapeXml(spec.title)}</text>`);

  for (const tx of ticks(x0, x1)) {
    const x = px(tx);
    parts.push(`<line x1="${x}" y1="${m.top}" x2="${x}" y2="${m.top + ih}" stroke="#eee"/>`);
    parts.push(`<text x="${x}" y="${m.top + ih + 18}" text-anchor="middle">${fmt(tx)}</text>`);
  }
  for (const ty of ticks(y0, y1)) {
    const y = py(ty);
    parts.push(`<line x1="${m.left}" y1="${y}" x2="${m.left + iw}" y2="${y}" stroke="#eee"/>`);
    const label = spec.logY ? `1e${fmt(ty)}` : fmt(ty);
    parts.push(`<text x="${m.left - 8}" y="${y + 4}" text-anchor="end">${label}</text>`);
  }
  parts.push(`<rect x="${m.left}" y="${m.top}" width="${iw}" height="${ih}" fill="none" stroke="#333"/>`);
  parts.push(
    `<text x="${m.left + iw / 2}" y="${h - 14}" text-anchor="middle">${escapeXml(spec.xLabel)}</text>`,
  );
  parts.push(
    `<text x="20" y="${m.top + ih / 2}" text-anchor="middle" transform="rotate(-90 20 ${m.top + ih / 2})">${escapeXml(spec.yLabel)}</text>`,
  );

  spec.series.forEach((s, si) => {
    const color = s.color ?? PALETTE[si % PALETTE.length];
    const pts: string[] = [];
    for (let i = 0; i < s.x.length; i++) {
      const y = spec.logY ? Math.log10(Math.max(s.y[i], 1e-300)) : s.y[i];
      pts.push(`${px(s.x[i]).toFixed(2)},${py(y).toFixed(2)}`);
    }
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(`<polyline points="${pts.join(" ")}" fill="none" stroke="${color}" stroke-width="1.8"${dash}/>`);
    if (s.markers) {
      for (const p of pts) {
        const [cx, cy] = p.split(",");
        parts.push(`<circle cx="${cx}" cy="${cy}" r="2.6" fill="${color}"/>`);
      }
    }
    const ly = m.top + 16 + 18 * si;
    parts.push(`<line x1="${m.left + iw - 150}" y1="${ly - 4}" x2="${m.left + iw - 120}" y2="${ly - 4}" stroke="${color}" stroke-width="2"${dash}/>`);
    parts.push(`<text x="${m.left + iw - 112}" y="${ly}">${escapeXml(s.label)}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n");
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
