import { createHash } from "node:crypto";
import { readFileSync, readdirSync, statSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { column, readCsv } from "../src/csv.js";
import { renderFig2, renderFig4, renderFig7a } from "../src/recipes.js";
import { linePlot } from "../src/svg.js";

const DATA = new URL("../testdata", import.meta.url).pathname;

function treeHashes(dir: string): Map<string, string> {
  const out = new Map<string, string>();
  const walk = (d: string) => {
    for (const name of readdirSync(d)) {
      const p = `${d}/${name}`;
      if (statSync(p).isDirectory()) walk(p);
      else out.set(p, createHash("sha256").update(readFileSync(p)).digest("hex"));
    }
  };
  walk(dir);
  return out;
}

describe("csv reader", () => {
  it("reads a trajectory table and extracts columns", () => {
    const dirs = readdirSync(`${DATA}/fig2`).sort();
    const table = readCsv(`${DATA}/fig2/${dirs[0]}/trajectory.csv`);
    const t = column(table, "t");
    expect(t.length).toBeGreaterThan(10);
    expect(t[0]).toBe(0);
    expect(() => column(table, "nope")).toThrow(/missing column/);
  });

  it("rejects empty input", () => {
    expect(() => readCsv(`${DATA}/empty.csv`)).toThrow(/empty CSV|no data/);
  });
});

describe("svg renderer", () => {
  it("emits a standalone svg with one polyline per series", () => {
    const svg = linePlot({
      title: "t",
      xLabel: "x",
      yLabel: "y",
      series: [
        { x: [0, 1, 2], y: [1, 4, 9], label: "a" },
        { x: [0, 1, 2], y: [2, 3, 4], label: "b" },
      ],
    });
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg.match(/<polyline/g)?.length).toBe(2); // one per series; legends use plain lines
  });
});

describe("figure recipes", () => {
  it("fig 2: ordered contrast and common minimum depth", () => {
    const before = treeHashes(`${DATA}/fig2`);
    const result = renderFig2(`${DATA}/fig2`);
    expect(result.passed).toBe(true);
    expect(result.checks.map((c) => c.name)).toContain("contrast-increases-with-coupling");
    expect(result.svg).toContain("<svg");
    // rendering is read-only
    expect(treeHashes(`${DATA}/fig2`)).toEqual(before);
  });

  it("fig 4: marginal zeros at band center and edges", () => {
    const result = renderFig4(`${DATA}/fig4`);
    expect(result.passed).toBe(true);
    const names = result.checks.map((c) => c.name);
    expect(names).toContain("one-branch-marginal-at-edges");
    expect(names).toContain("other-branch-marginal-at-center");
  });

  it("fig 7a: backaction ordering, monotone shot curve, dips past 7", () => {
    const result = renderFig7a(`${DATA}/fig7a`);
    expect(result.passed).toBe(true);
    for (const check of result.checks) {
      expect(check.pass, `${check.name}: ${check.detail}`).toBe(true);
    }
  });

  it("fails loudly on an empty directory", () => {
    expect(() => renderFig2(`${DATA}/nothing-here`)).toThrow();
  });
});
