import { writeFileSync } from "node:fs";
import { render, RecipeId } from "./recipes.js";

function usage(): never {
  console.error("usage: render --fig <2|4|7a> --in DIR --out FILE.svg [--report FILE.json]");
  process.exit(2);
}

export function main(argv: string[]): number {
  if (argv[0] !== "render") usage();
  const args = new Map<string, string>();
  for (let i = 1; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || argv[i + 1] === undefined) usage();
    args.set(argv[i].slice(2), argv[i + 1]);
  }
  const fig = args.get("fig");
  const input = args.get("in");
  const out = args.get("out");
  if (!fig || !input || !out) usage();
  const report = args.get("report") ?? out.replace(/\.svg$/, "") + ".report.json";

  try {
    const result = render(fig as RecipeId, input);
    writeFileSync(out, result.svg);
    writeFileSync(
      report,
      JSON.stringify(
        { figure: result.figure, passed: result.passed, checks: result.checks },
        null,
        2,
      ) + "\n",
    );
    for (const c of result.checks) {
      console.log(`[fig ${result.figure}] ${c.pass ? "PASS" : "FAIL"} ${c.name}: ${c.detail}`);
    }
    return result.passed ? 0 : 1;
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    writeFileSync(report, JSON.stringify({ figure: fig, error: message }, null, 2) + "\n");
    console.error(`error: ${message}`);
    return 2;
  }
}

main(process.argv.slice(2));
