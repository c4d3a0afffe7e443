/** `render <plotspec.json>`: read the spec, render the SVG, write it out. */
import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { dirname } from "node:path";
import { readSeries, CsvError } from "./csv.js";
import { renderSvg, validateSpec } from "./plot.js";

export function renderFromSpecFile(specPath: string): string {
  const spec = validateSpec(JSON.parse(readFileSync(specPath, "utf-8")));
  const series = spec.inputs.map(readSeries);
  const svg = renderSvg(spec, series);
  mkdirSync(dirname(spec.output), { recursive: true });
  writeFileSync(spec.output, svg);
  return spec.output;
}

function main(argv: string[]): number {
  const [command, specPath] = argv;
  if (command !== "render" || !specPath) {
    console.error("usage: render <plotspec.json>");
    return 2;
  }
  try {
    const out = renderFromSpecFile(specPath);
    console.log(out);
    return 0;
  } catch (err) {
    if (err instanceof CsvError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}

export { main };
