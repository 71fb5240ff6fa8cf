/** Shared fixtures: corpora are generated through the primary package's CLI
 * (its documented external interface) and cached across test files. */

import { execFileSync } from "child_process";
import * as fs from "fs";
import * as path from "path";

export function corpusDir(count: number, seed: number, lMax = 0, dMax = 0): string {
  const dir = path.join("/tmp", `symnet-ts-corpus-${count}-${seed}-${lMax}-${dMax}`);
  if (fs.existsSync(path.join(dir, "manifest.txt"))) return dir;
  const args = ["-m", "symnet.cli", "gen-data", "--count", String(count), "--seed", String(seed), "--out", dir];
  if (lMax > 0) args.push("--l-max", String(lMax));
  if (dMax > 0) args.push("--d-max", String(dMax));
  execFileSync("python3", args, { stdio: "pipe", timeout: 600_000 });
  return dir;
}

export function writeCsv(rows: number[][], header: string[], file: string): void {
  const lines = [header.join(",")];
  for (const row of rows) lines.push(row.join(","));
  fs.writeFileSync(file, lines.join("\n") + "\n");
}
