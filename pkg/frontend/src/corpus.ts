/**
 * Reader for exported training corpora (corpus-format.md, version 1).
 *
 * Each shard is a stream of length-prefixed records:
 *   u32 len | u32 d | u32 n | u32 dMax | u32 nTokens
 *           | nTokens x i32 label tokens (padded with -1)
 *           | packed bits of n rows of (dMax + 1) binary32 values
 *
 * Values are IEEE-754 binary32, most significant bit first, which is the
 * multi-hot encoding the model consumes directly.
 */

import * as fs from "fs";
import * as path from "path";

export interface CorpusRecord {
  d: number;
  n: number;
  dMax: number;
  /** Raw label tokens with corpus padding stripped. */
  label: number[];
  /** Multi-hot bits, one Float32Array of length (dMax+1)*32 per row. */
  rows: Float32Array[];
}

export interface Manifest {
  [key: string]: string;
}

export function readManifest(dir: string): Manifest {
  const text = fs.readFileSync(path.join(dir, "manifest.txt"), "utf-8");
  const out: Manifest = {};
  for (const line of text.split("\n")) {
    const i = line.indexOf("=");
    if (i > 0) out[line.slice(0, i)] = line.slice(i + 1);
  }
  return out;
}

function parseRecord(payload: Buffer): CorpusRecord {
  const d = payload.readUInt32LE(0);
  const n = payload.readUInt32LE(4);
  const dMax = payload.readUInt32LE(8);
  const nTokens = payload.readUInt32LE(12);
  const label: number[] = [];
  let off = 16;
  for (let i = 0; i < nTokens; i++) {
    const t = payload.readInt32LE(off);
    off += 4;
    if (t !== -1) label.push(t);
  }
  const bitsPerRow = (dMax + 1) * 32;
  const totalBits = n * bitsPerRow;
  const packed = payload.subarray(off);
  if (packed.length * 8 < totalBits) {
    throw new Error(`record truncated: need ${totalBits} bits, have ${packed.length * 8}`);
  }
  const rows: Float32Array[] = [];
  for (let r = 0; r < n; r++) {
    const row = new Float32Array(bitsPerRow);
    for (let b = 0; b < bitsPerRow; b++) {
      const bitIndex = r * bitsPerRow + b;
      row[b] = (packed[bitIndex >> 3] >> (7 - (bitIndex & 7))) & 1;
    }
    rows.push(row);
  }
  return { d, n, dMax, label, rows };
}

export function readShard(file: string): CorpusRecord[] {
  const buf = fs.readFileSync(file);
  const out: CorpusRecord[] = [];
  let off = 0;
  while (off + 4 <= buf.length) {
    const len = buf.readUInt32LE(off);
    off += 4;
    out.push(parseRecord(buf.subarray(off, off + len)));
    off += len;
  }
  return out;
}

export function readCorpus(dir: string, limit?: number): CorpusRecord[] {
  const shards = fs
    .readdirSync(dir)
    .filter((f) => /^corpus-\d+\.bin$/.test(f))
    .sort();
  const out: CorpusRecord[] = [];
  for (const shard of shards) {
    for (const rec of readShard(path.join(dir, shard))) {
      out.push(rec);
      if (limit !== undefined && out.length >= limit) return out;
    }
  }
  return out;
}

/** Decode a row of multi-hot bits back to float values (spot checks). */
export function rowToFloats(row: Float32Array): number[] {
  const nVals = row.length / 32;
  const bytes = new Uint8Array(nVals * 4);
  for (let i = 0; i < row.length; i++) {
    if (row[i] > 0.5) bytes[i >> 3] |= 1 << (7 - (i & 7));
  }
  const view = new DataView(bytes.buffer);
  const out: number[] = [];
  for (let v = 0; v < nVals; v++) out.push(view.getFloat32(v * 4, false));
  return out;
}
