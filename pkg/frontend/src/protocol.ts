/**
 * Wire protocol (protocol.md, version 1): length-prefixed frames, request
 * carries multi-hot binary32 data rows, response carries scored token
 * sequences. Integers little-endian; data values big-endian binary32.
 */

export const MAGIC = 0x314e5053; // "SNP1"
export const VERSION = 1;
export const ENCODING_BINARY32 = 1;

export interface Request {
  d: number;
  dMax: number;
  n: number;
  k: number;
  /** Multi-hot bits per row, length (dMax+1)*32. */
  rows: Float32Array[];
}

export interface ScoredSequence {
  tokens: number[]; // raw label tokens
  score: number; // log probability
}

export class ProtocolError extends Error {}

export function decodeRequest(payload: Buffer): Request {
  if (payload.length < 28) throw new ProtocolError("request shorter than its fixed header");
  const magic = payload.readUInt32LE(0);
  if (magic !== MAGIC) throw new ProtocolError(`bad magic 0x${magic.toString(16)}`);
  const version = payload.readUInt32LE(4);
  if (version !== VERSION) throw new ProtocolError(`unsupported version ${version}`);
  const d = payload.readUInt32LE(8);
  const dMax = payload.readUInt32LE(12);
  const n = payload.readUInt32LE(16);
  const encoding = payload.readUInt32LE(20);
  if (encoding !== ENCODING_BINARY32) throw new ProtocolError(`unknown encoding id ${encoding}`);
  const k = payload.readUInt32LE(24);
  const body = payload.subarray(28);
  const expect = n * (dMax + 1) * 4;
  if (body.length !== expect) {
    throw new ProtocolError(`block length ${body.length} != expected ${expect}`);
  }
  const bitsPerRow = (dMax + 1) * 32;
  const rows: Float32Array[] = [];
  for (let r = 0; r < n; r++) {
    const row = new Float32Array(bitsPerRow);
    const base = r * (dMax + 1) * 4;
    for (let b = 0; b < bitsPerRow; b++) {
      row[b] = (body[base + (b >> 3)] >> (7 - (b & 7))) & 1;
    }
    rows.push(row);
  }
  return { d, dMax, n, k, rows };
}

export function encodeResponse(candidates: ScoredSequence[]): Buffer {
  const parts: Buffer[] = [];
  const head = Buffer.alloc(16);
  head.writeUInt32LE(MAGIC, 0);
  head.writeUInt32LE(VERSION, 4);
  head.writeUInt32LE(0, 8); // status ok
  head.writeUInt32LE(candidates.length, 12);
  parts.push(head);
  for (const cand of candidates) {
    const buf = Buffer.alloc(12 + 4 * cand.tokens.length);
    buf.writeDoubleLE(cand.score, 0);
    buf.writeUInt32LE(cand.tokens.length, 8);
    cand.tokens.forEach((t, i) => buf.writeInt32LE(t, 12 + 4 * i));
    parts.push(buf);
  }
  return Buffer.concat(parts);
}

export function encodeErrorResponse(message: string): Buffer {
  const raw = Buffer.from(message, "utf-8");
  const head = Buffer.alloc(16);
  head.writeUInt32LE(MAGIC, 0);
  head.writeUInt32LE(VERSION, 4);
  head.writeUInt32LE(1, 8); // status error
  head.writeUInt32LE(raw.length, 12);
  return Buffer.concat([head, raw]);
}

export function frame(payload: Buffer): Buffer {
  const head = Buffer.alloc(4);
  head.writeUInt32LE(payload.length, 0);
  return Buffer.concat([head, payload]);
}

/** Incremental frame splitter for a byte stream. */
export class FrameReader {
  private buf = Buffer.alloc(0);

  push(chunk: Buffer): Buffer[] {
    this.buf = Buffer.concat([this.buf, chunk]);
    const frames: Buffer[] = [];
    while (this.buf.length >= 4) {
      const len = this.buf.readUInt32LE(0);
      if (this.buf.length < 4 + len) break;
      frames.push(this.buf.subarray(4, 4 + len));
      this.buf = this.buf.subarray(4 + len);
    }
    return frames;
  }
}

/** Request encoder (tests drive the server with it). */
export function encodeRequest(req: {
  d: number;
  dMax: number;
  k: number;
  values: number[][]; // n rows of d floats
  targets: number[];
}): Buffer {
  const n = req.values.length;
  const head = Buffer.alloc(28);
  head.writeUInt32LE(MAGIC, 0);
  head.writeUInt32LE(VERSION, 4);
  head.writeUInt32LE(req.d, 8);
  head.writeUInt32LE(req.dMax, 12);
  head.writeUInt32LE(n, 16);
  head.writeUInt32LE(ENCODING_BINARY32, 20);
  head.writeUInt32LE(req.k, 24);
  const body = Buffer.alloc(n * (req.dMax + 1) * 4);
  for (let r = 0; r < n; r++) {
    for (let c = 0; c < req.dMax; c++) {
      body.writeFloatBE(c < req.values[r].length ? req.values[r][c] : 0, (r * (req.dMax + 1) + c) * 4);
    }
    body.writeFloatBE(req.targets[r], (r * (req.dMax + 1) + req.dMax) * 4);
  }
  return Buffer.concat([head, body]);
}
