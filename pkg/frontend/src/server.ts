/**
 * Proposal service: answers wire-protocol requests with beam-search
 * candidates. Every emitted sequence passes label validation first; a
 * malformed request gets an error frame and the connection survives.
 */

import * as net from "net";
import * as tf from "@tensorflow/tfjs";

import { beamSearch } from "./beam";
import { ModelConfig } from "./model";
import {
  FrameReader,
  ProtocolError,
  decodeRequest,
  encodeErrorResponse,
  encodeResponse,
  frame,
} from "./protocol";
import { validateLabel } from "./tokens";

export interface ServeOptions {
  beamSize: number;
  maxCandidates: number; // upper bound regardless of the requested k
}

export const DEFAULT_SERVE: ServeOptions = { beamSize: 20, maxCandidates: 5 };

/** Re-block rows when the request pads to a different feature count than the
 * model was trained with; value blocks are 32 bits each, target block last. */
function reblock(rows: Float32Array[], fromDMax: number, toDMax: number): Float32Array[] {
  if (fromDMax === toDMax) return rows;
  return rows.map((row) => {
    const out = new Float32Array((toDMax + 1) * 32);
    const copyFeatures = Math.min(fromDMax, toDMax);
    out.set(row.subarray(0, copyFeatures * 32), 0);
    out.set(row.subarray(fromDMax * 32, (fromDMax + 1) * 32), toDMax * 32);
    return out;
  });
}

export function answer(
  model: tf.LayersModel,
  cfg: ModelConfig,
  payload: Buffer,
  opts: ServeOptions = DEFAULT_SERVE
): Buffer {
  let req;
  try {
    req = decodeRequest(payload);
  } catch (err) {
    return encodeErrorResponse(err instanceof Error ? err.message : String(err));
  }
  try {
    if (req.d > cfg.dMax) {
      return encodeErrorResponse(`model handles up to ${cfg.dMax} features, request has ${req.d}`);
    }
    const scored = beamSearch(model, cfg, reblock(req.rows, req.dMax, cfg.dMax), {
      beamSize: opts.beamSize,
      k: req.k,
    });
    const valid = scored.filter(
      (s) => validateLabel(s.tokens, cfg.m, Math.max(1, req.d), cfg.lMax) === null
    );
    return encodeResponse(valid.slice(0, Math.min(req.k, opts.maxCandidates)));
  } catch (err) {
    return encodeErrorResponse(err instanceof Error ? err.message : String(err));
  }
}

export function startServer(
  model: tf.LayersModel,
  cfg: ModelConfig,
  port: number,
  opts: ServeOptions = DEFAULT_SERVE
): Promise<net.Server> {
  const server = net.createServer((socket) => {
    const reader = new FrameReader();
    socket.on("data", (chunk: Buffer) => {
      for (const payload of reader.push(Buffer.from(chunk))) {
        let resp: Buffer;
        try {
          resp = answer(model, cfg, payload, opts);
        } catch (err) {
          resp = encodeErrorResponse(err instanceof Error ? err.message : String(err));
        }
        socket.write(frame(resp));
      }
    });
    socket.on("error", () => socket.destroy());
  });
  return new Promise((resolve) => server.listen(port, "127.0.0.1", () => resolve(server)));
}
