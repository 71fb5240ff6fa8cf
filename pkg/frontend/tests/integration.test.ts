/**
 * Protocol conformance with the primary engine: its remote proposer must
 * complete an end-to-end fit against the live service with zero protocol
 * errors, and shuffling data rows must not move candidate scores (> 1e-5).
 */

import assert from "node:assert/strict";
import { spawn } from "child_process";
import * as fs from "fs";
import * as net from "net";
import * as os from "os";
import * as path from "path";
import { test } from "node:test";

import { readCorpus, readManifest } from "../src/corpus";
import { initBackend } from "../src/model";
import { DEFAULT_TRAIN, configFromCorpus, train } from "../src/train";
import { FrameReader, encodeRequest, frame } from "../src/protocol";
import { startServer } from "../src/server";
import { corpusDir, writeCsv } from "./helpers";

function requestOnce(port: number, payload: Buffer): Promise<Buffer> {
  return new Promise((resolve, reject) => {
    const sock = net.createConnection(port, "127.0.0.1", () => sock.write(frame(payload)));
    const reader = new FrameReader();
    sock.setTimeout(60_000, () => reject(new Error("timeout")));
    sock.on("data", (chunk) => {
      const frames = reader.push(Buffer.from(chunk));
      if (frames.length > 0) {
        sock.end();
        resolve(frames[0]);
      }
    });
    sock.on("error", reject);
  });
}

function parseScores(resp: Buffer): { tokens: number[]; score: number }[] {
  assert.equal(resp.readUInt32LE(8), 0, "expected an ok response");
  const k = resp.readUInt32LE(12);
  const out = [];
  let off = 16;
  for (let i = 0; i < k; i++) {
    const score = resp.readDoubleLE(off);
    off += 8;
    const n = resp.readUInt32LE(off);
    off += 4;
    const tokens: number[] = [];
    for (let j = 0; j < n; j++) {
      tokens.push(resp.readInt32LE(off));
      off += 4;
    }
    out.push({ tokens, score });
  }
  return out;
}

test("live service: end-to-end fit and permutation invariance", { timeout: 560_000 }, async () => {
  await initBackend();
  const dir = corpusDir(1000, 57, 2, 2);
  const records = readCorpus(dir);
  const cfg = configFromCorpus(records, readManifest(dir));
  const result = await train(records, cfg, {
    ...DEFAULT_TRAIN,
    epochs: 10,
    batchSize: 16,
    learningRate: 5e-3,
    rowsPerSample: -96,
    earlyStopEps: 0,
  });

  const server = await startServer(result.model, cfg, 0);
  const port = (server.address() as net.AddressInfo).port;
  try {
    // permutation invariance over the wire: shuffled rows, same scores
    const n = 48;
    const values = Array.from({ length: n }, (_, i) => [Math.sin(i * 0.3), Math.cos(i * 0.21)]);
    const targets = values.map(([a, b]) => a + 2 * b);
    const reqA = encodeRequest({ d: 2, dMax: 4, k: 5, values, targets });
    const perm = Array.from({ length: n }, (_, i) => (i * 29) % n);
    const reqB = encodeRequest({
      d: 2,
      dMax: 4,
      k: 5,
      values: perm.map((i) => values[i]),
      targets: perm.map((i) => targets[i]),
    });
    const candsA = parseScores(await requestOnce(port, reqA));
    const candsB = parseScores(await requestOnce(port, reqB));
    assert.ok(candsA.length > 0, "service returned no candidates");
    assert.equal(candsA.length, candsB.length);
    for (let i = 0; i < candsA.length; i++) {
      assert.deepEqual(candsA[i].tokens, candsB[i].tokens);
      assert.ok(
        Math.abs(candsA[i].score - candsB[i].score) < 1e-5,
        `score drift ${Math.abs(candsA[i].score - candsB[i].score)}`
      );
    }

    // the primary engine completes a fit through the live service
    const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "symnet-fit-"));
    const csv = path.join(tmp, "data.csv");
    const rows = Array.from({ length: 40 }, (_, i) => {
      const x0 = -1 + (2 * i) / 39;
      const x1 = Math.sin(i * 0.7);
      return [x0, x1, Math.sin(x0) + x1];
    });
    writeCsv(rows, ["x0", "x1", "y"], csv);
    // the fit must run asynchronously: the service lives on this event loop
    const out = await new Promise<string>((resolve, reject) => {
      const proc = spawn(
        "python3",
        [
          "-m", "symnet.cli", "fit",
          "--data", csv,
          "--proposer", `remote:127.0.0.1:${port}`,
          "--seed", "0",
          "--budget", "120",
        ],
        { timeout: 300_000 }
      );
      let stdout = "";
      let stderr = "";
      proc.stdout.on("data", (c) => (stdout += c));
      proc.stderr.on("data", (c) => (stderr += c));
      proc.on("close", (code) =>
        code === 0 ? resolve(stdout) : reject(new Error(`fit exited ${code}: ${stderr.slice(0, 800)}`))
      );
      proc.on("error", reject);
    });
    console.log(out.trim().split("\n").slice(0, 2).join(" | "));
    assert.match(out, /expression: /);
    assert.match(out, /r2_train: /);
  } finally {
    server.close();
    result.model.dispose();
  }
});
