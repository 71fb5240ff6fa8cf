import assert from "node:assert/strict";
import { test } from "node:test";

import {
  FrameReader,
  ProtocolError,
  decodeRequest,
  encodeErrorResponse,
  encodeRequest,
  encodeResponse,
  frame,
} from "../src/protocol";

test("request round trip preserves values and padding", () => {
  const payload = encodeRequest({
    d: 2,
    dMax: 4,
    k: 5,
    values: [
      [1.5, -2.25],
      [0.5, 3.0],
    ],
    targets: [7.5, -1.0],
  });
  const req = decodeRequest(payload);
  assert.equal(req.d, 2);
  assert.equal(req.dMax, 4);
  assert.equal(req.n, 2);
  assert.equal(req.k, 5);
  // sign bit of -2.25 is the first bit of the second value
  assert.equal(req.rows[0][32], 1);
  assert.equal(req.rows[0][0], 0);
  // padded features are all-zero bits
  for (let b = 2 * 32; b < 4 * 32; b++) assert.equal(req.rows[0][b], 0);
});

test("malformed requests raise protocol errors", () => {
  assert.throws(() => decodeRequest(Buffer.from("short")), ProtocolError);
  const bad = encodeRequest({ d: 1, dMax: 1, k: 1, values: [[1]], targets: [1] });
  bad.writeUInt32LE(0xdeadbeef, 0);
  assert.throws(() => decodeRequest(bad), /magic/);
});

test("response and error frames are distinguishable", () => {
  const ok = encodeResponse([{ tokens: [1, 0, 2], score: -0.5 }]);
  assert.equal(ok.readUInt32LE(8), 0);
  assert.equal(ok.readUInt32LE(12), 1);
  const err = encodeErrorResponse("nope");
  assert.equal(err.readUInt32LE(8), 1);
  assert.equal(err.subarray(16).toString("utf-8"), "nope");
});

test("frame reader reassembles split frames", () => {
  const reader = new FrameReader();
  const a = frame(Buffer.from("hello"));
  const b = frame(Buffer.from("world!"));
  const joined = Buffer.concat([a, b]);
  const frames: Buffer[] = [];
  for (let i = 0; i < joined.length; i += 3) {
    frames.push(...reader.push(joined.subarray(i, i + 3)));
  }
  assert.deepEqual(
    frames.map((f) => f.toString()),
    ["hello", "world!"]
  );
});
