import assert from "node:assert/strict";
import { test } from "node:test";

import { readCorpus, readManifest, rowToFloats } from "../src/corpus";
import { maskBitCount, validateLabel } from "../src/tokens";
import { corpusDir } from "./helpers";

test("reads an exported corpus and its manifest", () => {
  const dir = corpusDir(30, 7);
  const manifest = readManifest(dir);
  assert.equal(manifest.count, "30");
  assert.equal(manifest.pad_token, "-1");
  const records = readCorpus(dir);
  assert.equal(records.length, 30);
  for (const rec of records) {
    assert.ok(rec.d >= 1 && rec.d <= rec.dMax);
    assert.equal(rec.rows[0].length, (rec.dMax + 1) * 32);
    assert.equal(
      validateLabel(rec.label, parseInt(manifest.m, 10), rec.d, parseInt(manifest.l_max, 10)),
      null
    );
  }
});

test("multi-hot rows decode to finite values with zero padding", () => {
  const dir = corpusDir(30, 7);
  const [rec] = readCorpus(dir, 1);
  const vals = rowToFloats(rec.rows[0]);
  assert.equal(vals.length, rec.dMax + 1);
  for (const v of vals) assert.ok(Number.isFinite(v));
  for (let c = rec.d; c < rec.dMax; c++) assert.equal(vals[c], 0);
});

test("label offsets stay inside the layout's bit count", () => {
  const dir = corpusDir(30, 7);
  const manifest = readManifest(dir);
  const m = parseInt(manifest.m, 10);
  for (const rec of readCorpus(dir)) {
    const nbits = maskBitCount(rec.label[0], m, rec.d);
    for (const t of rec.label.slice(2)) assert.ok(t >= 1 && t <= nbits);
  }
});
