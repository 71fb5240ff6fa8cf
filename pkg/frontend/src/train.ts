/**
 * Training loop: teacher forcing on next-token log likelihood, per-epoch
 * learning-rate decay, and early stopping when the validation loss stops
 * improving meaningfully (0 < prev - val < epsilon).
 */

import * as tf from "@tensorflow/tfjs";

import { CorpusRecord } from "./corpus";
import { ModelConfig, TOY_CONFIG, buildModel, maskedLoss, nextTokenAccuracy, saveModel } from "./model";
import { BOS, EOS, SHIFT, toModelIds } from "./tokens";

export interface TrainOptions {
  epochs: number;
  batchSize: number;
  learningRate: number;
  lrDecay: number;
  earlyStopEps: number;
  rowsPerSample: number; // subsample data rows per example (mean pooling is row-count agnostic)
  valFraction: number;
  seed: number;
  logEvery?: (epoch: number, trainLoss: number, valLoss: number, acc: number) => void;
}

export const DEFAULT_TRAIN: TrainOptions = {
  epochs: 20,
  batchSize: 64,
  learningRate: 1e-3,
  lrDecay: 0.99,
  earlyStopEps: 1e-4,
  rowsPerSample: 48,
  valFraction: 0.1,
  seed: 0,
};

interface Prepared {
  rows: tf.Tensor3D; // [B, rowsPerSample, featBits]
  tokenIn: tf.Tensor3D; // [B, maxLen, vocab] one-hot, BOS-prefixed
  targets: tf.Tensor2D; // [B, maxLen] label + EOS, PAD elsewhere
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function prepareBatch(
  records: CorpusRecord[],
  cfg: ModelConfig,
  rowsPerSample: number,
  rand: () => number
): Prepared {
  const b = records.length;
  // rowsPerSample > 0: random row subsample (noisier; generalization mode);
  // 0: every row in order; < 0: the first |rowsPerSample| rows in order, so
  // each record keeps one fixed, cheap code (memorization mode)
  const allRows = Math.max(...records.map((r) => r.rows.length));
  const nRows = rowsPerSample > 0 ? rowsPerSample : rowsPerSample === 0 ? allRows : Math.min(-rowsPerSample, allRows);
  const rows = new Float32Array(b * nRows * cfg.featBits);
  const tokenIn = new Float32Array(b * cfg.maxLen * cfg.vocabSize);
  const targets = new Int32Array(b * cfg.maxLen);
  const hot = (i: number, pos: number, id: number) => {
    tokenIn[(i * cfg.maxLen + pos) * cfg.vocabSize + id] = 1;
  };
  records.forEach((rec, i) => {
    for (let r = 0; r < nRows; r++) {
      const src =
        rowsPerSample > 0
          ? rec.rows[Math.floor(rand() * rec.rows.length)]
          : rec.rows[r % rec.rows.length];
      rows.set(src, (i * nRows + r) * cfg.featBits);
    }
    const ids = toModelIds(rec.label).slice(0, cfg.maxLen - 1);
    hot(i, 0, BOS);
    ids.forEach((id, j) => {
      hot(i, j + 1, id);
      targets[i * cfg.maxLen + j] = id;
    });
    targets[i * cfg.maxLen + ids.length] = EOS;
    for (let pos = ids.length + 1; pos < cfg.maxLen; pos++) hot(i, pos, 0);
  });
  return {
    rows: tf.tensor3d(rows, [b, nRows, cfg.featBits]),
    tokenIn: tf.tensor3d(tokenIn, [b, cfg.maxLen, cfg.vocabSize]),
    targets: tf.tensor2d(targets, [b, cfg.maxLen], "int32"),
  };
}

export function configFromCorpus(records: CorpusRecord[], manifest: { [k: string]: string }): ModelConfig {
  const featBits = records[0].rows[0].length;
  let maxTok = 0;
  let maxLen = 0;
  for (const rec of records) {
    maxLen = Math.max(maxLen, rec.label.length);
    for (const t of rec.label) maxTok = Math.max(maxTok, t);
  }
  return {
    ...TOY_CONFIG,
    featBits,
    vocabSize: maxTok + SHIFT + 1,
    maxLen: Math.min(Math.max(maxLen + 1, 8), 64),
    dMax: parseInt(manifest.d_max ?? "4", 10),
    m: parseInt(manifest.m ?? "5", 10),
    lMax: parseInt(manifest.l_max ?? "6", 10),
  };
}

export interface TrainResult {
  model: tf.LayersModel;
  config: ModelConfig;
  history: { epoch: number; trainLoss: number; valLoss: number; accuracy: number }[];
}

export async function train(
  records: CorpusRecord[],
  cfg: ModelConfig,
  opts: TrainOptions = DEFAULT_TRAIN
): Promise<TrainResult> {
  if (records.length === 0) throw new Error("empty corpus");
  for (const rec of records) {
    for (const t of rec.label) {
      if (t + SHIFT >= cfg.vocabSize) {
        throw new Error(`corpus token ${t} outside the model vocabulary (${cfg.vocabSize})`);
      }
    }
  }
  const rand = mulberry32(opts.seed);
  const shuffled = [...records];
  for (let i = shuffled.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [shuffled[i], shuffled[j]] = [shuffled[j], shuffled[i]];
  }
  const nVal = Math.max(1, Math.floor(shuffled.length * opts.valFraction));
  const val = shuffled.slice(0, nVal);
  const trainSet = shuffled.slice(nVal);

  const model = buildModel(cfg);
  const history: TrainResult["history"] = [];
  let prevVal = Infinity;

  const valBatch = prepareBatch(val, cfg, opts.rowsPerSample, mulberry32(1234));

  for (let epoch = 1; epoch <= opts.epochs; epoch++) {
    const lr = opts.learningRate * Math.pow(opts.lrDecay, epoch - 1);
    const optimizer = tf.train.adam(lr);
    let lossSum = 0;
    let batches = 0;
    for (let start = 0; start < trainSet.length; start += opts.batchSize) {
      const slice = trainSet.slice(start, start + opts.batchSize);
      const batch = prepareBatch(slice, cfg, opts.rowsPerSample, rand);
      const lossVal = optimizer.minimize(
        () =>
          maskedLoss(
            model.apply([batch.rows, batch.tokenIn], { training: true }) as tf.Tensor3D,
            batch.targets
          ),
        true
      ) as tf.Scalar;
      lossSum += lossVal.dataSync()[0];
      batches += 1;
      lossVal.dispose();
      batch.rows.dispose();
      batch.tokenIn.dispose();
      batch.targets.dispose();
    }
    optimizer.dispose();

    const { valLoss, acc } = tf.tidy(() => {
      const logits = model.apply([valBatch.rows, valBatch.tokenIn]) as tf.Tensor3D;
      return {
        valLoss: maskedLoss(logits, valBatch.targets).dataSync()[0],
        acc: nextTokenAccuracy(logits, valBatch.targets),
      };
    });
    const trainLoss = lossSum / Math.max(1, batches);
    history.push({ epoch, trainLoss, valLoss, accuracy: acc });
    opts.logEvery?.(epoch, trainLoss, valLoss, acc);
    const improvement = prevVal - valLoss;
    if (improvement > 0 && improvement < opts.earlyStopEps) break;
    prevVal = valLoss;
  }
  valBatch.rows.dispose();
  valBatch.tokenIn.dispose();
  valBatch.targets.dispose();
  return { model, config: cfg, history };
}

export async function trainCorpusDir(
  corpusDir: string,
  outDir: string,
  opts: TrainOptions = DEFAULT_TRAIN,
  limit?: number
): Promise<TrainResult> {
  const { readCorpus, readManifest } = require("./corpus") as typeof import("./corpus");
  const fs = require("fs") as typeof import("fs");
  const records = readCorpus(corpusDir, limit);
  const manifest = readManifest(corpusDir);
  const cfg = configFromCorpus(records, manifest);
  const result = await train(records, cfg, opts);
  await saveModel(result.model, cfg, outDir);
  fs.writeFileSync(`${outDir}/history.json`, JSON.stringify(result.history, null, 1));
  return result;
}
