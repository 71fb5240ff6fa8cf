/**
 * Beam search over the autoregressive decoder.
 *
 * Beams step in lockstep as one batch: the model re-scores every prefix each
 * step (no incremental state), which keeps the decoder opaque and is cheap at
 * these sequence lengths.
 */

import * as tf from "@tensorflow/tfjs";

import { ModelConfig } from "./model";
import { BOS, EOS, PAD, fromModelIds } from "./tokens";

export interface Beam {
  ids: number[]; // model-id sequence without BOS
  logProb: number;
  done: boolean;
}

export interface BeamOptions {
  beamSize: number;
  k: number;
  maxLen?: number;
}

export function beamSearch(
  model: tf.LayersModel,
  cfg: ModelConfig,
  rows: Float32Array[],
  opts: BeamOptions
): { tokens: number[]; score: number }[] {
  const maxLen = Math.min(opts.maxLen ?? cfg.maxLen, cfg.maxLen);
  const featBits = cfg.featBits;
  const rowData = new Float32Array(rows.length * featBits);
  rows.forEach((r, i) => rowData.set(r, i * featBits));

  let beams: Beam[] = [{ ids: [], logProb: 0, done: false }];
  for (let step = 0; step < maxLen; step++) {
    const active = beams.filter((b) => !b.done);
    if (active.length === 0) break;

    const logProbs = tf.tidy(() => {
      const b = active.length;
      const dataBatch = tf
        .tensor3d(rowData, [1, rows.length, featBits])
        .tile([b, 1, 1]);
      const tokenIn = new Float32Array(b * cfg.maxLen * cfg.vocabSize);
      const hot = (i: number, pos: number, id: number) => {
        tokenIn[(i * cfg.maxLen + pos) * cfg.vocabSize + id] = 1;
      };
      active.forEach((beam, i) => {
        hot(i, 0, BOS);
        beam.ids.forEach((id, j) => {
          if (j + 1 < cfg.maxLen) hot(i, j + 1, id);
        });
        for (let pos = beam.ids.length + 1; pos < cfg.maxLen; pos++) hot(i, pos, PAD);
      });
      const logits = model.apply([
        dataBatch,
        tf.tensor3d(tokenIn, [b, cfg.maxLen, cfg.vocabSize]),
      ]) as tf.Tensor3D;
      const stepLogits = logits
        .slice([0, step, 0], [b, 1, cfg.vocabSize])
        .reshape([b, cfg.vocabSize]);
      return tf.logSoftmax(stepLogits).arraySync() as number[][];
    });

    const expanded: Beam[] = beams.filter((b) => b.done);
    active.forEach((beam, i) => {
      const scores = logProbs[i];
      const order = scores
        .map((s, id) => [s, id] as [number, number])
        .sort((a, b) => b[0] - a[0])
        .slice(0, opts.beamSize);
      for (const [s, id] of order) {
        if (id === PAD || id === BOS) continue;
        expanded.push({
          ids: id === EOS ? beam.ids : [...beam.ids, id],
          logProb: beam.logProb + s,
          done: id === EOS,
        });
      }
    });
    expanded.sort((a, b) => b.logProb - a.logProb);
    beams = expanded.slice(0, opts.beamSize);
    if (beams.every((b) => b.done)) break;
  }

  return beams
    .sort((a, b) => b.logProb - a.logProb)
    .map((b) => ({ tokens: fromModelIds(b.ids.concat(EOS)), score: b.logProb }));
}
