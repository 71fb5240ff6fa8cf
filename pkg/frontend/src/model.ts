/**
 * Set-to-sequence model.
 *
 * Encoder: a per-row MLP over the multi-hot bits followed by mean pooling
 * across rows, so the data embedding is permutation invariant by
 * construction. Decoder: token embedding concatenated with the pooled code
 * at every step, an LSTM, and a softmax head; trained with teacher forcing.
 */

import * as tf from "@tensorflow/tfjs";
import * as fs from "fs";
import * as path from "path";

export interface ModelConfig {
  featBits: number; // (dMax + 1) * 32
  vocabSize: number; // shifted tokens + PAD/BOS/EOS
  encoderUnits: number;
  embedDim: number;
  decoderUnits: number;
  maxLen: number; // decoder steps incl. EOS
  dMax: number;
  m: number;
  lMax: number;
  initSeed?: number; // deterministic weight initialization
}

export const TOY_CONFIG: Omit<ModelConfig, "featBits" | "vocabSize" | "dMax" | "m" | "lMax"> = {
  encoderUnits: 64,
  embedDim: 32,
  decoderUnits: 96,
  maxLen: 48,
};

export function buildModel(cfg: ModelConfig): tf.LayersModel {
  const seed = cfg.initSeed ?? 7;
  const glorot = (k: number) => tf.initializers.glorotUniform({ seed: seed + k });
  const dense = (units: number, name: string, k: number, activation?: "relu" | "tanh", useBias = true) =>
    tf.layers.dense({ units, name, activation, useBias, kernelInitializer: glorot(k) });

  const dataInput = tf.input({ shape: [null, cfg.featBits], name: "data_rows" });
  let h = dense(cfg.encoderUnits, "row_dense_1", 1, "relu").apply(dataInput) as tf.SymbolicTensor;
  h = dense(cfg.encoderUnits, "row_dense_2", 2, "relu").apply(h) as tf.SymbolicTensor;
  // mean alone nearly collapses across datasets (bit means are flat); the
  // max channel keeps extremes, and feature-wise normalization stretches the
  // tiny inter-sample differences back to unit scale
  const meanPool = tf.layers.globalAveragePooling1d({ name: "mean_pool" }).apply(h) as tf.SymbolicTensor;
  const maxPool = tf.layers.globalMaxPooling1d({ name: "max_pool" }).apply(h) as tf.SymbolicTensor;
  const pooled = tf.layers.concatenate({ name: "pool_concat" }).apply([meanPool, maxPool]) as tf.SymbolicTensor;
  const normed = tf.layers.batchNormalization({ name: "pool_norm" }).apply(pooled) as tf.SymbolicTensor;
  const code = dense(cfg.encoderUnits, "latent", 3, "relu").apply(normed) as tf.SymbolicTensor;

  // tokens arrive one-hot so the embedding is a dense matmul: the wasm
  // backend has no gradient kernel for gather-based embeddings
  const tokenInput = tf.input({ shape: [cfg.maxLen, cfg.vocabSize], name: "token_onehot" });
  const embedded = dense(cfg.embedDim, "token_embed", 4, undefined, false).apply(
    tokenInput
  ) as tf.SymbolicTensor;
  const repeated = tf.layers.repeatVector({ n: cfg.maxLen, name: "repeat_code" }).apply(code) as tf.SymbolicTensor;
  const stepInput = tf.layers
    .concatenate({ name: "step_concat" })
    .apply([embedded, repeated]) as tf.SymbolicTensor;
  // condition the recurrence itself, not just the step inputs
  const h0 = dense(cfg.decoderUnits, "init_h", 5, "tanh").apply(code) as tf.SymbolicTensor;
  const c0 = dense(cfg.decoderUnits, "init_c", 6, "tanh").apply(code) as tf.SymbolicTensor;
  const decoded = tf.layers
    .lstm({
      units: cfg.decoderUnits,
      returnSequences: true,
      name: "decoder_lstm",
      kernelInitializer: glorot(7),
      recurrentInitializer: tf.initializers.orthogonal({ seed: seed + 8 }),
    })
    .apply(stepInput, { initialState: [h0, c0] }) as tf.SymbolicTensor;
  // skip connection: the head sees the code and embedded previous token
  // directly, which learns lookup-like associations much faster than credit
  // assignment through the recurrence alone
  const headInput = tf.layers
    .concatenate({ name: "head_concat" })
    .apply([decoded, stepInput]) as tf.SymbolicTensor;
  const logits = dense(cfg.vocabSize, "head", 9).apply(headInput) as tf.SymbolicTensor;

  return tf.model({ inputs: [dataInput, tokenInput], outputs: logits, name: "set_to_sequence" });
}

/** Masked token-level cross entropy; PAD positions contribute nothing. */
export function maskedLoss(logits: tf.Tensor3D, targets: tf.Tensor2D): tf.Scalar {
  return tf.tidy(() => {
    const mask = tf.greater(targets, 0).cast("float32");
    const oneHot = tf.oneHot(targets.cast("int32"), logits.shape[2]);
    const xent = tf.losses.softmaxCrossEntropy(oneHot, logits, undefined, undefined, tf.Reduction.NONE);
    const masked = xent.mul(mask);
    return masked.sum().div(mask.sum().maximum(1)) as tf.Scalar;
  });
}

/** Fraction of non-PAD target positions predicted exactly. */
export function nextTokenAccuracy(logits: tf.Tensor3D, targets: tf.Tensor2D): number {
  return tf.tidy(() => {
    const mask = tf.greater(targets, 0).cast("float32");
    const pred = logits.argMax(-1).cast("int32");
    const hit = pred.equal(targets.cast("int32")).cast("float32").mul(mask);
    return hit.sum().div(mask.sum().maximum(1)).dataSync()[0];
  });
}

interface SavedMeta {
  config: ModelConfig;
  weightSpecs: tf.io.WeightsManifestEntry[];
}

export async function saveModel(model: tf.LayersModel, cfg: ModelConfig, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  const artifacts = await new Promise<tf.io.ModelArtifacts>((resolve) => {
    model.save(
      tf.io.withSaveHandler(async (a) => {
        resolve(a);
        return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
      })
    );
  });
  fs.writeFileSync(path.join(dir, "topology.json"), JSON.stringify(artifacts.modelTopology));
  fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.from(artifacts.weightData as ArrayBuffer));
  const meta: SavedMeta = {
    config: cfg,
    weightSpecs: artifacts.weightSpecs as tf.io.WeightsManifestEntry[],
  };
  fs.writeFileSync(path.join(dir, "meta.json"), JSON.stringify(meta));
}

export async function loadModel(dir: string): Promise<{ model: tf.LayersModel; config: ModelConfig }> {
  const meta: SavedMeta = JSON.parse(fs.readFileSync(path.join(dir, "meta.json"), "utf-8"));
  const topology = JSON.parse(fs.readFileSync(path.join(dir, "topology.json"), "utf-8"));
  const weightData = fs.readFileSync(path.join(dir, "weights.bin"));
  const model = await tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: topology,
      weightSpecs: meta.weightSpecs,
      weightData: weightData.buffer.slice(weightData.byteOffset, weightData.byteOffset + weightData.byteLength),
    })
  );
  return { model, config: meta.config };
}

export async function initBackend(): Promise<string> {
  try {
    require("@tensorflow/tfjs-backend-wasm");
    if (await tf.setBackend("wasm")) return "wasm";
  } catch {
    // fall through to the pure-JS CPU backend
  }
  await tf.setBackend("cpu");
  return "cpu";
}
