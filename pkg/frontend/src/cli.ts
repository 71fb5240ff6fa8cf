#!/usr/bin/env node
/** CLI: train a proposer on an exported corpus, or serve a checkpoint. */

import { initBackend, loadModel } from "./model";
import { DEFAULT_TRAIN, trainCorpusDir } from "./train";
import { DEFAULT_SERVE, startServer } from "./server";

function parseArgs(argv: string[]): { [k: string]: string } {
  const out: { [k: string]: string } = {};
  for (let i = 0; i < argv.length; i++) {
    if (argv[i].startsWith("--")) {
      out[argv[i].slice(2)] = argv[i + 1] ?? "";
      i++;
    }
  }
  return out;
}

async function main(): Promise<number> {
  const [cmd, ...rest] = process.argv.slice(2);
  const args = parseArgs(rest);

  if (cmd === "train") {
    if (!args.corpus || !args.out) {
      console.error("usage: train --corpus DIR --out DIR [--epochs N] [--limit N] [--lr R]");
      return 1;
    }
    const backend = await initBackend();
    console.log(`backend: ${backend}`);
    const opts = {
      ...DEFAULT_TRAIN,
      epochs: args.epochs ? parseInt(args.epochs, 10) : DEFAULT_TRAIN.epochs,
      learningRate: args.lr ? parseFloat(args.lr) : DEFAULT_TRAIN.learningRate,
      logEvery: (epoch: number, trainLoss: number, valLoss: number, acc: number) =>
        console.log(
          `epoch ${epoch}: train ${trainLoss.toFixed(4)} val ${valLoss.toFixed(4)} acc ${(acc * 100).toFixed(1)}%`
        ),
    };
    const limit = args.limit ? parseInt(args.limit, 10) : undefined;
    const result = await trainCorpusDir(args.corpus, args.out, opts, limit);
    const last = result.history[result.history.length - 1];
    console.log(`saved ${args.out}; final val loss ${last.valLoss.toFixed(4)}, accuracy ${(last.accuracy * 100).toFixed(1)}%`);
    return 0;
  }

  if (cmd === "serve") {
    if (!args.ckpt || !args.port) {
      console.error("usage: serve --ckpt DIR --port N [--beam N] [--k N]");
      return 1;
    }
    const backend = await initBackend();
    const { model, config } = await loadModel(args.ckpt);
    const opts = {
      beamSize: args.beam ? parseInt(args.beam, 10) : DEFAULT_SERVE.beamSize,
      maxCandidates: args.k ? parseInt(args.k, 10) : DEFAULT_SERVE.maxCandidates,
    };
    await startServer(model, config, parseInt(args.port, 10), opts);
    console.log(`serving on 127.0.0.1:${args.port} (backend ${backend}, beam ${opts.beamSize})`);
    return -1; // keep running
  }

  console.error("usage: symnet-proposer {train|serve} ...");
  return 1;
}

main().then((code) => {
  if (code >= 0) process.exit(code);
});
