#!/usr/bin/env node
/**
 * embed-exporter: produce the tweet JSONL the training pipeline consumes.
 *
 *   embed-exporter export-embeddings --input raw.jsonl --output tweets.jsonl [--dim 16]
 *       [--weak-labels labels.jsonl] [--confidence-threshold 0]
 *   embed-exporter weak-label --input raw.jsonl --output labels.jsonl
 *       --endpoint http://host/label [--prompt path] [--concurrency 4]
 *
 * Exit codes: 0 ok, 1 endpoint failure (partial output + resume marker
 * written), 2 bad arguments or malformed input.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { exportEmbeddings, parseRawTweets, rowsToJsonl } from "./exporter.js";
import { mergeWeakLabels, runWeakLabel, WeakLabelRow } from "./labeler.js";

const DEFAULT_DIM = 16;

function parseArgs(argv: string[]): Record<string, string> {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || argv[i + 1] === undefined) {
      throw new Error(`bad argument ${key}`);
    }
    out[key.slice(2)] = argv[i + 1];
  }
  return out;
}

function require_(args: Record<string, string>, name: string): string {
  const value = args[name];
  if (value === undefined) throw new Error(`missing required --${name}`);
  return value;
}

function defaultPromptPath(): string {
  return join(dirname(fileURLToPath(import.meta.url)), "..", "assets", "sentiment_prompt.txt");
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  let args: Record<string, string>;
  try {
    args = parseArgs(rest);
  } catch (err) {
    console.error(String(err));
    return 2;
  }

  try {
    if (command === "export-embeddings") {
      const input = require_(args, "input");
      const output = require_(args, "output");
      const dim = Number(args["dim"] ?? DEFAULT_DIM);
      const tweets = parseRawTweets(readFileSync(input, "utf8"), (m) => console.warn(m));
      let { rows, manifest } = exportEmbeddings(tweets, { dim, warn: (m) => console.warn(m) });
      if (args["weak-labels"] !== undefined) {
        const labels: WeakLabelRow[] = readFileSync(args["weak-labels"], "utf8")
          .split("\n")
          .filter((l) => l.trim() !== "")
          .map((l) => JSON.parse(l));
        rows = mergeWeakLabels(rows, labels, Number(args["confidence-threshold"] ?? 0));
      }
      writeFileSync(output, rowsToJsonl(rows));
      writeFileSync(`${output}.manifest.json`, JSON.stringify(manifest, null, 2) + "\n");
      console.log(`exported ${manifest.n_exported} records (${manifest.n_skipped} skipped) -> ${output}`);
      return 0;
    }

    if (command === "weak-label") {
      const input = require_(args, "input");
      const output = require_(args, "output");
      const endpoint = require_(args, "endpoint");
      const promptTemplate = readFileSync(args["prompt"] ?? defaultPromptPath(), "utf8");
      const tweets = parseRawTweets(readFileSync(input, "utf8"), (m) => console.warn(m));
      const result = await runWeakLabel(tweets, output, {
        endpoint,
        promptTemplate,
        concurrency: Number(args["concurrency"] ?? 4),
        warn: (m) => console.warn(m),
      });
      if (result.failed) {
        console.error(`endpoint failed; ${result.completed}/${tweets.length} labeled, resume marker written`);
        return 1;
      }
      console.log(`labeled ${result.completed} tweets -> ${output}`);
      return 0;
    }

    console.error(`unknown command ${command ?? "(none)"}; use export-embeddings or weak-label`);
    return 2;
  } catch (err) {
    console.error(String(err));
    return 2;
  }
}

main().then((code) => {
  process.exitCode = code;
});
