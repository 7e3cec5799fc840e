import { readFileSync, writeFileSync } from "node:fs";

import { MODEL_ID, embed } from "./embedder.js";
import { ExportManifest, RawTweet, RawTweetSchema, TweetRecordRow } from "./types.js";

export interface ExportOptions {
  dim: number;
  warn?: (message: string) => void;
}

export function parseRawTweets(jsonl: string, warn: (m: string) => void): RawTweet[] {
  const out: RawTweet[] = [];
  const seen = new Set<string>();
  for (const [lineNo, line] of jsonl.split("\n").entries()) {
    const trimmed = line.trim();
    if (trimmed === "" || trimmed.startsWith("#")) continue;
    const parsed = RawTweetSchema.safeParse(JSON.parse(trimmed));
    if (!parsed.success) {
      throw new Error(`line ${lineNo + 1}: ${parsed.error.issues[0]?.message}`);
    }
    if (seen.has(parsed.data.tweet_id)) {
      throw new Error(`duplicate tweet_id ${parsed.data.tweet_id} at line ${lineNo + 1}`);
    }
    seen.add(parsed.data.tweet_id);
    out.push(parsed.data);
  }
  return out;
}

export function exportEmbeddings(
  tweets: RawTweet[],
  options: ExportOptions,
): { rows: TweetRecordRow[]; manifest: ExportManifest } {
  const warn = options.warn ?? (() => {});
  const rows: TweetRecordRow[] = [];
  let skipped = 0;
  for (const tweet of tweets) {
    if (tweet.text.trim() === "") {
      warn(`skipping ${tweet.tweet_id}: empty text`);
      skipped += 1;
      continue;
    }
    rows.push({
      tweet_id: tweet.tweet_id,
      city_id: tweet.city_id,
      day: tweet.day,
      text_embedding: embed(tweet.text, options.dim),
      mobility_features: [],
      weak_label: null,
      gold_label: null,
      weight: 1.0,
    });
  }
  return {
    rows,
    manifest: { model: MODEL_ID, d_t: options.dim, n_exported: rows.length, n_skipped: skipped },
  };
}

export function rowsToJsonl(rows: TweetRecordRow[]): string {
  return rows.map((r) => JSON.stringify(r, Object.keys(r).sort())).join("\n") + (rows.length ? "\n" : "");
}

export function runExport(inputPath: string, outputPath: string, options: ExportOptions): ExportManifest {
  const warn = options.warn ?? ((m) => console.warn(m));
  const tweets = parseRawTweets(readFileSync(inputPath, "utf8"), warn);
  const { rows, manifest } = exportEmbeddings(tweets, { ...options, warn });
  writeFileSync(outputPath, rowsToJsonl(rows));
  writeFileSync(`${outputPath}.manifest.json`, JSON.stringify(manifest, null, 2) + "\n");
  return manifest;
}
