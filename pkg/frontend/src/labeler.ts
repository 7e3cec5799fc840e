import { existsSync, readFileSync, writeFileSync } from "node:fs";

import { RawTweet, SENTIMENT_TO_LABEL, SentimentResponseSchema, TweetRecordRow } from "./types.js";

export interface WeakLabelRow {
  tweet_id: string;
  weak_label: number;
  confidence: number;
  flagged: boolean; // true when the model's output was malformed and we fell back to neutral
}

export interface LabelOptions {
  endpoint: string;
  promptTemplate: string;
  concurrency?: number;
  fetchImpl?: typeof fetch;
  warn?: (message: string) => void;
}

export function buildPrompt(template: string, text: string): string {
  if (!template.includes("{tweet}")) {
    throw new Error("prompt template is missing the {tweet} placeholder");
  }
  return template.replace("{tweet}", text);
}

/** Strict parse of the model's reply; anything off-schema becomes flagged neutral. */
export function parseModelReply(reply: string): Omit<WeakLabelRow, "tweet_id"> {
  let obj: unknown;
  try {
    obj = JSON.parse(reply);
  } catch {
    return { weak_label: 0, confidence: 0, flagged: true };
  }
  const parsed = SentimentResponseSchema.safeParse(obj);
  if (!parsed.success) {
    return { weak_label: 0, confidence: 0, flagged: true };
  }
  return {
    weak_label: SENTIMENT_TO_LABEL[parsed.data.sentiment],
    confidence: parsed.data.confidence,
    flagged: false,
  };
}

async function labelOne(tweet: RawTweet, options: LabelOptions): Promise<WeakLabelRow> {
  const doFetch = options.fetchImpl ?? fetch;
  const response = await doFetch(options.endpoint, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ prompt: buildPrompt(options.promptTemplate, tweet.text) }),
  });
  if (!response.ok) {
    throw new Error(`labeling endpoint returned ${response.status}`);
  }
  const reply = await response.text();
  return { tweet_id: tweet.tweet_id, ...parseModelReply(reply) };
}

export interface LabelRunResult {
  rows: WeakLabelRow[];
  completed: number; // tweets fully processed, also the resume offset on failure
  failed: boolean;
}

/**
 * Label tweets in bounded-concurrency batches, preserving input order.
 *
 * On an endpoint failure the rows finished so far are returned with
 * failed=true and `completed` pointing at the first unprocessed tweet, so the
 * caller can write partial output plus a resume marker.
 */
export async function labelTweets(tweets: RawTweet[], options: LabelOptions): Promise<LabelRunResult> {
  const concurrency = Math.max(1, options.concurrency ?? 4);
  const rows: WeakLabelRow[] = [];
  for (let start = 0; start < tweets.length; start += concurrency) {
    const batch = tweets.slice(start, start + concurrency);
    try {
      rows.push(...(await Promise.all(batch.map((t) => labelOne(t, options)))));
    } catch (err) {
      (options.warn ?? console.warn)(`labeling stopped at tweet ${start}: ${String(err)}`);
      return { rows, completed: start, failed: true };
    }
  }
  return { rows, completed: tweets.length, failed: false };
}

export function resumeMarkerPath(outputPath: string): string {
  return `${outputPath}.resume.json`;
}

export async function runWeakLabel(
  tweets: RawTweet[],
  outputPath: string,
  options: LabelOptions,
): Promise<LabelRunResult> {
  let offset = 0;
  let existing = "";
  const marker = resumeMarkerPath(outputPath);
  if (existsSync(marker)) {
    offset = JSON.parse(readFileSync(marker, "utf8")).completed;
    existing = readFileSync(outputPath, "utf8");
  }
  const result = await labelTweets(tweets.slice(offset), options);
  const lines = result.rows.map((r) => JSON.stringify(r, Object.keys(r).sort())).join("\n");
  writeFileSync(outputPath, existing + lines + (result.rows.length ? "\n" : ""));
  if (result.failed) {
    writeFileSync(marker, JSON.stringify({ completed: offset + result.completed }) + "\n");
  } else if (existsSync(marker)) {
    writeFileSync(marker, JSON.stringify({ completed: offset + result.completed, done: true }) + "\n");
  }
  return { ...result, completed: offset + result.completed };
}

/**
 * Copy weak labels onto exported records. Labels below the confidence
 * threshold (and flagged fallbacks, which carry confidence 0) are applied
 * only when the threshold is 0; the default keeps everything, matching a
 * training path that ignores confidence.
 */
export function mergeWeakLabels(
  records: TweetRecordRow[],
  labels: WeakLabelRow[],
  confidenceThreshold = 0,
): TweetRecordRow[] {
  const byId = new Map(labels.map((l) => [l.tweet_id, l]));
  return records.map((r) => {
    const label = byId.get(r.tweet_id);
    if (label === undefined || label.confidence < confidenceThreshold) return r;
    return { ...r, weak_label: label.weak_label };
  });
}
