import { z } from "zod";

/** A raw tweet before embedding: text plus routing metadata. */
export const RawTweetSchema = z.object({
  tweet_id: z.string().min(1),
  text: z.string(),
  city_id: z.string().min(1),
  day: z.number().int().nonnegative(),
});

export type RawTweet = z.infer<typeof RawTweetSchema>;

/** One output row, matching the tweet JSONL schema the training pipeline loads. */
export interface TweetRecordRow {
  tweet_id: string;
  city_id: string;
  day: number;
  text_embedding: number[];
  mobility_features: number[];
  weak_label: number | null;
  gold_label: number | null;
  weight: number;
}

/** Sidecar written next to every embedding export. */
export interface ExportManifest {
  model: string;
  d_t: number;
  n_exported: number;
  n_skipped: number;
}

/** The labeling model must answer with exactly this JSON shape. */
export const SentimentResponseSchema = z
  .object({
    sentiment: z.enum(["negative", "neutral", "positive"]),
    confidence: z.number().min(0).max(1),
  })
  .strict();

export type SentimentResponse = z.infer<typeof SentimentResponseSchema>;

export const SENTIMENT_TO_LABEL: Record<SentimentResponse["sentiment"], number> = {
  negative: -1,
  neutral: 0,
  positive: 1,
};
