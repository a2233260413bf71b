/**
 * Wire types for the specrag HTTP API.
 *
 * Field names mirror the JSON bodies exactly; everything here is a plain
 * shape with no behavior so the API client and views stay honest about
 * what the server actually sends.
 */

export interface Citation {
  chunk_id: string;
  doc_id: string;
  snippet: string;
  score: number;
}

export interface Guardrail {
  verdict: "pass" | "fail" | "not_checked";
  method: string;
  detail: string;
}

export interface Trace {
  kind: string;
  subqueries: string[];
  hypothetical: string | null;
  warnings: string[];
}

export interface ChatResponse {
  answer: string;
  model_id: string;
  citations: Citation[];
  guardrail: Guardrail;
  trace: Trace;
  latency_ms: number;
  session_id: string | null;
}

/** One frame of the chat SSE stream. */
export type ChatFrame =
  | { kind: "delta"; seq: number; delta: string }
  | { kind: "done"; response: ChatResponse };

export interface ChunkDetail {
  chunk_id: string;
  doc_id: string;
  ordinal: number;
  text: string;
  word_span: [number, number];
}

export interface HealthResponse {
  status: string;
  index_chunks: number;
  deterministic_mode: boolean;
}

export interface IngestResponse {
  docs: number;
  chunks_kept: number;
  chunks_discarded_short: number;
  warnings: string[];
  index_chunks: number;
}

/** Aggregate for one metric: mean is null when every sample was absent. */
export interface MetricAggregate {
  mean: number | null;
  count: number;
  absent: number;
}

export type Aggregates = Record<string, MetricAggregate>;

export interface SampleRecord {
  sample_id: string;
  strategy: string;
  model: string;
  question: string;
  answer_text: string;
  retrieved_chunk_ids: string[];
  guardrail_verdict: string;
  metrics: Record<string, number | null>;
  absent: string[];
}

export interface EvalReport {
  strategy: string;
  model: string;
  n_samples: number;
  aggregates: Aggregates;
  records: SampleRecord[];
  footnotes: string[];
}

export interface ComparisonCell {
  strategy: string;
  model: string;
  n_samples: number;
  aggregates: Aggregates;
}

export interface ComparisonReport {
  cells: ComparisonCell[];
  dataset_size: number;
}

export type JobState = "pending" | "running" | "done" | "error";

export interface JobStatus {
  job_id: string;
  kind: string;
  status: JobState;
  result?: unknown;
  error?: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export interface EvalRequestBody {
  dataset_path?: string;
  samples?: Array<Record<string, unknown>>;
  strategy?: string;
  model?: string;
}

export interface CompareRequestBody {
  dataset_path?: string;
  samples?: Array<Record<string, unknown>>;
  strategies: string[];
  models?: string[];
}

export const STRATEGIES = ["none", "vanilla", "hyde", "advanced"] as const;
export type Strategy = (typeof STRATEGIES)[number];
