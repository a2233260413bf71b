/**
 * Typed client for the specrag HTTP API.
 *
 * The fetch implementation is injectable so tests can drive the client
 * against canned responses without a server or DOM.
 */

import { SseParser, parseChatFrame } from "./sse.js";
import type {
  ChatResponse,
  ChunkDetail,
  CompareRequestBody,
  EvalRequestBody,
  HealthResponse,
  IngestResponse,
  JobStatus,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ChatOptions {
  strategy?: string;
  sessionId?: string;
}

export interface ApiClientOptions {
  baseUrl?: string;
  fetchFn?: typeof fetch;
  /** Sleep between job polls; injectable so tests run instantly. */
  delayFn?: (ms: number) => Promise<void>;
}

const defaultDelay = (ms: number): Promise<void> =>
  new Promise((resolve) => setTimeout(resolve, ms));

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;
  private readonly delayFn: (ms: number) => Promise<void>;

  constructor(options: ApiClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? "").replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? fetch;
    this.delayFn = options.delayFn ?? defaultDelay;
  }

  health(): Promise<HealthResponse> {
    return this.getJson("/api/health");
  }

  ingest(corpusPath: string): Promise<IngestResponse> {
    return this.postJson("/api/ingest", { corpus_path: corpusPath });
  }

  chat(query: string, options: ChatOptions = {}): Promise<ChatResponse> {
    return this.postJson("/api/chat", {
      query,
      strategy: options.strategy ?? null,
      session_id: options.sessionId ?? null,
      stream: false,
    });
  }

  /**
   * Stream a chat answer. Deltas are forwarded in arrival order via
   * onDelta; resolves with the final response carried by the done frame.
   */
  async chatStream(
    query: string,
    onDelta: (delta: string, seq: number) => void,
    options: ChatOptions = {},
  ): Promise<ChatResponse> {
    const response = await this.fetchFn(this.baseUrl + "/api/chat", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        query,
        strategy: options.strategy ?? null,
        session_id: options.sessionId ?? null,
        stream: true,
      }),
    });
    if (!response.ok) {
      throw await this.toError(response);
    }
    if (response.body === null) {
      throw new ApiError(0, "empty_stream", "response carried no body");
    }

    const parser = new SseParser();
    const decoder = new TextDecoder();
    const reader = response.body.getReader();
    let final: ChatResponse | null = null;

    const handle = (data: string): void => {
      const frame = parseChatFrame(data);
      if (frame === null) {
        return; // skip unparseable frames; the done frame is authoritative
      }
      if (frame.kind === "delta") {
        onDelta(frame.delta, frame.seq);
      } else {
        final = frame.response;
      }
    };

    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        break;
      }
      for (const data of parser.push(decoder.decode(value, { stream: true }))) {
        handle(data);
      }
    }
    for (const data of parser.end()) {
      handle(data);
    }

    if (final === null) {
      throw new ApiError(0, "incomplete_stream", "stream ended without a done frame");
    }
    return final;
  }

  chunk(chunkId: string): Promise<ChunkDetail> {
    return this.getJson("/api/chunks/" + encodeURIComponent(chunkId));
  }

  startEval(body: EvalRequestBody): Promise<JobStatus> {
    return this.postJson("/api/eval", body);
  }

  startCompare(body: CompareRequestBody): Promise<JobStatus> {
    return this.postJson("/api/compare", body);
  }

  job(jobId: string): Promise<JobStatus> {
    return this.getJson("/api/jobs/" + encodeURIComponent(jobId));
  }

  /**
   * Poll a job until it settles. Resolves with the final status whether the
   * job finished or failed; the caller decides how to surface errors.
   */
  async pollJob(
    jobId: string,
    onUpdate?: (status: JobStatus) => void,
    intervalMs = 500,
  ): Promise<JobStatus> {
    for (;;) {
      const status = await this.job(jobId);
      onUpdate?.(status);
      if (status.status === "done" || status.status === "error") {
        return status;
      }
      await this.delayFn(intervalMs);
    }
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    return this.decode<T>(response);
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.decode<T>(response);
  }

  private async decode<T>(response: Response): Promise<T> {
    if (!response.ok) {
      throw await this.toError(response);
    }
    return (await response.json()) as T;
  }

  private async toError(response: Response): Promise<ApiError> {
    let code = "http_error";
    let message = response.statusText || `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as Record<string, unknown>;
      if (typeof body.code === "string") {
        code = body.code;
      }
      if (typeof body.message === "string") {
        message = body.message;
      } else if (body.detail !== undefined) {
        // FastAPI validation errors arrive as {detail: [...]}
        code = "validation_error";
        message = JSON.stringify(body.detail);
      }
    } catch {
      // non-JSON error body; keep the status text
    }
    return new ApiError(response.status, code, message);
  }
}
