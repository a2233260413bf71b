import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import type { ChatResponse, JobStatus } from "../src/types.js";

interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** fetch stub that records calls and replays canned responses in order. */
function mockFetch(responses: Response[]): {
  fetchFn: typeof fetch;
  requests: RecordedRequest[];
} {
  const requests: RecordedRequest[] = [];
  const queue = [...responses];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    requests.push({
      url: String(input),
      method: init?.method ?? "GET",
      body: typeof init?.body === "string" ? JSON.parse(init.body) : null,
    });
    const next = queue.shift();
    if (next === undefined) {
      throw new Error("mock fetch exhausted");
    }
    return next;
  }) as typeof fetch;
  return { fetchFn, requests };
}

const CHAT_RESPONSE: ChatResponse = {
  answer: "The archiver compresses quotas.",
  model_id: "context-echo",
  citations: [
    { chunk_id: "archiver.txt::0", doc_id: "archiver.txt", snippet: "The archiver", score: 2 },
  ],
  guardrail: { verdict: "pass", method: "lexical", detail: "all supported" },
  trace: { kind: "vanilla", subqueries: [], hypothetical: null, warnings: [] },
  latency_ms: 1,
  session_id: "s1",
};

function sseBody(frames: unknown[]): string {
  return frames.map((frame) => `data: ${JSON.stringify(frame)}\n\n`).join("");
}

/** Stream a body as fixed-size byte chunks so frames split mid-JSON. */
function chunkedStream(body: string, chunkSize: number): ReadableStream<Uint8Array> {
  const bytes = new TextEncoder().encode(body);
  let offset = 0;
  return new ReadableStream({
    pull(controller) {
      if (offset >= bytes.length) {
        controller.close();
        return;
      }
      controller.enqueue(bytes.slice(offset, offset + chunkSize));
      offset += chunkSize;
    },
  });
}

describe("ApiClient request shapes", () => {
  it("posts the chat body the service expects", async () => {
    const { fetchFn, requests } = mockFetch([jsonResponse(CHAT_RESPONSE)]);
    const client = new ApiClient({ baseUrl: "http://h:1/", fetchFn });
    const response = await client.chat("what does the archiver do?", {
      strategy: "advanced",
      sessionId: "s1",
    });
    expect(requests).toHaveLength(1);
    expect(requests[0]!.url).toBe("http://h:1/api/chat");
    expect(requests[0]!.method).toBe("POST");
    expect(requests[0]!.body).toEqual({
      query: "what does the archiver do?",
      strategy: "advanced",
      session_id: "s1",
      stream: false,
    });
    expect(response.answer).toBe(CHAT_RESPONSE.answer);
  });

  it("defaults strategy and session to null", async () => {
    const { fetchFn, requests } = mockFetch([jsonResponse(CHAT_RESPONSE)]);
    await new ApiClient({ fetchFn }).chat("q");
    expect(requests[0]!.body).toEqual({ query: "q", strategy: null, session_id: null, stream: false });
  });

  it("URL-encodes chunk ids", async () => {
    const { fetchFn, requests } = mockFetch([
      jsonResponse({ chunk_id: "a.txt::0", doc_id: "a.txt", ordinal: 0, text: "t", word_span: [0, 3] }),
    ]);
    await new ApiClient({ fetchFn }).chunk("a.txt::0");
    expect(requests[0]!.url).toBe("/api/chunks/a.txt%3A%3A0");
  });

  it("posts compare bodies and reads job envelopes", async () => {
    const { fetchFn, requests } = mockFetch([
      jsonResponse({ job_id: "j1", status: "pending" }),
    ]);
    const job = await new ApiClient({ fetchFn }).startCompare({
      dataset_path: "/tmp/ds.jsonl",
      strategies: ["none", "vanilla"],
    });
    expect(requests[0]!.url).toBe("/api/compare");
    expect(requests[0]!.body).toEqual({
      dataset_path: "/tmp/ds.jsonl",
      strategies: ["none", "vanilla"],
    });
    expect(job.job_id).toBe("j1");
  });
});

describe("ApiClient error mapping", () => {
  it("surfaces service error envelopes", async () => {
    const { fetchFn } = mockFetch([
      jsonResponse({ code: "index_not_loaded", message: "index not loaded; POST /api/ingest first" }, 409),
    ]);
    const error = await new ApiClient({ fetchFn }).chat("q").catch((e: unknown) => e);
    expect(error).toBeInstanceOf(ApiError);
    const apiError = error as ApiError;
    expect(apiError.status).toBe(409);
    expect(apiError.code).toBe("index_not_loaded");
    expect(apiError.message).toContain("ingest");
  });

  it("keeps the correlation id from internal errors", async () => {
    const { fetchFn } = mockFetch([
      jsonResponse({ code: "internal_error", message: "internal error; correlation id 123abc" }, 500),
    ]);
    const error = (await new ApiClient({ fetchFn }).health().catch((e: unknown) => e)) as ApiError;
    expect(error.code).toBe("internal_error");
    expect(error.message).toContain("correlation id 123abc");
  });

  it("maps validation bodies to a validation_error code", async () => {
    const { fetchFn } = mockFetch([
      jsonResponse({ detail: [{ loc: ["body", "query"], msg: "too short" }] }, 422),
    ]);
    const error = (await new ApiClient({ fetchFn }).chat("").catch((e: unknown) => e)) as ApiError;
    expect(error.status).toBe(422);
    expect(error.code).toBe("validation_error");
    expect(error.message).toContain("too short");
  });

  it("falls back to the status text for non-JSON bodies", async () => {
    const { fetchFn } = mockFetch([
      new Response("<html>bad gateway</html>", { status: 502, statusText: "Bad Gateway" }),
    ]);
    const error = (await new ApiClient({ fetchFn }).health().catch((e: unknown) => e)) as ApiError;
    expect(error.status).toBe(502);
    expect(error.code).toBe("http_error");
    expect(error.message).toBe("Bad Gateway");
  });
});

describe("ApiClient.chatStream", () => {
  const frames = [
    { seq: 0, delta: "The archiver " },
    { seq: 1, delta: "compresses " },
    { seq: 2, delta: "quotas." },
    { done: true, response: { ...CHAT_RESPONSE, answer: "The archiver compresses quotas." } },
  ];

  it("forwards deltas in order and resolves with the final response", async () => {
    for (const chunkSize of [1, 7, 16, 4096]) {
      const { fetchFn, requests } = mockFetch([
        new Response(chunkedStream(sseBody(frames), chunkSize), { status: 200 }),
      ]);
      const seen: Array<[number, string]> = [];
      const final = await new ApiClient({ fetchFn }).chatStream(
        "what does the archiver do?",
        (delta, seq) => seen.push([seq, delta]),
        { strategy: "vanilla" },
      );
      expect(requests[0]!.body).toMatchObject({ stream: true, strategy: "vanilla" });
      expect(seen.map(([seq]) => seq)).toEqual([0, 1, 2]);
      expect(seen.map(([, delta]) => delta).join("")).toBe(final.answer);
      expect(final.guardrail.verdict).toBe("pass");
    }
  });

  it("skips junk frames and trusts the done frame", async () => {
    const body = sseBody([frames[0]]) + "data: not json\n\n" + sseBody([frames[3]]);
    const { fetchFn } = mockFetch([new Response(chunkedStream(body, 11), { status: 200 })]);
    const seen: string[] = [];
    const final = await new ApiClient({ fetchFn }).chatStream("q", (d) => seen.push(d));
    expect(seen).toEqual(["The archiver "]);
    expect(final.answer).toBe("The archiver compresses quotas.");
  });

  it("rejects when the stream ends without a done frame", async () => {
    const { fetchFn } = mockFetch([
      new Response(chunkedStream(sseBody(frames.slice(0, 2)), 8), { status: 200 }),
    ]);
    const error = (await new ApiClient({ fetchFn })
      .chatStream("q", () => undefined)
      .catch((e: unknown) => e)) as ApiError;
    expect(error).toBeInstanceOf(ApiError);
    expect(error.code).toBe("incomplete_stream");
  });

  it("raises the service error before reading any stream", async () => {
    const { fetchFn } = mockFetch([
      jsonResponse({ code: "index_not_loaded", message: "index not loaded" }, 409),
    ]);
    const error = (await new ApiClient({ fetchFn })
      .chatStream("q", () => undefined)
      .catch((e: unknown) => e)) as ApiError;
    expect(error.status).toBe(409);
    expect(error.code).toBe("index_not_loaded");
  });
});

describe("ApiClient.pollJob", () => {
  it("polls until the job settles, reporting each status", async () => {
    const states: JobStatus[] = [
      { job_id: "j1", kind: "compare", status: "pending" },
      { job_id: "j1", kind: "compare", status: "running" },
      { job_id: "j1", kind: "compare", status: "done", result: { cells: [], dataset_size: 0 } },
    ];
    const { fetchFn, requests } = mockFetch(states.map((s) => jsonResponse(s)));
    const delays: number[] = [];
    const client = new ApiClient({
      fetchFn,
      delayFn: async (ms) => {
        delays.push(ms);
      },
    });
    const seen: string[] = [];
    const settled = await client.pollJob("j1", (s) => seen.push(s.status), 250);
    expect(requests.map((r) => r.url)).toEqual(["/api/jobs/j1", "/api/jobs/j1", "/api/jobs/j1"]);
    expect(seen).toEqual(["pending", "running", "done"]);
    expect(delays).toEqual([250, 250]);
    expect(settled.status).toBe("done");
  });

  it("resolves with failed jobs instead of throwing", async () => {
    const { fetchFn } = mockFetch([
      jsonResponse({ job_id: "j2", kind: "eval", status: "error", error: "dataset unreadable" }),
    ]);
    const settled = await new ApiClient({ fetchFn }).pollJob("j2");
    expect(settled.status).toBe("error");
    expect(settled.error).toBe("dataset unreadable");
  });
});
