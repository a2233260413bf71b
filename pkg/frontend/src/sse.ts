/**
 * Incremental parser for the chat endpoint's server-sent-event stream.
 *
 * The server emits frames of the form `data: {json}\n\n`. Network reads can
 * split a frame anywhere, including inside a UTF-8 escape or between the two
 * newlines, so the parser buffers text across push() calls and only yields
 * complete frames.
 */

import type { ChatFrame, ChatResponse } from "./types.js";

export class SseParser {
  private buffer = "";

  /** Feed a decoded text chunk; returns every frame completed by it. */
  push(text: string): string[] {
    this.buffer += text;
    const frames: string[] = [];
    for (;;) {
      // frames are delimited by a blank line; tolerate \r\n line endings
      const match = this.buffer.match(/\r?\n\r?\n/);
      if (match === null || match.index === undefined) {
        break;
      }
      const raw = this.buffer.slice(0, match.index);
      this.buffer = this.buffer.slice(match.index + match[0].length);
      const data = extractData(raw);
      if (data !== null) {
        frames.push(data);
      }
    }
    return frames;
  }

  /** Flush any trailing frame not terminated by a blank line. */
  end(): string[] {
    const raw = this.buffer;
    this.buffer = "";
    const data = extractData(raw);
    return data === null ? [] : [data];
  }
}

function extractData(block: string): string | null {
  const lines: string[] = [];
  for (const line of block.split(/\r?\n/)) {
    if (line.startsWith("data:")) {
      lines.push(line.slice(5).replace(/^ /, ""));
    }
    // comment lines (":") and unknown fields are ignored per the SSE format
  }
  if (lines.length === 0) {
    return null;
  }
  return lines.join("\n");
}

/**
 * Decode one data payload into a typed chat frame.
 *
 * Returns null for payloads that are not valid JSON or do not match either
 * frame shape; callers skip those rather than aborting the stream.
 */
export function parseChatFrame(data: string): ChatFrame | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(data);
  } catch {
    return null;
  }
  if (typeof parsed !== "object" || parsed === null) {
    return null;
  }
  const obj = parsed as Record<string, unknown>;
  if (obj.done === true && typeof obj.response === "object" && obj.response !== null) {
    return { kind: "done", response: obj.response as ChatResponse };
  }
  if (typeof obj.seq === "number" && typeof obj.delta === "string") {
    return { kind: "delta", seq: obj.seq, delta: obj.delta };
  }
  return null;
}

/** Parse a fully buffered SSE body into chat frames, skipping junk. */
export function parseChatStream(body: string): ChatFrame[] {
  const parser = new SseParser();
  const frames: ChatFrame[] = [];
  for (const data of [...parser.push(body), ...parser.end()]) {
    const frame = parseChatFrame(data);
    if (frame !== null) {
      frames.push(frame);
    }
  }
  return frames;
}
