/**
 * Client-side chat session state.
 *
 * The transcript is append-only: turns are never removed or reordered, and
 * at most one request is in flight at a time. Views subscribe to change
 * notifications and re-render from this state.
 */

import type { ChatResponse, Guardrail } from "./types.js";

export interface Turn {
  readonly id: number;
  readonly query: string;
  readonly strategy: string;
  status: "streaming" | "complete" | "failed";
  answer: string;
  response: ChatResponse | null;
  error: string | null;
}

export class Session {
  private turns: Turn[] = [];
  private nextId = 0;
  private inFlight = false;
  private listeners: Array<() => void> = [];

  strategy = "vanilla";
  sessionId: string | null = null;

  get transcript(): readonly Turn[] {
    return this.turns;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  /**
   * Open a new turn for a query. Throws when a request is already in
   * flight; the caller should disable input rather than queue sends.
   */
  begin(query: string): Turn {
    if (this.inFlight) {
      throw new Error("a chat request is already in flight");
    }
    this.inFlight = true;
    const turn: Turn = {
      id: this.nextId++,
      query,
      strategy: this.strategy,
      status: "streaming",
      answer: "",
      response: null,
      error: null,
    };
    this.turns.push(turn);
    this.notify();
    return turn;
  }

  appendDelta(turn: Turn, delta: string): void {
    turn.answer += delta;
    this.notify();
  }

  /**
   * Settle a turn with the final response. The final answer replaces the
   * streamed text: when the guardrail fails, the server substitutes a
   * default answer that the raw deltas do not contain.
   */
  complete(turn: Turn, response: ChatResponse): void {
    turn.status = "complete";
    turn.answer = response.answer;
    turn.response = response;
    if (response.session_id !== null) {
      this.sessionId = response.session_id;
    }
    this.inFlight = false;
    this.notify();
  }

  fail(turn: Turn, error: string): void {
    turn.status = "failed";
    turn.error = error;
    this.inFlight = false;
    this.notify();
  }
}

export function guardrailBadge(guardrail: Guardrail | null): {
  label: string;
  tone: "ok" | "warn" | "muted";
} {
  if (guardrail === null) {
    return { label: "unchecked", tone: "muted" };
  }
  switch (guardrail.verdict) {
    case "pass":
      return { label: "grounded", tone: "ok" };
    case "fail":
      return { label: "guardrail: answer withheld", tone: "warn" };
    default:
      return { label: "not checked", tone: "muted" };
  }
}
