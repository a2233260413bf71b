/** Chat view: query box, streamed transcript, citation panel. */

import { ApiClient, ApiError } from "../api.js";
import { Session, guardrailBadge } from "../transcript.js";
import type { Turn } from "../transcript.js";
import type { Citation } from "../types.js";
import { STRATEGIES } from "../types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className !== undefined) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export class ChatView {
  readonly root: HTMLElement;
  private readonly session = new Session();
  private readonly transcriptEl: HTMLElement;
  private readonly citationsEl: HTMLElement;
  private readonly input: HTMLTextAreaElement;
  private readonly sendButton: HTMLButtonElement;
  private selectedTurn: Turn | null = null;

  constructor(private readonly api: ApiClient) {
    this.root = el("div", "chat-view");

    const controls = el("div", "controls");
    const strategySelect = el("select");
    for (const strategy of STRATEGIES) {
      const option = el("option", undefined, strategy);
      option.value = strategy;
      option.selected = strategy === this.session.strategy;
      strategySelect.appendChild(option);
    }
    strategySelect.addEventListener("change", () => {
      this.session.strategy = strategySelect.value;
    });
    controls.appendChild(el("label", undefined, "strategy"));
    controls.appendChild(strategySelect);
    this.root.appendChild(controls);

    const main = el("div", "chat-main");
    this.transcriptEl = el("div", "transcript");
    this.citationsEl = el("aside", "citations");
    this.citationsEl.appendChild(el("p", "hint", "citations appear here"));
    main.appendChild(this.transcriptEl);
    main.appendChild(this.citationsEl);
    this.root.appendChild(main);

    const composer = el("div", "composer");
    this.input = el("textarea");
    this.input.placeholder = "ask about the indexed corpus";
    this.input.addEventListener("keydown", (event) => {
      if (event.key === "Enter" && !event.shiftKey) {
        event.preventDefault();
        void this.send();
      }
    });
    this.sendButton = el("button", undefined, "send");
    this.sendButton.addEventListener("click", () => void this.send());
    composer.appendChild(this.input);
    composer.appendChild(this.sendButton);
    this.root.appendChild(composer);

    this.session.onChange(() => this.render());
  }

  private async send(): Promise<void> {
    const query = this.input.value.trim();
    if (query === "" || this.session.busy) {
      return;
    }
    this.input.value = "";
    const turn = this.session.begin(query);
    this.selectedTurn = turn;
    try {
      const response = await this.api.chatStream(
        query,
        (delta) => this.session.appendDelta(turn, delta),
        {
          strategy: this.session.strategy,
          sessionId: this.session.sessionId ?? undefined,
        },
      );
      this.session.complete(turn, response);
    } catch (error) {
      const message =
        error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
      this.session.fail(turn, message);
    }
  }

  private render(): void {
    this.sendButton.disabled = this.session.busy;
    this.input.disabled = this.session.busy;
    this.transcriptEl.replaceChildren();
    for (const turn of this.session.transcript) {
      const item = el("div", "turn");
      item.appendChild(el("div", "query", turn.query));

      const answer = el("div", "answer");
      answer.appendChild(el("span", undefined, turn.answer));
      if (turn.status === "streaming") {
        answer.appendChild(el("span", "cursor", "▌"));
      }
      if (turn.status === "failed") {
        answer.appendChild(el("div", "error", turn.error ?? "request failed"));
      }
      if (turn.response !== null) {
        const badge = guardrailBadge(turn.response.guardrail);
        answer.appendChild(el("span", `badge badge-${badge.tone}`, badge.label));
        const meta = el(
          "div",
          "meta",
          `${turn.strategy} · ${turn.response.model_id} · ` +
            `${turn.response.citations.length} sources · ${turn.response.latency_ms} ms`,
        );
        answer.appendChild(meta);
      }
      item.appendChild(answer);
      item.addEventListener("click", () => {
        this.selectedTurn = turn;
        this.renderCitations();
      });
      this.transcriptEl.appendChild(item);
    }
    this.transcriptEl.scrollTop = this.transcriptEl.scrollHeight;
    this.renderCitations();
  }

  private renderCitations(): void {
    this.citationsEl.replaceChildren();
    const response = this.selectedTurn?.response ?? null;
    if (response === null || response.citations.length === 0) {
      this.citationsEl.appendChild(el("p", "hint", "no citations for this turn"));
      return;
    }
    this.citationsEl.appendChild(el("h3", undefined, "sources"));
    response.citations.forEach((citation, index) => {
      this.citationsEl.appendChild(this.citationEntry(citation, index));
    });
  }

  private citationEntry(citation: Citation, index: number): HTMLElement {
    const entry = el("div", "citation");
    const head = el("div", "citation-head");
    head.appendChild(el("span", "citation-rank", `[${index + 1}]`));
    head.appendChild(el("span", "citation-doc", citation.doc_id));
    head.appendChild(el("span", "citation-score", citation.score.toFixed(3)));
    entry.appendChild(head);
    entry.appendChild(el("p", "citation-snippet", citation.snippet));
    const expand = el("button", "citation-expand", "full chunk");
    expand.addEventListener("click", async (event) => {
      event.stopPropagation();
      expand.disabled = true;
      try {
        const chunk = await this.api.chunk(citation.chunk_id);
        entry.querySelector(".citation-snippet")!.textContent = chunk.text;
        expand.remove();
      } catch (error) {
        expand.disabled = false;
        expand.textContent =
          error instanceof ApiError ? `failed: ${error.code}` : "failed";
      }
    });
    entry.appendChild(expand);
    return entry;
  }
}
