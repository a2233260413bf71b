/** Eval view: launch compare jobs, poll status, render grouped bar charts. */

import { ApiClient, ApiError } from "../api.js";
import { answerChart, judgeChart, renderBarChartSvg, retrievalChart } from "../charts.js";
import type { ComparisonReport, JobStatus } from "../types.js";
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

export class EvalView {
  readonly root: HTMLElement;
  private readonly statusEl: HTMLElement;
  private readonly chartsEl: HTMLElement;
  private readonly datasetInput: HTMLInputElement;
  private readonly modelsInput: HTMLInputElement;
  private readonly strategyBoxes = new Map<string, HTMLInputElement>();
  private readonly runButton: HTMLButtonElement;

  constructor(private readonly api: ApiClient) {
    this.root = el("div", "eval-view");

    const form = el("div", "eval-form");

    const datasetRow = el("div", "form-row");
    datasetRow.appendChild(el("label", undefined, "dataset path (on the server)"));
    this.datasetInput = el("input");
    this.datasetInput.placeholder = "/path/to/dataset.jsonl";
    datasetRow.appendChild(this.datasetInput);
    form.appendChild(datasetRow);

    const strategyRow = el("div", "form-row");
    strategyRow.appendChild(el("label", undefined, "strategies"));
    for (const strategy of STRATEGIES) {
      const wrap = el("span", "checkbox");
      const box = el("input");
      box.type = "checkbox";
      box.checked = strategy !== "none";
      this.strategyBoxes.set(strategy, box);
      wrap.appendChild(box);
      wrap.appendChild(el("span", undefined, strategy));
      strategyRow.appendChild(wrap);
    }
    form.appendChild(strategyRow);

    const modelsRow = el("div", "form-row");
    modelsRow.appendChild(el("label", undefined, "models (comma separated, blank = default)"));
    this.modelsInput = el("input");
    modelsRow.appendChild(this.modelsInput);
    form.appendChild(modelsRow);

    this.runButton = el("button", undefined, "run comparison");
    this.runButton.addEventListener("click", () => void this.run());
    form.appendChild(this.runButton);
    this.root.appendChild(form);

    this.statusEl = el("div", "eval-status");
    this.root.appendChild(this.statusEl);

    this.chartsEl = el("div", "charts");
    this.root.appendChild(this.chartsEl);
  }

  private async run(): Promise<void> {
    const strategies = [...this.strategyBoxes.entries()]
      .filter(([, box]) => box.checked)
      .map(([name]) => name);
    const dataset = this.datasetInput.value.trim();
    const models = this.modelsInput.value
      .split(",")
      .map((m) => m.trim())
      .filter((m) => m !== "");
    if (strategies.length === 0) {
      this.setStatus("pick at least one strategy", "error");
      return;
    }
    if (dataset === "") {
      this.setStatus("a dataset path is required", "error");
      return;
    }

    this.runButton.disabled = true;
    this.chartsEl.replaceChildren();
    try {
      const job = await this.api.startCompare({
        dataset_path: dataset,
        strategies,
        models: models.length > 0 ? models : undefined,
      });
      this.setStatus(`job ${job.job_id}: ${job.status}`, "progress");
      const settled = await this.api.pollJob(job.job_id, (status: JobStatus) => {
        this.setStatus(`job ${status.job_id}: ${status.status}`, "progress");
      });
      if (settled.status === "error") {
        this.setStatus(`job failed: ${settled.error ?? "unknown error"}`, "error");
        return;
      }
      this.setStatus(`job ${settled.job_id}: done`, "ok");
      this.renderReport(settled.result as ComparisonReport);
    } catch (error) {
      // a 500 carries a correlation id in its message for the server logs
      const message =
        error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
      this.setStatus(message, "error");
    } finally {
      this.runButton.disabled = false;
    }
  }

  private setStatus(text: string, tone: "progress" | "ok" | "error"): void {
    this.statusEl.textContent = text;
    this.statusEl.className = `eval-status status-${tone}`;
  }

  renderReport(report: ComparisonReport): void {
    this.chartsEl.replaceChildren();
    const header = el(
      "p",
      "report-meta",
      `${report.cells.length} cells over ${report.dataset_size} samples`,
    );
    this.chartsEl.appendChild(header);
    for (const model of [retrievalChart(report), answerChart(report), judgeChart(report)]) {
      const holder = el("div", "chart");
      holder.innerHTML = renderBarChartSvg(model);
      this.chartsEl.appendChild(holder);
    }
  }
}
