/**
 * Pure transforms from comparison reports to grouped bar charts.
 *
 * Everything here is data-in data-out: report -> chart model -> SVG string.
 * No DOM access, so the whole path from fixture to displayed value can be
 * exercised in tests. Bar labels show a short reading; every bar also
 * carries the exact value, which round-trips through String() unchanged
 * and is embedded in the SVG as the bar's tooltip.
 */

import type { ComparisonCell, ComparisonReport } from "./types.js";

export interface Bar {
  series: string;
  /** Exact mean from the report; null when the metric was absent. */
  value: number | null;
  /** Short on-chart label, 4 decimal places. */
  display: string;
  /** Lossless label: String(value) round-trips to the identical number. */
  exact: string;
}

export interface BarGroup {
  label: string;
  bars: Bar[];
}

export interface ChartModel {
  title: string;
  groups: BarGroup[];
  series: string[];
  /** Top of the value axis; 1 for unit-interval metrics, 10 for ratings. */
  axisMax: number;
}

export const RETRIEVAL_METRICS = ["context_precision", "context_recall"] as const;
export const ANSWER_METRICS = [
  "answer_similarity",
  "answer_correctness",
  "faithfulness",
  "answer_relevance",
] as const;

export function formatMetric(mean: number | null): string {
  return mean === null ? "-" : mean.toFixed(4);
}

export function exactLabel(mean: number | null): string {
  return mean === null ? "absent" : String(mean);
}

function cellLabel(cell: ComparisonCell, models: string[]): string {
  return models.length > 1 ? `${cell.strategy}/${cell.model}` : cell.strategy;
}

function distinctModels(report: ComparisonReport): string[] {
  const models: string[] = [];
  for (const cell of report.cells) {
    if (!models.includes(cell.model)) {
      models.push(cell.model);
    }
  }
  return models;
}

function barFor(cell: ComparisonCell, metric: string): Bar {
  const aggregate = cell.aggregates[metric];
  const mean = aggregate === undefined ? null : aggregate.mean;
  return {
    series: metric,
    value: mean,
    display: formatMetric(mean),
    exact: exactLabel(mean),
  };
}

/** One group per report cell with the given metrics as bars. */
export function metricChart(
  report: ComparisonReport,
  metrics: readonly string[],
  title: string,
  axisMax = 1,
): ChartModel {
  const models = distinctModels(report);
  return {
    title,
    series: [...metrics],
    axisMax,
    groups: report.cells.map((cell) => ({
      label: cellLabel(cell, models),
      bars: metrics.map((metric) => barFor(cell, metric)),
    })),
  };
}

export function retrievalChart(report: ComparisonReport): ChartModel {
  return metricChart(report, RETRIEVAL_METRICS, "Retrieval quality by strategy");
}

export function answerChart(report: ComparisonReport): ChartModel {
  return metricChart(report, ANSWER_METRICS, "Answer quality by strategy");
}

/** Judge ratings grouped per model, one bar per strategy. Ratings span 1-10. */
export function judgeChart(report: ComparisonReport): ChartModel {
  const strategies: string[] = [];
  for (const cell of report.cells) {
    if (!strategies.includes(cell.strategy)) {
      strategies.push(cell.strategy);
    }
  }
  const groups: BarGroup[] = distinctModels(report).map((model) => ({
    label: model,
    bars: report.cells
      .filter((cell) => cell.model === model)
      .map((cell) => ({ ...barFor(cell, "judge_rating"), series: cell.strategy })),
  }));
  return { title: "Judge rating by model", series: strategies, axisMax: 10, groups };
}

export interface BarRect {
  x: number;
  y: number;
  width: number;
  height: number;
  bar: Bar;
}

export interface GroupLayout {
  label: string;
  x: number;
  width: number;
  bars: BarRect[];
}

export interface ChartLayout {
  width: number;
  height: number;
  plot: { x: number; y: number; width: number; height: number };
  groups: GroupLayout[];
  ticks: Array<{ value: number; y: number }>;
}

export interface LayoutOptions {
  width?: number;
  height?: number;
}

const MARGIN = { top: 28, right: 12, bottom: 34, left: 44 };

/**
 * Compute bar geometry for a chart model.
 *
 * Bars are laid out left to right in group order; a null value yields a
 * zero-height bar so the slot stays visible. All coordinates are finite
 * and bars never extend outside the plot area.
 */
export function barLayout(model: ChartModel, options: LayoutOptions = {}): ChartLayout {
  const width = options.width ?? 560;
  const height = options.height ?? 300;
  const plot = {
    x: MARGIN.left,
    y: MARGIN.top,
    width: width - MARGIN.left - MARGIN.right,
    height: height - MARGIN.top - MARGIN.bottom,
  };
  const nGroups = Math.max(model.groups.length, 1);
  const groupWidth = plot.width / nGroups;
  const barPad = 0.15; // fraction of group width kept clear on each side

  const groups: GroupLayout[] = model.groups.map((group, gi) => {
    const gx = plot.x + gi * groupWidth;
    const inner = groupWidth * (1 - 2 * barPad);
    const nBars = Math.max(group.bars.length, 1);
    const barWidth = inner / nBars;
    const bars: BarRect[] = group.bars.map((bar, bi) => {
      const value = bar.value ?? 0;
      const h = (Math.min(Math.max(value, 0), model.axisMax) / model.axisMax) * plot.height;
      return {
        x: gx + groupWidth * barPad + bi * barWidth,
        y: plot.y + plot.height - h,
        width: barWidth,
        height: h,
        bar,
      };
    });
    return { label: group.label, x: gx, width: groupWidth, bars };
  });

  const nTicks = 5;
  const ticks = Array.from({ length: nTicks + 1 }, (_, i) => {
    const value = (model.axisMax * i) / nTicks;
    return { value, y: plot.y + plot.height - (value / model.axisMax) * plot.height };
  });

  return { width, height, plot, groups, ticks };
}

const SERIES_COLORS = ["#4472c4", "#ed7d31", "#a5a5a5", "#ffc000", "#5b9bd5", "#70ad47"];

export function seriesColor(model: ChartModel, series: string): string {
  const index = model.series.indexOf(series);
  return SERIES_COLORS[(index < 0 ? 0 : index) % SERIES_COLORS.length] ?? "#4472c4";
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/**
 * Render a chart model to an SVG string.
 *
 * Each bar carries its short label above the bar and the exact value in a
 * <title> tooltip, so nothing displayed ever disagrees with the report.
 */
export function renderBarChartSvg(model: ChartModel, options: LayoutOptions = {}): string {
  const layout = barLayout(model, options);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${layout.width} ${layout.height}" ` +
      `class="bar-chart" role="img" aria-label="${escapeXml(model.title)}">`,
  );
  parts.push(
    `<text x="${layout.width / 2}" y="16" text-anchor="middle" class="chart-title">` +
      `${escapeXml(model.title)}</text>`,
  );
  for (const tick of layout.ticks) {
    parts.push(
      `<line x1="${layout.plot.x}" y1="${tick.y}" x2="${layout.plot.x + layout.plot.width}" ` +
        `y2="${tick.y}" class="grid-line"/>`,
    );
    parts.push(
      `<text x="${layout.plot.x - 6}" y="${tick.y + 3}" text-anchor="end" class="tick-label">` +
        `${escapeXml(String(tick.value))}</text>`,
    );
  }
  for (const group of layout.groups) {
    for (const rect of group.bars) {
      const color = seriesColor(model, rect.bar.series);
      parts.push(
        `<rect x="${rect.x}" y="${rect.y}" width="${rect.width}" height="${rect.height}" ` +
          `fill="${color}" data-series="${escapeXml(rect.bar.series)}" ` +
          `data-exact="${escapeXml(rect.bar.exact)}">` +
          `<title>${escapeXml(`${rect.bar.series}: ${rect.bar.exact}`)}</title></rect>`,
      );
      parts.push(
        `<text x="${rect.x + rect.width / 2}" y="${rect.y - 3}" text-anchor="middle" ` +
          `class="bar-label">${escapeXml(rect.bar.display)}</text>`,
      );
    }
    parts.push(
      `<text x="${group.x + group.width / 2}" y="${layout.height - 14}" text-anchor="middle" ` +
        `class="group-label">${escapeXml(group.label)}</text>`,
    );
  }
  let legendX = layout.plot.x;
  const legendY = layout.height - 2;
  for (const series of model.series) {
    parts.push(
      `<rect x="${legendX}" y="${legendY - 8}" width="9" height="9" ` +
        `fill="${seriesColor(model, series)}"/>`,
    );
    parts.push(
      `<text x="${legendX + 12}" y="${legendY}" class="legend-label">${escapeXml(series)}</text>`,
    );
    legendX += 12 + series.length * 7 + 16;
  }
  parts.push("</svg>");
  return parts.join("");
}
