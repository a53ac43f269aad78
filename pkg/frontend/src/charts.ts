// SVG chart builders. Each chart's viewBox vertical axis is the value axis,
// so a bar's height attribute is the report value verbatim; CSS stretches the
// drawing, never the numbers.

import { escapeHtml, emptyState } from "./render.js";
import { JUDGE_DIMENSIONS } from "./types.js";
import type { AccuracyScores, JudgeReport, JustificationStat, MetricReport } from "./types.js";

export interface Bar {
  label: string;
  value: number | null;
}

export interface Series {
  label: string;
  values: (number | null)[];
}

const METRIC_ORDER = [
  "flesch_reading_ease",
  "type_token_ratio",
  "embedding_coherence",
  "perplexity",
];

const METRIC_LABELS: Record<string, string> = {
  flesch_reading_ease: "Flesch reading ease",
  type_token_ratio: "type-token ratio",
  embedding_coherence: "embedding coherence",
  perplexity: "perplexity",
};

function fmtPercent(value: number): string {
  return `${(100 * value).toFixed(2)}%`;
}

function fmtNumber(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(2);
}

/** Smallest round axis limit that contains the value. */
export function niceMax(values: (number | null)[]): number {
  const top = Math.max(...values.map((v) => (v === null ? 0 : v)), 0);
  if (top <= 0) return 1;
  for (const limit of [0.1, 0.25, 0.5, 1, 2, 5, 10, 25, 50, 100, 150, 200, 500, 1000]) {
    if (top <= limit) return limit;
  }
  return Math.pow(10, Math.ceil(Math.log10(top)));
}

export function barChart(
  bars: Bar[],
  options: { title: string; max?: number; format?: (value: number) => string },
): string {
  const max = options.max ?? niceMax(bars.map((bar) => bar.value));
  const format = options.format ?? fmtNumber;
  const columns = bars
    .map((bar) => {
      let body = "";
      let valueText = "n/a";
      if (bar.value !== null && Number.isFinite(bar.value)) {
        // Negative values draw as an empty column; the caption keeps the number.
        const drawn = Math.max(0, Math.min(bar.value, max));
        body =
          `<rect x="0.15" width="0.7" y="${max - drawn}" height="${drawn}" ` +
          `data-value="${bar.value}"></rect>`;
        valueText = format(bar.value);
      }
      return `<div class="bar">
  <svg class="bar-svg" viewBox="0 0 1 ${max}" preserveAspectRatio="none" role="img" aria-label="${escapeHtml(bar.label)}: ${valueText}">${body}</svg>
  <span class="bar-value">${valueText}</span>
  <span class="bar-label">${escapeHtml(bar.label)}</span>
</div>`;
    })
    .join("");
  return `<figure class="chart bar-chart">
<figcaption>${escapeHtml(options.title)}</figcaption>
<div class="bars">${columns}</div>
</figure>`;
}

export function lineChart(series: Series[], options: { title: string; max?: number }): string {
  const length = Math.max(...series.map((s) => s.values.length), 1);
  const max = options.max ?? niceMax(series.flatMap((s) => s.values));
  const width = Math.max(length - 1, 1);
  const shapes = series
    .map((s, index) => {
      const points: string[] = [];
      const dots: string[] = [];
      s.values.forEach((value, i) => {
        if (value === null || !Number.isFinite(value)) return;
        const x = length === 1 ? width / 2 : i;
        points.push(`${x},${max - value}`);
        // Zero-length stroke with round caps: a point marker that survives
        // the non-uniform viewBox scaling.
        dots.push(
          `<path class="pt" d="M ${x},${max - value} h 0" data-value="${value}" ` +
            `vector-effect="non-scaling-stroke"></path>`,
        );
      });
      const line =
        points.length >= 2
          ? `<polyline class="line" points="${points.join(" ")}" ` +
            `vector-effect="non-scaling-stroke"></polyline>`
          : "";
      const values = s.values.map((v) => (v === null ? "" : String(v))).join(",");
      return `<g class="series series-${index}" data-label="${escapeHtml(s.label)}" data-values="${values}">${line}${dots.join("")}</g>`;
    })
    .join("");
  const legend = series
    .map(
      (s, index) =>
        `<span class="legend-item legend-${index}">${escapeHtml(s.label)}</span>`,
    )
    .join("");
  return `<figure class="chart line-chart">
<figcaption>${escapeHtml(options.title)}</figcaption>
<svg class="line-svg" viewBox="0 0 ${width} ${max}" preserveAspectRatio="none">${shapes}</svg>
<div class="legend">${legend}</div>
</figure>`;
}

export function accuracyChart(level: string, scores: AccuracyScores, passK: number): string {
  return barChart(
    [
      { label: "top-1", value: scores.top1 },
      { label: "top-2", value: scores.top2 },
      { label: `pass@${passK}`, value: scores.pass_at_k },
    ],
    { title: `${level} accuracy`, max: 1, format: fmtPercent },
  );
}

export function justificationChart(stats: Record<string, JustificationStat>): string {
  const keys = METRIC_ORDER.filter((key) => key in stats).concat(
    Object.keys(stats).filter((key) => !METRIC_ORDER.includes(key)).sort(),
  );
  const charts = keys
    .map((key) => {
      const stat = stats[key];
      const label = METRIC_LABELS[key] ?? key;
      return barChart([{ label: `${label} (${stat.scored} scored)`, value: stat.mean }], {
        title: label,
      });
    })
    .join("");
  return `<div class="chart-row">${charts}</div>`;
}

function detailTable(report: MetricReport): string {
  const rows = report.details
    .map((row) => {
      const errors = row.errors.length
        ? `<span class="detail-errors">${escapeHtml(row.errors.join("; "))}</span>`
        : "";
      return `<tr class="detail-${escapeHtml(row.status)}">
<td>${escapeHtml(row.report_id)}</td><td>${escapeHtml(row.true_group)}</td>
<td>${escapeHtml(row.true_nation)}</td><td>${escapeHtml(row.status)}${errors}</td></tr>`;
    })
    .join("");
  return `<table class="detail-table">
<thead><tr><th>record</th><th>true group</th><th>true nation</th><th>status</th></tr></thead>
<tbody>${rows}</tbody>
</table>`;
}

function metricLines(report: MetricReport): string {
  const keys = METRIC_ORDER.filter((key) =>
    report.details.some((row) => row.metrics[key] !== null && row.metrics[key] !== undefined),
  );
  if (keys.length === 0) return "";
  const charts = keys
    .map((key) =>
      lineChart(
        [
          {
            label: METRIC_LABELS[key] ?? key,
            values: report.details.map((row) => row.metrics[key] ?? null),
          },
        ],
        { title: `${METRIC_LABELS[key] ?? key} per record` },
      ),
    )
    .join("");
  return `<section class="dash-section">
<h3>justification metrics per record</h3>
<div class="chart-row">${charts}</div>
</section>`;
}

export function renderDashboard(report: MetricReport): string {
  if (report.n_records === 0) {
    return emptyState("The report contains no records.");
  }
  const head =
    `<div class="dash-head">records: ${report.n_records} &middot; ` +
    `generations: ${report.n_generations} &middot; pass rank: ${report.pass_rank}</div>`;
  return `${head}
<section class="dash-section dash-accuracy">
<h3>attribution accuracy</h3>
<div class="chart-row">${accuracyChart("group", report.accuracy.group, report.pass_k)}
${accuracyChart("nation", report.accuracy.nation, report.pass_k)}</div>
</section>
<section class="dash-section dash-justification">
<h3>justification quality (means)</h3>
${justificationChart(report.justification)}
</section>
${metricLines(report)}
<section class="dash-section dash-details">
<h3>records</h3>
${detailTable(report)}
</section>`;
}

export function renderJudgePanel(judge: JudgeReport): string {
  if (judge.per_item.length === 0) {
    return emptyState("No judged justifications.");
  }
  const dimensions = JUDGE_DIMENSIONS.filter((dim) =>
    judge.per_item.some((item) => dim in item),
  );
  const series = dimensions.map((dim) => ({
    label: dim,
    values: judge.per_item.map((item) => (dim in item ? item[dim] : null)),
  }));
  const means = dimensions
    .map((dim) => {
      const mean = judge.means[dim];
      const text = mean === undefined ? "n/a" : fmtNumber(mean);
      return `<span class="judge-mean">${dim}: <strong>${text}</strong></span>`;
    })
    .join(" ");
  return `<section class="dash-section dash-judge">
<h3>judge scores</h3>
${lineChart(series, { title: "judge scores per item", max: 10 })}
<div class="judge-means">${means}</div>
</section>`;
}
