/**
 * Sweep chart (accuracy vs intervention ratio) and its CSV export.
 *
 * Geometry is computed as plain data so tests can check it without a DOM;
 * the renderer emits a standalone SVG. The CSV is a long-format table with
 * one row per (ratio, seed) pair, matching the server's sweep JSON exactly.
 */

import type { SweepTable } from "./api.js";

export interface ChartGeometry {
  width: number;
  height: number;
  xOf: (ratio: number) => number;
  yOf: (accuracy: number) => number;
  xDomain: [number, number];
  yDomain: [number, number];
}

export function sweepToCsv(table: SweepTable): string {
  const lines = ["ratio,seed,accuracy"];
  for (let i = 0; i < table.ratios.length; i++) {
    for (let j = 0; j < table.seeds.length; j++) {
      lines.push(`${table.ratios[i]},${table.seeds[j]},${table.accuracy_per_seed[j][i]}`);
    }
  }
  return lines.join("\n") + "\n";
}

/** Arithmetic mean of the per-seed points at ratio index i (client check). */
export function seedMeanAt(table: SweepTable, i: number): number {
  const vals = table.accuracy_per_seed.map((row) => row[i]);
  return vals.reduce((a, b) => a + b, 0) / vals.length;
}

export function chartGeometry(
  table: SweepTable,
  width = 560,
  height = 280,
  pad = 40,
): ChartGeometry {
  const xDomain: [number, number] = [
    Math.min(...table.ratios),
    Math.max(...table.ratios),
  ];
  const all = table.accuracy_per_seed.flat();
  const lo = Math.min(...all);
  const yDomain: [number, number] = [Math.max(0, lo - 0.05), 1.0];
  const xSpan = xDomain[1] - xDomain[0] || 1;
  const ySpan = yDomain[1] - yDomain[0] || 1;
  return {
    width,
    height,
    xDomain,
    yDomain,
    xOf: (r) => pad + ((r - xDomain[0]) / xSpan) * (width - 2 * pad),
    yOf: (a) => height - pad - ((a - yDomain[0]) / ySpan) * (height - 2 * pad),
  };
}

const SVG_NS = "http://www.w3.org/2000/svg";

function line(x1: number, y1: number, x2: number, y2: number, stroke: string, w = 1): SVGElement {
  const el = document.createElementNS(SVG_NS, "line");
  el.setAttribute("x1", String(x1));
  el.setAttribute("y1", String(y1));
  el.setAttribute("x2", String(x2));
  el.setAttribute("y2", String(y2));
  el.setAttribute("stroke", stroke);
  el.setAttribute("stroke-width", String(w));
  return el;
}

function text(x: number, y: number, content: string, anchor = "middle"): SVGElement {
  const el = document.createElementNS(SVG_NS, "text");
  el.setAttribute("x", String(x));
  el.setAttribute("y", String(y));
  el.setAttribute("text-anchor", anchor);
  el.setAttribute("class", "chart-label");
  el.textContent = content;
  return el;
}

export function renderSweepChart(container: HTMLElement, table: SweepTable): SVGSVGElement {
  const geo = chartGeometry(table);
  const svg = document.createElementNS(SVG_NS, "svg") as SVGSVGElement;
  svg.setAttribute("viewBox", `0 0 ${geo.width} ${geo.height}`);
  svg.setAttribute("class", "sweep-chart");

  // axes
  svg.appendChild(line(geo.xOf(geo.xDomain[0]), geo.yOf(geo.yDomain[0]),
    geo.xOf(geo.xDomain[1]), geo.yOf(geo.yDomain[0]), "#888"));
  svg.appendChild(line(geo.xOf(geo.xDomain[0]), geo.yOf(geo.yDomain[0]),
    geo.xOf(geo.xDomain[0]), geo.yOf(geo.yDomain[1]), "#888"));
  for (const r of table.ratios) {
    svg.appendChild(text(geo.xOf(r), geo.height - 12, r.toFixed(2)));
  }
  svg.appendChild(text(16, geo.yOf(geo.yDomain[1]), geo.yDomain[1].toFixed(2), "start"));
  svg.appendChild(text(16, geo.yOf(geo.yDomain[0]), geo.yDomain[0].toFixed(2), "start"));

  // per-seed points
  table.accuracy_per_seed.forEach((row, j) => {
    row.forEach((acc, i) => {
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(geo.xOf(table.ratios[i])));
      dot.setAttribute("cy", String(geo.yOf(acc)));
      dot.setAttribute("r", "3");
      dot.setAttribute("class", `seed-point seed-${table.seeds[j]}`);
      dot.setAttribute("fill", "#5b8dd9");
      dot.setAttribute("opacity", "0.7");
      svg.appendChild(dot);
    });
  });

  // mean line (server-computed means)
  const path = document.createElementNS(SVG_NS, "path");
  const points = table.ratios.map(
    (r, i) => `${i === 0 ? "M" : "L"}${geo.xOf(r)},${geo.yOf(table.mean[i])}`,
  );
  path.setAttribute("d", points.join(" "));
  path.setAttribute("fill", "none");
  path.setAttribute("stroke", "#d9534f");
  path.setAttribute("stroke-width", "2");
  path.setAttribute("class", "mean-line");
  svg.appendChild(path);

  container.replaceChildren(svg);
  return svg;
}

export function csvDownloadHref(csv: string): string {
  return `data:text/csv;charset=utf-8,${encodeURIComponent(csv)}`;
}
