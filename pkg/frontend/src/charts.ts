// Minimal dependency-free polyline charts for the rolling metric buffers.

import type { MetricPoint } from './types.js';

export interface ChartStyle {
  width: number;
  height: number;
  color: string;
}

const DEFAULT_STYLE: ChartStyle = { width: 320, height: 90, color: '#2b7' };

/** Draw one metric series as a polyline on its canvas (axes at 0 and 1). */
export function drawSeries(
  canvas: HTMLCanvasElement,
  points: MetricPoint[],
  style: Partial<ChartStyle> = {},
): void {
  const { width, height, color } = { ...DEFAULT_STYLE, ...style };
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = '#ccc';
  ctx.lineWidth = 1;
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);
  if (points.length === 0) return;
  const first = points[0].episode;
  const last = points[points.length - 1].episode;
  const span = Math.max(last - first, 1);
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  points.forEach((p, i) => {
    const x = ((p.episode - first) / span) * (width - 8) + 4;
    const y = height - 4 - Math.min(Math.max(p.value, 0), 1) * (height - 8);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

/** Latest value of a series formatted for the chart caption. */
export function latestLabel(points: MetricPoint[]): string {
  if (points.length === 0) return '-';
  return points[points.length - 1].value.toFixed(3);
}
