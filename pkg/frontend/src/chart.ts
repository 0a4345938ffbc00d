// Rolling strip chart: decoded label (solid) and sine target (dashed)
// for the selected finger, last 60 seconds, y in [-1.5, 1.5].

import type { ChartPoint } from "./state.js";

const Y_MIN = -1.5;
const Y_MAX = 1.5;
const WINDOW_S = 60;

export class TrackingChart {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
  }

  draw(points: ChartPoint[]): void {
    const { width: w, height: h } = this.canvas;
    const ctx = this.ctx;
    ctx.clearRect(0, 0, w, h);
    ctx.fillStyle = "#11151c";
    ctx.fillRect(0, 0, w, h);

    const y = (v: number) => h - ((v - Y_MIN) / (Y_MAX - Y_MIN)) * h;
    ctx.strokeStyle = "#2a3442";
    ctx.lineWidth = 1;
    for (const level of [-1, -0.5, 0, 0.5, 1]) {
      ctx.beginPath();
      ctx.moveTo(0, y(level));
      ctx.lineTo(w, y(level));
      ctx.stroke();
    }
    if (!points.length) return;

    const tEnd = points[points.length - 1].t;
    const x = (t: number) => w - ((tEnd - t) / WINDOW_S) * w;

    const trace = (
      pick: (p: ChartPoint) => number | undefined,
      style: string,
      dash: number[],
    ) => {
      ctx.strokeStyle = style;
      ctx.lineWidth = 1.5;
      ctx.setLineDash(dash);
      ctx.beginPath();
      let pen = false;
      for (const p of points) {
        const v = pick(p);
        if (v === undefined) {
          pen = false;
          continue;
        }
        if (pen) ctx.lineTo(x(p.t), y(v));
        else ctx.moveTo(x(p.t), y(v));
        pen = true;
      }
      ctx.stroke();
      ctx.setLineDash([]);
    };
    trace((p) => p.target, "#e0a437", [6, 4]);
    trace((p) => p.decoded, "#4fa3e3", []);
  }
}
