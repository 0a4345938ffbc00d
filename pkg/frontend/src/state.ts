// Console state: everything the views render. The UI computes no metrics
// of its own; every displayed number originates from service telemetry.

import type { ServerMsg, SessionMetrics, SessionResultMsg, TickMsg } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface ChartPoint {
  t: number;
  decoded: number;
  target?: number;
}

const BUFFER_SECONDS = 60;

export class ConsoleState {
  connection: ConnectionStatus = "disconnected";
  lastTick: TickMsg | null = null;
  lastError: string | null = null;
  selectedFinger = 3; // index finger
  sessionActive = false;
  lastResult: SessionResultMsg | null = null;
  seqGaps = 0;
  ticksSeen = 0;
  /** rolling per-tick points for the selected finger, pruned to 60 s */
  points: ChartPoint[] = [];
  /** all in-session ticks, kept for the downloadable session record */
  sessionTicks: TickMsg[] = [];

  private lastSeq: number | null = null;

  apply(msg: ServerMsg): void {
    switch (msg.type) {
      case "tick":
        this.applyTick(msg);
        break;
      case "session_result":
        this.lastResult = msg;
        this.sessionActive = false;
        break;
      case "error":
        this.lastError = `${msg.category}: ${msg.message}`;
        break;
      case "ack":
        break;
    }
  }

  private applyTick(tick: TickMsg): void {
    this.lastTick = tick;
    this.ticksSeen += 1;
    if (this.lastSeq !== null && tick.seq > this.lastSeq + 1) {
      this.seqGaps += tick.seq - this.lastSeq - 1;
    }
    this.lastSeq = tick.seq;
    if (tick.target !== undefined) {
      if (!this.sessionActive) this.sessionTicks = [];
      this.sessionActive = true;
      this.sessionTicks.push(tick);
    }
    this.points.push({
      t: tick.t,
      decoded: tick.labels[this.selectedFinger],
      target: tick.target,
    });
    const cutoff = tick.t - BUFFER_SECONDS;
    while (this.points.length && this.points[0].t < cutoff) {
      this.points.shift();
    }
  }

  /** Reset per-connection counters; service-side state survives reconnects. */
  onReconnect(): void {
    this.lastSeq = null;
  }

  selectFinger(j: number): void {
    this.selectedFinger = j;
    this.points = [];
  }

  /** Session record for download: service metrics verbatim plus the
   * telemetry series they were computed from. */
  sessionRecord(): string {
    return JSON.stringify(
      {
        result: this.lastResult,
        ticks: this.sessionTicks.map((t) => ({
          t: t.t,
          target: t.target,
          decoded: t.labels,
        })),
      },
      null,
      1,
    );
  }
}

/** Exact display formatting for the metrics panel: service values verbatim. */
export function formatMetric(value: number | null | undefined): string {
  if (value === null || value === undefined || !isFinite(value)) return "n/a";
  return value.toFixed(4);
}

export function metricsPanelText(metrics: SessionMetrics | null): string {
  if (metrics === null) return "no session yet";
  return (
    `RMSE ${formatMetric(metrics.rmse)}  ` +
    `MAPE ${formatMetric(metrics.mape)}  ` +
    `R² ${formatMetric(metrics.r2)}`
  );
}
