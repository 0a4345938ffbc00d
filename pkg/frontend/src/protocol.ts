// Wire protocol of the decode service: JSON text messages over one WebSocket.
// Field names mirror the service schemas exactly.

export interface TickMsg {
  type: "tick";
  seq: number;
  t: number;
  labels: number[];
  forces: number[];
  angles: number[];
  target?: number;
}

export interface SessionMetrics {
  rmse: number | null;
  mape: number | null;
  r2: number | null;
}

export interface SessionResultMsg {
  type: "session_result";
  metrics: SessionMetrics;
  n_ticks: number;
  finger: string;
  freq: number;
}

export interface AckMsg {
  type: "ack";
  of: string;
}

export interface ErrorMsg {
  type: "error";
  category: string;
  message: string;
}

export type ServerMsg = TickMsg | SessionResultMsg | AckMsg | ErrorMsg;

export const FINGER_NAMES = ["little", "ring", "middle", "index", "thumb"] as const;

export function parseServerMsg(raw: string): ServerMsg | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null || !("type" in doc)) return null;
  const msg = doc as { type: string };
  switch (msg.type) {
    case "tick": {
      const t = doc as TickMsg;
      if (!Array.isArray(t.labels) || t.labels.length !== 5) return null;
      return t;
    }
    case "session_result":
      return doc as SessionResultMsg;
    case "ack":
      return doc as AckMsg;
    case "error":
      return doc as ErrorMsg;
    default:
      return null;
  }
}

export function setActivation(values: number[]): string {
  return JSON.stringify({ type: "set_activation", values });
}

export function setGains(kAlpha: number, kF: number): string {
  return JSON.stringify({ type: "set_gains", k_alpha: kAlpha, k_F: kF });
}

export function startSession(freq: number, finger: string): string {
  return JSON.stringify({ type: "session", action: "start", mode: "sine", freq, finger });
}

export function stopSession(): string {
  return JSON.stringify({ type: "session", action: "stop" });
}

export function loadModel(path: string): string {
  return JSON.stringify({ type: "load_model", path });
}
