// WebSocket client with reconnect-and-backoff and rate-limited controls.
// The socket constructor is injected so tests can run without a network.

import { parseServerMsg, setActivation, type ServerMsg } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientHandlers {
  onMessage: (msg: ServerMsg) => void;
  onStatus: (status: "connecting" | "connected" | "disconnected") => void;
}

export interface ClientOptions {
  /** minimum gap between set_activation sends; last write wins */
  controlIntervalMs?: number;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
}

export class ConsoleClient {
  private socket: SocketLike | null = null;
  private isOpen = false;
  private attempts = 0;
  private closed = false;
  private pendingActivation: number[] | null = null;
  private activationTimer: ReturnType<typeof setTimeout> | null = null;
  private lastActivationSent = -Infinity;
  private readonly controlIntervalMs: number;
  private readonly backoffBaseMs: number;
  private readonly backoffMaxMs: number;

  constructor(
    private readonly url: string,
    private readonly handlers: ClientHandlers,
    private readonly factory: SocketFactory = (u) =>
      new WebSocket(u) as unknown as SocketLike,
    opts: ClientOptions = {},
  ) {
    this.controlIntervalMs = opts.controlIntervalMs ?? 50;
    this.backoffBaseMs = opts.backoffBaseMs ?? 250;
    this.backoffMaxMs = opts.backoffMaxMs ?? 5000;
  }

  connect(): void {
    this.closed = false;
    this.open();
  }

  close(): void {
    this.closed = true;
    this.isOpen = false;
    this.dropPendingControls();
    this.socket?.close();
    this.socket = null;
  }

  get connected(): boolean {
    return this.isOpen;
  }

  /** Rate-limited, last-write-wins slider updates. */
  sendActivation(values: number[]): void {
    this.pendingActivation = values.slice();
    this.flushActivation();
  }

  /** Non-activation controls go out immediately. */
  sendControl(payload: string): boolean {
    if (!this.socket || !this.isOpen) return false;
    this.socket.send(payload);
    return true;
  }

  private flushActivation(): void {
    if (!this.socket || !this.isOpen || this.pendingActivation === null) return;
    const now = Date.now();
    const wait = this.lastActivationSent + this.controlIntervalMs - now;
    if (wait <= 0) {
      this.socket.send(setActivation(this.pendingActivation));
      this.pendingActivation = null;
      this.lastActivationSent = now;
    } else if (this.activationTimer === null) {
      this.activationTimer = setTimeout(() => {
        this.activationTimer = null;
        this.flushActivation();
      }, wait);
    }
  }

  private dropPendingControls(): void {
    // a stale slider value must never fire into a fresh connection
    this.pendingActivation = null;
    if (this.activationTimer !== null) {
      clearTimeout(this.activationTimer);
      this.activationTimer = null;
    }
  }

  private open(): void {
    this.handlers.onStatus(this.attempts === 0 ? "connecting" : "disconnected");
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.attempts = 0;
      this.isOpen = true;
      this.handlers.onStatus("connected");
    };
    sock.onmessage = (ev) => {
      const msg = parseServerMsg(ev.data);
      if (msg !== null) this.handlers.onMessage(msg);
    };
    sock.onerror = () => {
      /* onclose always follows */
    };
    sock.onclose = () => {
      if (this.socket !== sock) return;
      this.socket = null;
      this.isOpen = false;
      this.dropPendingControls();
      this.handlers.onStatus("disconnected");
      if (!this.closed) {
        const delay = Math.min(
          this.backoffBaseMs * 2 ** this.attempts,
          this.backoffMaxMs,
        );
        this.attempts += 1;
        setTimeout(() => {
          if (!this.closed) this.open();
        }, delay);
      }
    };
  }
}
