/** Broker channel client: one websocket, auto-reconnect, typed callbacks.
 *
 * The WebSocket implementation is injectable so the same client runs in the
 * browser (native) and under node tests (the `ws` package).
 */

import { ClientMessage, parseServerMessage, ServerMessage } from "./protocol";

// the handler parameter types are loose on purpose: both the DOM WebSocket
// and the node `ws` client must satisfy this shape
export interface SocketLike {
  send(data: string): void;
  close(): void;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientHandlers {
  onMessage(msg: ServerMessage): void;
  onStatus(status: "connecting" | "open" | "closed"): void;
}

export class BrokerClient {
  private socket: SocketLike | null = null;
  private closed = false;
  private retryMs = 500;

  constructor(
    private url: string,
    private handlers: ClientHandlers,
    private factory: SocketFactory,
  ) {}

  connect(): void {
    this.closed = false;
    this.handlers.onStatus("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.retryMs = 500;
      this.handlers.onStatus("open");
    };
    socket.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg) this.handlers.onMessage(msg);
    };
    socket.onclose = () => {
      this.handlers.onStatus("closed");
      if (!this.closed) {
        setTimeout(() => this.connect(), this.retryMs);
        this.retryMs = Math.min(this.retryMs * 2, 10_000);
      }
    };
    socket.onerror = () => socket.close();
  }

  send(msg: ClientMessage): void {
    this.socket?.send(JSON.stringify(msg));
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
