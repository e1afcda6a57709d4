// Event-stream connection with automatic reconnect.  The server replays its
// buffered events on every (re)connect; the store drops already-seen ids, so
// reconnects leave no gaps and no duplicates.

import type { SessionEvent } from './types.js';

export interface EventSocketHandlers {
  onEvent: (event: SessionEvent) => void;
  onStatus: (status: 'connecting' | 'open' | 'closed') => void;
}

export class EventSocket {
  private socket: WebSocket | null = null;
  private closed = false;
  private retryMs = 250;

  constructor(
    private url: string,
    private handlers: EventSocketHandlers,
  ) {}

  connect(): void {
    if (this.closed) return;
    this.handlers.onStatus('connecting');
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.retryMs = 250;
      this.handlers.onStatus('open');
    };
    socket.onmessage = (msg: MessageEvent) => {
      try {
        this.handlers.onEvent(JSON.parse(String(msg.data)) as SessionEvent);
      } catch {
        // a malformed frame must not kill the console
      }
    };
    socket.onclose = () => {
      this.handlers.onStatus('closed');
      if (!this.closed) {
        setTimeout(() => this.connect(), this.retryMs);
        this.retryMs = Math.min(this.retryMs * 2, 5000);
      }
    };
    socket.onerror = () => {
      socket.close();
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
