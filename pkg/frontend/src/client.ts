// Websocket session management: connect, forward frames to the view model,
// surface disconnects, expose a reconnect trigger and a health poll.

import { ViewModel } from "./viewmodel.js";

export class TeleopClient {
  private ws: WebSocket | null = null;
  readonly vm: ViewModel;
  private readonly url: string;

  constructor(url: string, vm: ViewModel) {
    this.url = url;
    this.vm = vm;
  }

  connect(): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) return;
    this.vm.connection = "connecting";
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.vm.connection = "connected";
    };
    ws.onmessage = (event) => {
      this.vm.ingest(String(event.data), performance.now());
    };
    ws.onclose = () => {
      this.vm.connection = "disconnected";
    };
    ws.onerror = () => {
      this.vm.connection = "disconnected";
    };
  }

  send(text: string): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(text);
      return true;
    }
    return false;
  }

  get connected(): boolean {
    return this.ws !== null && this.ws.readyState === WebSocket.OPEN;
  }
}

export async function pollHealth(baseUrl: string): Promise<{ tick: number; clients: number } | null> {
  try {
    const resp = await fetch(`${baseUrl}/health`);
    if (!resp.ok) return null;
    return (await resp.json()) as { tick: number; clients: number };
  } catch {
    return null;
  }
}
