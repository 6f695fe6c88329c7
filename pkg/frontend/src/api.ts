/** Thin typed client for the v1 control API.
 *
 * Every console action is exactly one call here; there are no hidden
 * endpoints. The fetch implementation is injectable so tests can run
 * without a server.
 */

import type {
  FeedMessage,
  MetricsResponse,
  SessionResponse,
  SessionSpec,
  StreamInfo,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export type SendResult =
  | { outcome: "accepted"; label: string }
  | { outcome: "denied"; reason: string }
  | { outcome: "rejected"; reason: string };

export class ApiClient {
  private inFlight = new Set<string>();

  constructor(
    readonly base: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`);
    if (!response.ok) throw new Error(`GET ${path}: ${response.status}`);
    return (await response.json()) as T;
  }

  streams(): Promise<StreamInfo[]> {
    return this.getJson<StreamInfo[]>("/v1/streams");
  }

  metrics(): Promise<MetricsResponse> {
    return this.getJson<MetricsResponse>("/v1/metrics");
  }

  session(): Promise<SessionResponse> {
    return this.getJson<SessionResponse>("/v1/session");
  }

  async loadSession(spec: SessionSpec): Promise<SessionResponse> {
    const response = await this.fetchImpl(`${this.base}/v1/session`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    });
    if (!response.ok) {
      const body = await response.json().catch(() => ({ detail: response.status }));
      throw new Error(`session rejected: ${JSON.stringify(body.detail)}`);
    }
    return (await response.json()) as SessionResponse;
  }

  async transition(event: string): Promise<{ state: string }> {
    const response = await this.fetchImpl(`${this.base}/v1/session/transition`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ event }),
    });
    if (!response.ok) {
      const body = await response.json().catch(() => ({ detail: response.status }));
      throw new Error(`transition refused: ${body.detail}`);
    }
    return (await response.json()) as { state: string };
  }

  /** Send a Controller trigger/marker. The session must be Running, which
   * the caller checks client-side; the server enforces role authorization
   * and answers 403 with the linkage explanation on denial. A repeated
   * idempotency key while the first send is still in flight is dropped. */
  async sendControl(
    participantId: string,
    label: string,
    sessionState: string,
    idempotencyKey?: string,
  ): Promise<SendResult> {
    if (sessionState !== "Running") {
      return {
        outcome: "rejected",
        reason: `session is ${sessionState}, not Running`,
      };
    }
    const key = idempotencyKey ?? `${participantId}:${label}:${Date.now()}`;
    if (this.inFlight.has(key)) {
      return { outcome: "rejected", reason: "duplicate send in flight" };
    }
    this.inFlight.add(key);
    try {
      const response = await this.fetchImpl(`${this.base}/v1/event`, {
        method: "POST",
        headers: {
          "Content-Type": "application/json",
          "Idempotency-Key": key,
        },
        body: JSON.stringify({ participant_id: participantId, label }),
      });
      if (response.status === 403) {
        const body = await response.json();
        return { outcome: "denied", reason: String(body.detail) };
      }
      if (!response.ok) throw new Error(`POST /v1/event: ${response.status}`);
      return { outcome: "accepted", label };
    } finally {
      this.inFlight.delete(key);
    }
  }
}

/* -- server-sent event parsing --------------------------------------------- */

/** Incremental SSE parser: feed raw text, get completed messages back.
 * Keepalive comments and partial frames are held in the carry. */
export function parseSseChunk(
  carry: string,
  chunk: string,
): { carry: string; messages: FeedMessage[] } {
  const text = carry + chunk;
  const frames = text.split("\n\n");
  const rest = frames.pop() ?? "";
  const messages: FeedMessage[] = [];
  for (const frame of frames) {
    for (const line of frame.split("\n")) {
      if (line.startsWith("data: ")) {
        messages.push(JSON.parse(line.slice(6)) as FeedMessage);
      }
    }
  }
  return { carry: rest, messages };
}

/** One event-feed connection; reconnects with a fixed backoff until
 * stopped. Gap detection happens in the state layer via seq numbers. */
export class EventFeed {
  private stopped = false;

  constructor(
    private readonly base: string,
    private readonly onMessage: (m: FeedMessage) => void,
    private readonly onDrop: () => void,
    private readonly fetchImpl: FetchLike = fetch,
    private readonly backoffMs = 1000,
  ) {}

  stop(): void {
    this.stopped = true;
  }

  async run(): Promise<void> {
    while (!this.stopped) {
      try {
        const response = await this.fetchImpl(`${this.base}/v1/events`);
        if (!response.ok || response.body === null) throw new Error("no stream");
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        let carry = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done || this.stopped) break;
          const parsed = parseSseChunk(carry, decoder.decode(value, { stream: true }));
          carry = parsed.carry;
          parsed.messages.forEach(this.onMessage);
        }
      } catch {
        // fall through to the retry below
      }
      if (!this.stopped) {
        this.onDrop();
        await new Promise((resolve) => setTimeout(resolve, this.backoffMs));
      }
    }
  }
}
