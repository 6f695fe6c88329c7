/** Browser wiring: metrics poll at 1 Hz, event-stream push for the rest.
 * All state lives in the API; a reload rehydrates everything. */

import { ApiClient, EventFeed } from "./api.js";
import {
  applyDisconnect,
  applyFeedMessage,
  applyMetrics,
  applySession,
  applyStreams,
  initialState,
  type ViewState,
} from "./state.js";
import { renderDashboard } from "./render.js";

export function startConsole(root: HTMLElement, base: string): () => void {
  const client = new ApiClient(base);
  let state: ViewState = initialState(base);

  const paint = () => {
    root.innerHTML = renderDashboard(state);
    const form = root.querySelector<HTMLFormElement>("#send-form");
    form?.addEventListener("submit", onSend);
  };

  const update = (next: ViewState) => {
    state = next;
    paint();
  };

  async function refresh(): Promise<void> {
    try {
      const [streams, session] = await Promise.all([
        client.streams(),
        client.session(),
      ]);
      update(applySession(applyStreams(state, streams), session));
    } catch {
      update(applyDisconnect(state));
    }
  }

  async function pollMetrics(): Promise<void> {
    try {
      update(applyMetrics(state, await client.metrics()));
    } catch {
      update(applyDisconnect(state));
    }
  }

  async function onSend(event: Event): Promise<void> {
    event.preventDefault();
    const form = event.currentTarget as HTMLFormElement;
    const participant = (form.elements.namedItem("participant") as HTMLInputElement).value;
    const label = (form.elements.namedItem("label") as HTMLInputElement).value;
    const result = await client.sendControl(
      participant,
      label,
      state.session?.state ?? "Created",
    );
    const note = root.querySelector("#send-result");
    if (note) {
      note.textContent =
        result.outcome === "accepted"
          ? `sent ${result.label}`
          : `${result.outcome}: ${result.reason}`;
    }
  }

  const feed = new EventFeed(
    base,
    (message) => update(applyFeedMessage(state, message)),
    () => update(applyDisconnect(state)),
  );

  void refresh();
  void feed.run();
  const metricsTimer = setInterval(pollMetrics, 1000);
  const refreshTimer = setInterval(refresh, 5000);
  paint();

  return () => {
    feed.stop();
    clearInterval(metricsTimer);
    clearInterval(refreshTimer);
  };
}

declare global {
  interface Window {
    LABLINK_API?: string;
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    startConsole(root, window.LABLINK_API ?? "http://127.0.0.1:8800");
  }
}
