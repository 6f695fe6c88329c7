/** Console view state: a pure projection of control-API responses.
 *
 * Nothing in here is console-local truth; every field is replaced
 * wholesale by the latest server answer, so a reload rehydrates the
 * identical view.
 */

import type {
  FeedMessage,
  LinkMetrics,
  MetricsResponse,
  SessionResponse,
  StreamInfo,
} from "./types.js";

export const EVENT_LOG_CAP = 500;

export interface ViewState {
  connected: boolean;
  endpoint: string;
  streams: StreamInfo[];
  metrics: MetricsResponse | null;
  session: SessionResponse | null;
  eventLog: FeedMessage[];
  lastSeq: number;
  gapDetected: boolean;
}

export function initialState(endpoint: string): ViewState {
  return {
    connected: false,
    endpoint,
    streams: [],
    metrics: null,
    session: null,
    eventLog: [],
    lastSeq: 0,
    gapDetected: false,
  };
}

export function applyStreams(state: ViewState, streams: StreamInfo[]): ViewState {
  return { ...state, connected: true, streams };
}

export function applyMetrics(state: ViewState, metrics: MetricsResponse): ViewState {
  return { ...state, connected: true, metrics };
}

export function applySession(state: ViewState, session: SessionResponse): ViewState {
  return { ...state, connected: true, session };
}

export function applyDisconnect(state: ViewState): ViewState {
  return { ...state, connected: false };
}

/** Fold one event-feed message in; flags a gap when sequence numbers skip. */
export function applyFeedMessage(state: ViewState, message: FeedMessage): ViewState {
  const gap =
    state.lastSeq > 0 && message.seq > state.lastSeq + 1 ? true : state.gapDetected;
  const log = [...state.eventLog, message].slice(-EVENT_LOG_CAP);
  const next: ViewState = {
    ...state,
    connected: true,
    eventLog: log,
    lastSeq: Math.max(state.lastSeq, message.seq),
    gapDetected: gap,
  };
  if (message.kind === "session" && typeof message.state === "string") {
    next.session = {
      state: message.state,
      entered_at: message.at,
      spec: state.session?.spec ?? null,
    };
  }
  return next;
}

/* -- achievable-LLL indicator ---------------------------------------------- */

export type IndicatorColour = "green" | "amber" | "red";

export interface Indicator {
  colour: IndicatorColour;
  reason: string;
}

// client-side mirror of the server's default link-quality gates, used
// only to word the explanation; the level itself always comes from the API
const GATES = {
  maxLossLll2: 0.5,
  maxUncertaintyLll2: 0.05,
  maxRttLll3: 0.15,
  maxJitterLll3: 0.05,
  maxUncertaintyLll3: 0.005,
};

function failingGate(links: Record<string, LinkMetrics | null>): string {
  const measured = Object.values(links).filter((m): m is LinkMetrics => m !== null);
  if (Object.keys(links).length === 0 || measured.length < Object.keys(links).length) {
    return "no measured link";
  }
  for (const m of measured) {
    if (m.loss_fraction >= GATES.maxLossLll2) return "loss gate";
    if (m.offset_uncertainty > GATES.maxUncertaintyLll2) return "sync gate";
    if (m.median_rtt > GATES.maxRttLll3 || m.rtt_jitter > GATES.maxJitterLll3) {
      return "real-time gate";
    }
    if (m.offset_uncertainty > GATES.maxUncertaintyLll3) return "sync gate";
  }
  return "lab capability";
}

/** Green when the measured links admit the target level, amber while
 * indeterminate (no session, no measurements yet), red when the target
 * is out of reach with the failing gate named. */
export function lllIndicator(metrics: MetricsResponse | null): Indicator {
  if (metrics === null) return { colour: "amber", reason: "waiting for metrics" };
  if (metrics.target_lll === null) {
    return { colour: "amber", reason: "no session loaded" };
  }
  if (metrics.achievable_lll >= metrics.target_lll) {
    return { colour: "green", reason: "target met" };
  }
  const links = metrics.links;
  const unmeasured =
    Object.keys(links).length === 0 ||
    Object.values(links).some((m) => m === null);
  if (unmeasured && metrics.target_lll > 1) {
    return { colour: "amber", reason: "no measured link" };
  }
  return { colour: "red", reason: failingGate(links) };
}
