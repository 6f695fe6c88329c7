/** Wire shapes of the v1 control API. */

export interface StreamInfo {
  uid: string;
  name: string;
  kind: string;
  channel_count: number;
  nominal_rate: number;
  value_format: string;
  units: string[];
  lab_id: string;
  [extra: string]: unknown;
}

export interface LinkMetrics {
  median_rtt: number;
  rtt_jitter: number;
  offset_uncertainty: number;
  loss_fraction: number;
  dropped_samples: number;
}

export interface MetricsResponse {
  links: Record<string, LinkMetrics | null>;
  achievable_lll: number;
  target_lll: number | null;
}

export interface Participant {
  participant_id: string;
  lab_id: string;
  role: string;
}

export interface SessionSpec {
  session_id: string;
  target_lll: number;
  labs: { lab_id: string; immersion_capable: boolean }[];
  participants: Participant[];
  [extra: string]: unknown;
}

export interface SessionResponse {
  state: string;
  entered_at: number;
  spec: SessionSpec | null;
}

/** One message on the /v1/events feed. */
export interface FeedMessage {
  seq: number;
  kind: string;
  at: number;
  [extra: string]: unknown;
}

export const SESSION_STATES = [
  "Created",
  "RolesAssigned",
  "Calibrating",
  "Ready",
  "Running",
  "Stopped",
] as const;
