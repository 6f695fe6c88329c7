/** Pure HTML rendering of the view state; no DOM access, so the whole
 * dashboard is testable as a string. */

import { lllIndicator, type ViewState } from "./state.js";
import { SESSION_STATES } from "./types.js";

function esc(value: unknown): string {
  return String(value)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function streamsSection(state: ViewState): string {
  if (state.streams.length === 0) {
    return `<section id="streams"><h2>Streams</h2><p class="empty">no streams visible</p></section>`;
  }
  const rows = state.streams
    .map(
      (s) =>
        `<tr><td>${esc(s.name)}</td><td>${esc(s.kind)}</td><td>${esc(s.lab_id)}</td>` +
        `<td>${s.channel_count}ch @ ${s.nominal_rate} Hz</td></tr>`,
    )
    .join("");
  return (
    `<section id="streams"><h2>Streams</h2><table>` +
    `<tr><th>name</th><th>kind</th><th>lab</th><th>shape</th></tr>${rows}</table></section>`
  );
}

function metricsSection(state: ViewState): string {
  const indicator = lllIndicator(state.metrics);
  const badge =
    `<span class="lll ${indicator.colour}">` +
    `LLL ${state.metrics?.achievable_lll ?? "?"} / target ${state.metrics?.target_lll ?? "-"}` +
    ` (${esc(indicator.reason)})</span>`;
  const links = Object.entries(state.metrics?.links ?? {})
    .map(([peer, m]) =>
      m === null
        ? `<li>${esc(peer)}: unmeasured</li>`
        : `<li>${esc(peer)}: rtt ${(m.median_rtt * 1000).toFixed(1)} ms, ` +
          `jitter ${(m.rtt_jitter * 1000).toFixed(1)} ms, ` +
          `sync ±${(m.offset_uncertainty * 1000).toFixed(1)} ms, ` +
          `loss ${(m.loss_fraction * 100).toFixed(1)}%</li>`,
    )
    .join("");
  return `<section id="metrics"><h2>Link quality</h2>${badge}<ul>${links}</ul></section>`;
}

function sessionSection(state: ViewState): string {
  const current = state.session?.state ?? "Created";
  const chain = SESSION_STATES.map((s) =>
    s === current ? `<b class="current">${s}</b>` : `<span>${s}</span>`,
  ).join(" → ");
  const roster = (state.session?.spec?.participants ?? [])
    .map((p) => `<li>${esc(p.participant_id)} — ${esc(p.role)} @ ${esc(p.lab_id)}</li>`)
    .join("");
  return (
    `<section id="session"><h2>Session</h2><p class="machine">${chain}</p>` +
    `<ul class="roster">${roster}</ul></section>`
  );
}

function eventLogSection(state: ViewState): string {
  const items = [...state.eventLog]
    .reverse()
    .map(
      (m) =>
        `<li data-seq="${m.seq}">[${m.seq}] ${esc(m.kind)}` +
        `${"label" in m ? `: ${esc(m.label)}` : ""}</li>`,
    )
    .join("");
  const gap = state.gapDetected
    ? `<p class="warn">event feed gap detected; log may be incomplete</p>`
    : "";
  return `<section id="log"><h2>Events</h2>${gap}<ul>${items}</ul></section>`;
}

export function renderDashboard(state: ViewState): string {
  const banner = state.connected
    ? ""
    : `<div class="banner" id="disconnected">disconnected from ${esc(state.endpoint)} — retrying…</div>`;
  return (
    `${banner}<main>` +
    streamsSection(state) +
    metricsSection(state) +
    sessionSection(state) +
    eventLogSection(state) +
    `</main>`
  );
}
