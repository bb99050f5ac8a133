// Session status panel. Every number comes from the SessionView payload;
// nothing is counted or recomputed on the client.

import { stageOf, type SessionView } from "./types.js";

export function renderStatus(container: HTMLElement, view: SessionView): void {
  container.replaceChildren();
  container.dataset.stage = stageOf(view);

  const dl = document.createElement("dl");
  const rows: Array<[string, string]> = [
    ["session", view.sid],
    ["queries collected (n_t)", String(view.counters.n_t)],
    ["relevant images collected (n_s)", String(view.counters.n_s)],
    ["target dimensionality", view.thresholds.d_hat_t === null ? "pending" : String(view.thresholds.d_hat_t)],
    ["source dimensionality", view.thresholds.d_hat_s === null ? "pending" : String(view.thresholds.d_hat_s)],
    ["feedback rounds", String(view.round)],
    ["stage", stageOf(view)],
  ];
  for (const [label, value] of rows) {
    const dt = document.createElement("dt");
    dt.textContent = label;
    const dd = document.createElement("dd");
    dd.textContent = value;
    dl.append(dt, dd);
  }
  container.appendChild(dl);

  if (view.adapt_error) {
    const warn = document.createElement("p");
    warn.className = "adapt-error";
    warn.textContent = view.adapt_error;
    container.appendChild(warn);
  }
}
