// Interactive feedback loop wiring: query box, result grid, three-image
// selection, session status, and the raw-vs-adapted comparison view.

import { SessionClient, ServiceError } from "./api.js";
import { renderResults } from "./grid.js";
import { SelectionState, FEEDBACK_SIZE } from "./selection.js";
import { renderStatus } from "./status.js";
import type { QueryResponse, SessionView } from "./types.js";

type Elements = {
  queryInput: HTMLInputElement;
  queryButton: HTMLButtonElement;
  submitButton: HTMLButtonElement;
  compareButton: HTMLButtonElement;
  grid: HTMLElement;
  compareGrid: HTMLElement;
  status: HTMLElement;
  message: HTMLElement;
};

export class FeedbackApp {
  private selection: SelectionState | null = null;
  private lastQuery: QueryResponse | null = null;

  constructor(
    private readonly client: SessionClient,
    private readonly el: Elements,
  ) {
    el.queryButton.addEventListener("click", () => void this.issueQuery());
    el.submitButton.addEventListener("click", () => void this.submitFeedback());
    el.compareButton.addEventListener("click", () => void this.compare());
    this.syncSubmit();
  }

  static async mount(base: string, root: Document): Promise<FeedbackApp> {
    const client = await SessionClient.create(base);
    const app = new FeedbackApp(client, {
      queryInput: root.querySelector("#query-id") as HTMLInputElement,
      queryButton: root.querySelector("#run-query") as HTMLButtonElement,
      submitButton: root.querySelector("#submit-feedback") as HTMLButtonElement,
      compareButton: root.querySelector("#compare") as HTMLButtonElement,
      grid: root.querySelector("#results") as HTMLElement,
      compareGrid: root.querySelector("#compare-results") as HTMLElement,
      status: root.querySelector("#status") as HTMLElement,
      message: root.querySelector("#message") as HTMLElement,
    });
    app.showSession(await client.status());
    return app;
  }

  private showSession(view: SessionView): void {
    renderStatus(this.el.status, view);
    this.el.compareButton.disabled = !view.adapted || this.lastQuery === null;
  }

  private syncSubmit(): void {
    const ready = this.selection?.canSubmit ?? false;
    this.el.submitButton.disabled = !ready;
    const count = this.selection?.size ?? 0;
    this.el.submitButton.textContent =
      `Submit feedback (${count}/${FEEDBACK_SIZE})`;
  }

  private note(text: string): void {
    this.el.message.textContent = text;
  }

  async issueQuery(): Promise<void> {
    const imageId = this.el.queryInput.value.trim();
    if (!imageId) {
      this.note("Enter a historical image id to query.");
      return;
    }
    try {
      const response = await this.client.query(imageId);
      this.lastQuery = response;
      this.selection = new SelectionState(response.query_id);
      renderResults(this.el.grid, response.results, {
        thumbUrl: (id) => this.client.thumbUrl(id),
        selection: this.selection,
        onToggle: () => this.syncSubmit(),
      });
      this.showSession(response.session);
      this.syncSubmit();
      this.note(`Ranked with the ${response.mode} index. Select exactly `
        + `${FEEDBACK_SIZE} relevant images.`);
    } catch (err) {
      this.fail(err);
    }
  }

  async submitFeedback(): Promise<void> {
    if (!this.selection?.canSubmit) return;
    try {
      const response = await this.client.feedback(
        this.selection.queryId, this.selection.ids);
      this.showSession(response.session);
      this.selection.clear();
      this.syncSubmit();
      if (response.adapted_triggered) {
        this.note("Adaptation triggered: the archive is now searched in the "
          + "aligned target space.");
      } else if (response.session.adapted) {
        this.note("Feedback recorded (session already adapted).");
      } else if (response.session.thresholds.estimated) {
        this.note("Feedback recorded; dimensionality estimated, collecting "
          + "samples until the thresholds are crossed.");
      } else {
        this.note("Feedback recorded.");
      }
    } catch (err) {
      this.fail(err);
    }
  }

  /** Re-issue the last query in raw mode next to the adapted ranking. */
  async compare(): Promise<void> {
    if (!this.lastQuery) return;
    try {
      const raw = await this.client.query(this.lastQuery.query_id, 12, "raw");
      const adapted = await this.client.query(this.lastQuery.query_id, 12, "adapted");
      renderResults(this.el.grid, adapted.results, {
        thumbUrl: (id) => this.client.thumbUrl(id),
      });
      renderResults(this.el.compareGrid, raw.results, {
        thumbUrl: (id) => this.client.thumbUrl(id),
      });
      this.showSession(adapted.session);
      this.note("Left: adapted ranking. Right: the raw ranking it replaced.");
    } catch (err) {
      this.fail(err);
    }
  }

  private fail(err: unknown): void {
    if (err instanceof ServiceError) {
      this.note(`${err.code}: ${err.message}`);
    } else {
      this.note(String(err));
    }
  }
}
