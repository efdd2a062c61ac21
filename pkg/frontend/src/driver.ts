// Session flow state machine, independent of the DOM so it can be tested
// headlessly. The server cursor is the source of truth: conflicts resync.

import { ApiClient, Choice, TrialPayload } from "./api.js";

export type SubmitOutcome =
  | { kind: "accepted"; done: boolean }
  | { kind: "duplicate" }
  | { kind: "resynced" };

export class SessionDriver {
  private inFlight = false;
  private answered = new Set<number>();

  constructor(readonly api: ApiClient, readonly sessionId: string) {}

  currentTrial(): Promise<TrialPayload> {
    return this.api.trial(this.sessionId);
  }

  /**
   * Submit one forced choice. A second call for the same trial (double
   * keypress, or while a submission is in flight) performs no network
   * request. A stale-index conflict reports "resynced": the caller should
   * re-fetch the current trial from the server.
   */
  async submit(index: number, choice: Choice): Promise<SubmitOutcome> {
    if (this.inFlight || this.answered.has(index)) {
      return { kind: "duplicate" };
    }
    this.inFlight = true;
    try {
      const outcome = await this.api.respond(this.sessionId, index, choice);
      if (outcome.status === 409) {
        return { kind: "resynced" };
      }
      this.answered.add(index);
      return { kind: "accepted", done: outcome.ack?.done ?? false };
    } finally {
      this.inFlight = false;
    }
  }
}
