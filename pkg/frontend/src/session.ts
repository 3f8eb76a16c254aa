// Session state machine: one blinded item at a time, judgments acknowledged
// by the backend before the next item appears (no optimistic UI).

import { ApiError, BlindedItem, Judgment, Report, StudyApi } from './api.js';

export type Phase = 'idle' | 'loading' | 'rating' | 'submitting' | 'complete' | 'error';

export interface SessionView {
  phase: Phase;
  sessionId: string | null;
  rated: number;
  total: number;
  item: BlindedItem | null;
  report: Report | null;
  error: string | null;
}

const INITIAL_VIEW: SessionView = {
  phase: 'idle',
  sessionId: null,
  rated: 0,
  total: 0,
  item: null,
  report: null,
  error: null,
};

export class SessionController {
  view: SessionView = { ...INITIAL_VIEW };
  private renderedAt: number | null = null;
  private retryAction: (() => Promise<void>) | null = null;

  constructor(
    private readonly api: StudyApi,
    private readonly onChange: (view: SessionView) => void,
  ) {}

  private update(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    this.onChange(this.view);
  }

  private fail(err: unknown, retry: () => Promise<void>): void {
    this.retryAction = retry;
    const message = err instanceof Error ? err.message : String(err);
    this.update({ phase: 'error', error: message });
  }

  async start(seed?: number): Promise<void> {
    this.update({ ...INITIAL_VIEW, phase: 'loading' });
    try {
      const created = await this.api.createSession(seed);
      this.update({ sessionId: created.session_id, total: created.total, rated: 0 });
      await this.advance();
    } catch (err) {
      this.fail(err, () => this.start(seed));
    }
  }

  async resume(sessionId: string): Promise<void> {
    this.update({ ...INITIAL_VIEW, phase: 'loading' });
    try {
      const progress = await this.api.progress(sessionId);
      this.update({
        sessionId: progress.session_id,
        total: progress.total,
        rated: progress.rated,
      });
      if (progress.completed) {
        await this.showReport();
      } else {
        await this.advance();
      }
    } catch (err) {
      this.fail(err, () => this.resume(sessionId));
    }
  }

  async retry(): Promise<void> {
    const action = this.retryAction;
    if (action !== null) {
      this.retryAction = null;
      await action();
    }
  }

  /** Latency is measured from here (image render) to the judgment click. */
  markRendered(): void {
    if (this.view.phase === 'rating') {
      this.renderedAt = performance.now();
    }
  }

  private async advance(): Promise<void> {
    const sessionId = this.view.sessionId;
    if (sessionId === null) return;
    try {
      const item = await this.api.nextItem(sessionId);
      this.renderedAt = null;
      this.update({ phase: 'rating', item, rated: item.index });
      this.markRendered();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.showReport();
        return;
      }
      this.fail(err, () => this.advance());
    }
  }

  private async showReport(): Promise<void> {
    const sessionId = this.view.sessionId;
    if (sessionId === null) return;
    try {
      const report = await this.api.report(sessionId);
      this.update({ phase: 'complete', item: null, report, rated: report.rated });
    } catch (err) {
      this.fail(err, () => this.showReport());
    }
  }

  /**
   * Submit a judgment for the displayed item. Ignored unless an item is
   * awaiting a rating, so double-clicks and repeated keypresses collapse
   * into a single backend rating.
   */
  async judge(choice: Judgment): Promise<void> {
    if (this.view.phase !== 'rating' || this.view.item === null) return;
    const item = this.view.item;
    const latency = Math.max(0, Math.round(performance.now() - (this.renderedAt ?? performance.now())));
    this.update({ phase: 'submitting' });
    const sessionId = this.view.sessionId as string;
    try {
      const ack = await this.api.submitRating(sessionId, item.item_id, choice, latency);
      this.update({ rated: ack.rated });
      if (ack.completed) {
        await this.showReport();
      } else {
        await this.advance();
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // the backend already holds a rating for this item; move on
        await this.advance();
        return;
      }
      this.fail(err, () => this.advance());
    }
  }
}
