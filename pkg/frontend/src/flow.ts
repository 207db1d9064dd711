// Annotator session: drives the coarse-to-fine step sequence against the
// service. The client enforces step order only as UI affordance; every
// submission goes to the server, and a 409 resets the session to whatever
// the server says (no client-side state forks).

import { ApiClient, ConflictError, NetworkError } from "./api.js";
import {
  ALL_DIMENSIONS,
  CAPTION_SOFT_LIMIT,
  type Dimension,
  type ItemView,
  type StepName,
} from "./types.js";

export interface SessionState {
  annotator: string;
  item: ItemView | null;
  queueEmpty: boolean;
  busy: boolean;
  warnings: string[];
  /** server 409 detail after a resync, surfaced to the annotator */
  conflict: string | null;
  /** description of the action waiting behind the retry banner */
  pendingRetry: string | null;
  /** caption over the soft limit: waiting for an explicit override click */
  captionNeedsOverride: boolean;
  finished: number;
}

export interface SessionOptions {
  /** called before finalizing with empty dimensions; return true to discard */
  confirmDiscard?: (emptyDimensions: Dimension[]) => boolean | Promise<boolean>;
  onChange?: (state: SessionState) => void;
  /** lease-renewal ping period; 0 disables (the service default lease is 30 min) */
  renewIntervalMs?: number;
}

const RENEW_DEFAULT_MS = 5 * 60 * 1000;

export class AnnotationSession {
  readonly state: SessionState;
  private readonly confirmDiscard: (dims: Dimension[]) => boolean | Promise<boolean>;
  private readonly onChange: (state: SessionState) => void;
  private readonly renewIntervalMs: number;
  private renewTimer: ReturnType<typeof setInterval> | null = null;
  private retryAction: (() => Promise<void>) | null = null;

  constructor(private readonly client: ApiClient, annotator: string,
              options: SessionOptions = {}) {
    this.confirmDiscard = options.confirmDiscard ?? (() => true);
    this.onChange = options.onChange ?? (() => undefined);
    this.renewIntervalMs = options.renewIntervalMs ?? RENEW_DEFAULT_MS;
    this.state = {
      annotator,
      item: null,
      queueEmpty: false,
      busy: false,
      warnings: [],
      conflict: null,
      pendingRetry: null,
      captionNeedsOverride: false,
      finished: 0,
    };
  }

  private notify(): void {
    this.onChange(this.state);
  }

  private setItem(item: ItemView | null): void {
    this.state.item = item;
    this.state.captionNeedsOverride = false;
    if (item && item.state === "pending") {
      this.startRenewal();
    } else {
      this.stopRenewal();
    }
  }

  private startRenewal(): void {
    this.stopRenewal();
    if (this.renewIntervalMs > 0) {
      this.renewTimer = setInterval(() => void this.renewLease(), this.renewIntervalMs);
    }
  }

  private stopRenewal(): void {
    if (this.renewTimer !== null) {
      clearInterval(this.renewTimer);
      this.renewTimer = null;
    }
  }

  private async renewLease(): Promise<void> {
    const item = this.state.item;
    if (!item) return;
    try {
      await this.client.renew(item.video_id, this.state.annotator);
    } catch {
      // a failed ping is not fatal; the next submission surfaces any conflict
    }
  }

  /** Runs one UI action (= one API call); classifies failures. */
  private async perform(description: string, action: () => Promise<void>): Promise<void> {
    this.state.busy = true;
    this.state.warnings = [];
    this.notify();
    try {
      await action();
      this.state.pendingRetry = null;
      this.retryAction = null;
      this.state.conflict = null;
    } catch (error) {
      if (error instanceof ConflictError) {
        this.state.conflict = error.detail;
        await this.resyncFromServer();
      } else if (error instanceof NetworkError) {
        this.state.pendingRetry = description;
        this.retryAction = action;
      } else {
        this.state.busy = false;
        this.notify();
        throw error;
      }
    }
    this.state.busy = false;
    this.notify();
  }

  /** After a 409 the server state wins; the step indicator follows item.next_step. */
  private async resyncFromServer(): Promise<void> {
    const item = this.state.item;
    if (!item) return;
    try {
      this.setItem(await this.client.getItem(item.video_id));
    } catch {
      this.state.pendingRetry = "reload item";
      this.retryAction = async () => this.resyncFromServer();
    }
  }

  retry(): Promise<void> {
    const action = this.retryAction;
    const description = this.state.pendingRetry ?? "retry";
    if (!action) return Promise.resolve();
    return this.perform(description, action);
  }

  claimNext(): Promise<void> {
    return this.perform("fetch next item", async () => {
      const item = await this.client.nextItem(this.state.annotator);
      this.state.queueEmpty = item === null;
      this.setItem(item);
    });
  }

  private async step(step: StepName, payload: Record<string, unknown>): Promise<ItemView> {
    const item = this.state.item;
    if (!item) throw new Error("no claimed item");
    const response = await this.client.submitStep(
      item.video_id, this.state.annotator, step, payload);
    this.state.warnings = response.warnings;
    this.setItem(response.item);
    return response.item;
  }

  submitTitleVerdict(relevant: boolean): Promise<void> {
    return this.perform("submit title verdict", async () => {
      const item = await this.step("title_verdict", { relevant });
      if (item.state === "title_rejected") {
        // item closed: fetch the next one
        this.state.finished += 1;
        const next = await this.client.nextItem(this.state.annotator);
        this.state.queueEmpty = next === null;
        this.setItem(next);
      }
    });
  }

  /**
   * Captions over the soft limit are not submitted without an explicit
   * override; the first call parks the form on an override prompt.
   */
  submitCaption(caption: string, override = false): Promise<void> {
    if ([...caption].length > CAPTION_SOFT_LIMIT && !override) {
      this.state.captionNeedsOverride = true;
      this.notify();
      return Promise.resolve();
    }
    return this.perform("submit caption", async () => {
      await this.step("caption_set", { caption });
    });
  }

  submitLabels(dimension: Exclude<Dimension, "user_tag">, labels: string[]): Promise<void> {
    return this.perform(`submit ${dimension} labels`, async () => {
      await this.step("labels_set", { dimension, labels });
    });
  }

  submitUserTags(tags: string[]): Promise<void> {
    return this.perform("submit verified user tags", async () => {
      await this.step("usertags_verified", { tags });
    });
  }

  emptyDimensions(): Dimension[] {
    const draft = this.state.item?.draft;
    if (!draft) return [];
    return ALL_DIMENSIONS.filter((dim) => (draft.labels[dim] ?? []).length === 0);
  }

  async finalize(): Promise<void> {
    const empty = this.emptyDimensions();
    if (empty.length > 0 && !(await this.confirmDiscard(empty))) {
      return;
    }
    await this.perform("finalize item", async () => {
      await this.step("finalize", {});
      this.state.finished += 1;
      const next = await this.client.nextItem(this.state.annotator);
      this.state.queueEmpty = next === null;
      this.setItem(next);
    });
  }

  close(): void {
    this.stopRenewal();
  }
}
