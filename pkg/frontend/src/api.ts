// Thin typed client over the annotation service HTTP API. Every method is
// exactly one request; the server is the single authority on workflow state.

import type {
  ItemView,
  ReviewFixes,
  ServiceStats,
  StepName,
  StepResponse,
  Translations,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** 409: claim or step-order violation; the UI must resync from the server. */
export class ConflictError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
  }
}

/** Transport failure; the UI shows a retry banner and keeps its state. */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${String(cause)}`);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T | null> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (cause) {
      throw new NetworkError(cause);
    }
    if (response.status === 204) return null;
    const text = await response.text();
    if (!response.ok) {
      let detail = text;
      try {
        detail = JSON.parse(text).detail ?? text;
      } catch {
        // non-JSON error body: keep raw text
      }
      if (response.status === 409) throw new ConflictError(String(detail));
      throw new ApiError(response.status, String(detail));
    }
    return JSON.parse(text) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T | null> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  /** Claim the next pending item; null when the queue is empty (204). */
  nextItem(annotator: string): Promise<ItemView | null> {
    return this.request<ItemView>(
      `/api/queue/next?annotator=${encodeURIComponent(annotator)}`,
    );
  }

  async getItem(videoId: string): Promise<ItemView> {
    return (await this.request<ItemView>(`/api/items/${encodeURIComponent(videoId)}`))!;
  }

  async submitStep(
    videoId: string,
    annotator: string,
    step: StepName,
    payload: Record<string, unknown>,
  ): Promise<StepResponse> {
    return (await this.post<StepResponse>(
      `/api/items/${encodeURIComponent(videoId)}/step`,
      { annotator, step, payload },
    ))!;
  }

  async review(
    videoId: string,
    reviewer: string,
    fixes: ReviewFixes,
    translations: Translations,
  ): Promise<StepResponse> {
    return (await this.post<StepResponse>(
      `/api/items/${encodeURIComponent(videoId)}/review`,
      { reviewer, fixes, translations },
    ))!;
  }

  async renew(videoId: string, annotator: string): Promise<ItemView> {
    return (await this.post<ItemView>(
      `/api/items/${encodeURIComponent(videoId)}/renew`,
      { annotator },
    ))!;
  }

  async stats(): Promise<ServiceStats> {
    return (await this.request<ServiceStats>("/api/stats"))!;
  }
}
