// DOM layer: renders the session state and maps every control to exactly
// one session action. Rebuilt from the last server response on each change,
// so what is on screen never diverges from the server's view.

import type { ApiClient } from "./api.js";
import { AnnotationSession, type SessionState } from "./flow.js";
import {
  CAPTION_SOFT_LIMIT,
  LABEL_DIMENSIONS,
  type Dimension,
  type ServiceStats,
} from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  node.append(...children);
  return node;
}

const STEP_LABELS: [string, string][] = [
  ["title_verdict", "Title check"],
  ["caption_set", "Caption"],
  ["labels_set:object", "Objects"],
  ["labels_set:action", "Actions"],
  ["labels_set:scene", "Scenes"],
  ["usertags_verified", "User tags"],
  ["finalize", "Finalize"],
];

export class AnnotatorView {
  readonly session: AnnotationSession;
  private suggestions: Partial<Record<Dimension, string[]>> = {};
  private pendingLabels: string[] = [];
  private lastCaption = "";

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ApiClient,
    annotator: string,
    options: { renewIntervalMs?: number; confirmDiscard?: (dims: Dimension[]) => boolean } = {},
  ) {
    this.session = new AnnotationSession(client, annotator, {
      onChange: (state) => this.render(state),
      confirmDiscard: options.confirmDiscard
        ?? ((dims) => window.confirm(
          `No labels in: ${dims.join(", ")}. Finalizing will DISCARD this video. Continue?`)),
      renewIntervalMs: options.renewIntervalMs,
    });
    this.render(this.session.state);
  }

  async start(): Promise<void> {
    void this.refreshSuggestions();
    await this.session.claimNext();
  }

  private async refreshSuggestions(): Promise<void> {
    try {
      const stats: ServiceStats = await this.client.stats();
      this.suggestions = stats.recent_labels;
    } catch {
      this.suggestions = {};
    }
  }

  private render(state: SessionState): void {
    this.root.replaceChildren();
    if (state.pendingRetry) {
      this.root.append(el(
        "div", { class: "banner error", "data-banner": "retry" },
        `Request failed: ${state.pendingRetry}. `,
        this.button("Retry", "retry", () => void this.session.retry()),
      ));
    }
    if (state.conflict) {
      this.root.append(el("div", { class: "banner warn", "data-banner": "conflict" },
                          `Server refused the step: ${state.conflict}`));
    }
    for (const warning of state.warnings) {
      this.root.append(el("div", { class: "banner warn" }, warning));
    }

    if (!state.item) {
      this.root.append(
        el("p", {}, state.queueEmpty ? "Queue is empty. Thanks!" : "No item claimed."),
        this.button("Fetch next item", "claim-next", () => void this.session.claimNext()),
        el("p", { class: "muted" }, `Items finished this session: ${state.finished}`),
      );
      return;
    }

    const item = state.item;
    const video = item.video;
    const header = el("div", { class: "video-card" },
      el("h2", {}, video.title),
      el("p", { class: "muted" },
         `${item.video_id} · ${video.duration_s}s · tags: ${video.user_tags.join(", ")}`));
    if (video.media_url) {
      header.append(el("video", { src: video.media_url, controls: "", width: "480" }));
    }
    this.root.append(header);

    if (item.state !== "pending") {
      this.root.append(
        el("p", {}, `This item is ${item.state}.`),
        this.button("Fetch next item", "claim-next", () => void this.session.claimNext()));
      return;
    }

    this.root.append(this.stepIndicator(item.next_step));
    const form = this.stepForm(state);
    if (form) this.root.append(form);
  }

  private stepIndicator(nextStep: string | null): HTMLElement {
    const list = el("ol", { class: "steps", "data-role": "step-indicator" });
    for (const [key, label] of STEP_LABELS) {
      const active = key === nextStep;
      list.append(el("li", {
        class: active ? "active" : "",
        "data-step": key,
        ...(active ? { "data-active": "true" } : {}),
      }, label));
    }
    return list;
  }

  private stepForm(state: SessionState): HTMLElement | null {
    const step = state.item?.next_step;
    switch (step) {
      case "title_verdict":
        return el("div", { class: "step-form" },
          el("p", {}, "Is the user title content-relevant?"),
          this.button("Relevant", "title-yes", () => void this.session.submitTitleVerdict(true)),
          this.button("Not relevant (skip video)", "title-no",
                      () => void this.session.submitTitleVerdict(false)));
      case "caption_set":
        return this.captionForm(state);
      case "labels_set:object":
      case "labels_set:action":
      case "labels_set:scene":
        return this.labelsForm(step.split(":")[1] as Exclude<Dimension, "user_tag">);
      case "usertags_verified":
        return this.userTagForm(state);
      case "finalize":
        return this.finalizeForm();
      default:
        return null;
    }
  }

  private captionForm(state: SessionState): HTMLElement {
    const textarea = el("textarea", {
      "data-field": "caption", rows: "3", cols: "60",
      placeholder: "Describe the gist of the video content",
    });
    textarea.value = this.lastCaption;
    textarea.addEventListener("input", () => {
      this.lastCaption = textarea.value;
      counter.textContent = `${[...textarea.value].length}/${CAPTION_SOFT_LIMIT}`;
    });
    const counter = el("span", { class: "muted", "data-role": "caption-counter" },
                       `${[...this.lastCaption].length}/${CAPTION_SOFT_LIMIT}`);
    const form = el("div", { class: "step-form" },
      el("p", {}, "Write a caption that faithfully describes the video content."),
      textarea, counter, el("br"),
      this.button("Submit caption", "submit-caption",
                  () => void this.session.submitCaption(textarea.value)));
    if (state.captionNeedsOverride) {
      form.append(el("div", { class: "banner warn", "data-banner": "caption-long" },
        `Caption exceeds ${CAPTION_SOFT_LIMIT} characters. `,
        this.button("Submit anyway", "override-caption",
                    () => void this.session.submitCaption(textarea.value, true))));
    }
    return form;
  }

  private labelsForm(dimension: Exclude<Dimension, "user_tag">): HTMLElement {
    const listId = `suggestions-${dimension}`;
    const datalist = el("datalist", { id: listId });
    for (const label of this.suggestions[dimension] ?? []) {
      datalist.append(el("option", { value: label }));
    }
    const input = el("input", {
      "data-field": "label-input", list: listId,
      placeholder: `add ${dimension} label`,
    });
    const chips = el("div", { class: "chips", "data-role": "pending-labels" });
    const redraw = () => {
      chips.replaceChildren(...this.pendingLabels.map((label, index) => {
        const chip = el("span", { class: "chip" }, label, " ");
        const remove = this.button("×", `remove-label-${index}`, () => {
          this.pendingLabels.splice(index, 1);
          redraw();
        });
        chip.append(remove);
        return chip;
      }));
    };
    const add = () => {
      const value = input.value.trim();
      if (value && !this.pendingLabels.includes(value)) {
        this.pendingLabels.push(value);
        input.value = "";
        redraw();
      }
    };
    input.addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter") add();
    });
    redraw();
    return el("div", { class: "step-form" },
      el("p", {}, `Which ${dimension}s are shown in the video?`),
      datalist, input,
      this.button("Add", "add-label", add),
      chips,
      this.button(`Submit ${dimension} labels`, "submit-labels", () => {
        const labels = [...this.pendingLabels];
        this.pendingLabels = [];
        void this.session.submitLabels(dimension, labels);
      }));
  }

  private userTagForm(state: SessionState): HTMLElement {
    const tags = state.item!.video.user_tags;
    const boxes = tags.map((tag, index) => {
      const box = el("input", {
        type: "checkbox", "data-field": "usertag", "data-tag": tag,
        id: `usertag-${index}`,
      }) as HTMLInputElement;
      return { tag, box };
    });
    const form = el("div", { class: "step-form" },
      el("p", {}, "Tick the user tags that are content-relevant."));
    for (const { tag, box } of boxes) {
      form.append(el("label", { class: "tag-row" }, box, ` ${tag}`), el("br"));
    }
    form.append(this.button("Submit verified tags", "submit-usertags", () => {
      const chosen = boxes.filter(({ box }) => box.checked).map(({ tag }) => tag);
      void this.session.submitUserTags(chosen);
    }));
    return form;
  }

  private finalizeForm(): HTMLElement {
    const draft = this.session.state.item!.draft;
    const summary = el("ul", {});
    summary.append(el("li", {}, `Caption: ${draft.caption ?? ""}`));
    for (const dim of [...LABEL_DIMENSIONS, "user_tag" as Dimension]) {
      summary.append(el("li", {}, `${dim}: ${(draft.labels[dim] ?? []).join(", ") || "(none)"}`));
    }
    const empty = this.session.emptyDimensions();
    const form = el("div", { class: "step-form" },
      el("p", {}, "Review the annotation and finalize."), summary);
    if (empty.length > 0) {
      form.append(el("div", { class: "banner warn", "data-banner": "will-discard" },
        `No labels in: ${empty.join(", ")} — finalizing will discard this video.`));
    }
    form.append(this.button("Finalize", "finalize", () => void this.session.finalize()));
    return form;
  }

  private button(label: string, action: string, onClick: () => void): HTMLButtonElement {
    const node = el("button", { type: "button", "data-action": action }, label);
    node.addEventListener("click", onClick);
    return node;
  }
}

/** Review board screen: fix labels/captions and attach English translations. */
export class ReviewerView {
  constructor(
    private readonly root: HTMLElement,
    private readonly client: ApiClient,
    private readonly reviewer: string,
  ) {
    this.renderLoader();
  }

  private renderLoader(message = ""): void {
    const input = el("input", { "data-field": "review-video-id", placeholder: "video id" });
    this.root.replaceChildren(
      el("p", {}, "Load an annotated item for review."),
      input,
      button("Load", "review-load", () => void this.load(input.value.trim())),
      message ? el("div", { class: "banner warn" }, message) : "",
    );
  }

  private async load(videoId: string): Promise<void> {
    try {
      const item = await this.client.getItem(videoId);
      if (item.state !== "annotated") {
        this.renderLoader(`Item is ${item.state}; only annotated items can be reviewed.`);
        return;
      }
      this.renderEditor(videoId, item.draft.caption ?? "", item.draft.labels);
    } catch (error) {
      this.renderLoader(String(error));
    }
  }

  private renderEditor(
    videoId: string,
    caption: string,
    labels: Record<string, string[]>,
  ): void {
    const captionFix = el("input", { "data-field": "fix-caption", size: "60" });
    captionFix.value = caption;
    const captionEn = el("input", {
      "data-field": "translate-caption", size: "60",
      placeholder: "English caption",
    });
    const fixInputs: Record<string, HTMLInputElement> = {};
    const enInputs: Record<string, HTMLInputElement> = {};
    const rows = el("div", {});
    for (const dim of ["object", "action", "scene", "user_tag"]) {
      const fix = el("input", { "data-field": `fix-${dim}`, size: "40" });
      fix.value = (labels[dim] ?? []).join(", ");
      const en = el("input", {
        "data-field": `translate-${dim}`, size: "40",
        placeholder: `${dim} labels in English`,
      });
      fixInputs[dim] = fix;
      enInputs[dim] = en;
      rows.append(el("p", {}, `${dim} (zh): `, fix, " (en): ", en));
    }
    const status = el("div", { "data-role": "review-status" });
    this.root.replaceChildren(
      el("h2", {}, `Review ${videoId}`),
      el("p", {}, "Chinese caption: ", captionFix),
      el("p", {}, "English caption: ", captionEn),
      rows, status,
      button("Submit review", "review-submit", () => void (async () => {
        const split = (value: string) =>
          value.split(",").map((part) => part.trim()).filter(Boolean);
        const translations: { caption?: string; labels: Record<string, string[]> } = { labels: {} };
        if (captionEn.value.trim()) translations.caption = captionEn.value.trim();
        for (const [dim, input] of Object.entries(enInputs)) {
          const values = split(input.value);
          if (values.length) translations.labels[dim] = values;
        }
        try {
          await this.client.review(videoId, this.reviewer, {
            caption: captionFix.value,
            labels: Object.fromEntries(
              Object.entries(fixInputs).map(([dim, input]) => [dim, split(input.value)])),
          }, translations);
          status.replaceChildren(el("div", { class: "banner ok" }, "Reviewed."));
        } catch (error) {
          status.replaceChildren(el("div", { class: "banner error" }, String(error)));
        }
      })()),
      button("Back", "review-back", () => this.renderLoader()),
    );
  }
}

function button(label: string, action: string, onClick: () => void): HTMLButtonElement {
  const node = document.createElement("button");
  node.type = "button";
  node.dataset.action = action;
  node.textContent = label;
  node.addEventListener("click", onClick);
  return node;
}
