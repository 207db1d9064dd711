// Mirrors of the annotation service's JSON shapes.

export type ItemState =
  | "pending"
  | "title_rejected"
  | "annotated"
  | "discarded"
  | "reviewed";

export type StepName =
  | "title_verdict"
  | "caption_set"
  | "labels_set"
  | "usertags_verified"
  | "finalize";

export type Dimension = "object" | "action" | "scene" | "user_tag";

export const LABEL_DIMENSIONS: Dimension[] = ["object", "action", "scene"];
export const ALL_DIMENSIONS: Dimension[] = ["object", "action", "scene", "user_tag"];

export interface Draft {
  title_relevant: boolean | null;
  caption: string | null;
  labels: Record<Dimension, string[]>;
  translations: Translations | null;
}

export interface Translations {
  caption?: string;
  labels?: Partial<Record<Dimension, string[]>>;
}

export interface VideoInfo {
  title: string;
  user_tags: string[];
  duration_s: number;
  media_url?: string;
}

export interface ItemView {
  video_id: string;
  state: ItemState;
  assigned_to: string | null;
  step_cursor: number;
  next_step: string | null;
  draft: Draft;
  video: VideoInfo;
}

export interface StepResponse {
  item: ItemView;
  warnings: string[];
}

export interface ServiceStats {
  total: number;
  states: Record<ItemState, number>;
  claimed_active: number;
  events: number;
  recent_labels: Record<Dimension, string[]>;
}

export interface ReviewFixes {
  caption?: string;
  labels?: Partial<Record<Dimension, string[]>>;
}

export const CAPTION_SOFT_LIMIT = 80;
