// Bootstrap: one runtime setting (the service endpoint URL) plus the
// annotator/reviewer name, then hand off to the annotator or reviewer view.

import { ApiClient } from "./api.js";
import { AnnotatorView, ReviewerView } from "./ui.js";

function setting(key: string, fallback: string): string {
  try {
    return localStorage.getItem(key) ?? fallback;
  } catch {
    return fallback;
  }
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) return;

  const form = document.createElement("div");
  form.className = "connect";
  form.innerHTML = `
    <h1>Annotation workbench</h1>
    <label>Service URL <input data-field="endpoint" size="40"></label>
    <label>Your name <input data-field="who" size="20"></label>
    <label>Role
      <select data-field="role">
        <option value="annotator">annotator</option>
        <option value="reviewer">reviewer</option>
      </select>
    </label>
    <button type="button" data-action="connect">Start</button>
  `;
  const endpoint = form.querySelector<HTMLInputElement>("[data-field=endpoint]")!;
  const who = form.querySelector<HTMLInputElement>("[data-field=who]")!;
  const role = form.querySelector<HTMLSelectElement>("[data-field=role]")!;
  endpoint.value = setting("curator.endpoint", window.location.origin);
  who.value = setting("curator.who", "");

  form.querySelector("[data-action=connect]")!.addEventListener("click", () => {
    if (!who.value.trim()) {
      who.focus();
      return;
    }
    try {
      localStorage.setItem("curator.endpoint", endpoint.value);
      localStorage.setItem("curator.who", who.value);
    } catch {
      // private mode: settings just don't persist
    }
    const client = new ApiClient(endpoint.value);
    root.replaceChildren();
    if (role.value === "reviewer") {
      new ReviewerView(root, client, who.value.trim());
    } else {
      const view = new AnnotatorView(root, client, who.value.trim());
      void view.start();
    }
  });

  root.replaceChildren(form);
}

boot();
