// Browser bootstrap: binds the controller to the page and re-renders
// after every state change.

import { TriageApi } from "./api.js";
import { AppController } from "./controller.js";

declare global {
  interface Window {
    DERMTRIAGE_API_BASE?: string;
  }
}

function mount(): void {
  const root = document.getElementById("app");
  const picker = document.getElementById("image-input") as HTMLInputElement | null;
  if (root === null || picker === null) {
    return;
  }
  const api = new TriageApi(window.DERMTRIAGE_API_BASE ?? "");
  const controller = new AppController(api);

  const redraw = (): void => {
    root.innerHTML = controller.render();
  };

  picker.addEventListener("change", () => {
    const file = picker.files?.[0];
    if (!file) {
      return;
    }
    void controller.upload(file).then(redraw);
    redraw();
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const action = target.dataset["action"];
    if (action === "report") {
      void controller.requestReport().then(redraw);
      redraw();
    } else if (action === "chat") {
      void controller.sendChat().then(redraw);
      redraw();
    } else if (action === "dismiss-error") {
      controller.dismissError();
      redraw();
    }
  });

  root.addEventListener("input", (event) => {
    const target = event.target as HTMLInputElement;
    if (target.dataset["role"] === "chat-input") {
      controller.state.chatDraft = target.value;
    }
  });

  root.addEventListener("keydown", (event) => {
    const target = event.target as HTMLInputElement;
    if (
      target.dataset["role"] === "chat-input" &&
      (event as KeyboardEvent).key === "Enter"
    ) {
      void controller.sendChat().then(redraw);
      redraw();
    }
  });

  redraw();
}

document.addEventListener("DOMContentLoaded", mount);
