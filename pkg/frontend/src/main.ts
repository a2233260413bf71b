/** Single-page entry point: header with index status, chat and eval tabs. */

import { ApiClient } from "./api.js";
import { ChatView } from "./views/chat.js";
import { EvalView } from "./views/eval.js";

function start(): void {
  const app = document.getElementById("app");
  if (app === null) {
    throw new Error("missing #app mount point");
  }
  const api = new ApiClient();

  const header = document.createElement("header");
  const title = document.createElement("h1");
  title.textContent = "specrag";
  const status = document.createElement("span");
  status.className = "index-status";
  status.textContent = "checking service…";
  header.appendChild(title);
  header.appendChild(status);

  const nav = document.createElement("nav");
  const tabs: Array<{ name: string; button: HTMLButtonElement; view: HTMLElement }> = [];
  const chatView = new ChatView(api);
  const evalView = new EvalView(api);

  const content = document.createElement("main");
  for (const { name, view } of [
    { name: "chat", view: chatView.root },
    { name: "eval", view: evalView.root },
  ]) {
    const button = document.createElement("button");
    button.textContent = name;
    button.addEventListener("click", () => select(name));
    nav.appendChild(button);
    tabs.push({ name, button, view });
    content.appendChild(view);
  }

  function select(name: string): void {
    for (const tab of tabs) {
      const active = tab.name === name;
      tab.button.classList.toggle("active", active);
      tab.view.style.display = active ? "" : "none";
    }
  }

  app.appendChild(header);
  app.appendChild(nav);
  app.appendChild(content);
  select("chat");

  void api
    .health()
    .then((health) => {
      const mode = health.deterministic_mode ? "deterministic" : "remote";
      status.textContent = `${health.index_chunks} chunks indexed · ${mode}`;
    })
    .catch(() => {
      status.textContent = "service unreachable";
    });
}

start();
