// Chat console wiring: one session, one in-flight message at a time.
//
// The session id lives in the URL fragment (#s=...), and everything shown is
// re-fetched from the server, so a hard refresh reproduces the exact view.

import { ApiClient, ApiError, StateView } from "./api.js";
import {
  appendMessage,
  renderIntent,
  renderSqlPreview,
  renderStateTable,
  renderStatus,
  renderTranscript,
  renderVerdictBadge,
} from "./view.js";

export interface ConsoleApp {
  root: HTMLElement;
  client: ApiClient;
  sessionId: string | null;
  sendMessage(text: string): Promise<void>;
  refreshState(): Promise<StateView>;
}

const SKELETON = `
  <div class="banner hidden" data-role="banner">
    <span data-role="banner-text"></span>
    <button data-role="retry">retry</button>
  </div>
  <div class="layout">
    <section class="chat">
      <div class="transcript" data-role="transcript"></div>
      <form class="composer" data-role="composer">
        <input type="text" data-role="input" placeholder="Type a message"
               autocomplete="off" dir="auto" />
        <button type="submit" data-role="send">Send</button>
      </form>
    </section>
    <aside class="inspector">
      <h2>Tracked state</h2>
      <div class="meta">
        <span data-role="intent">no active intent</span>
        <span class="badge" data-role="verdict"></span>
        <span class="status" data-role="status"></span>
      </div>
      <table class="state-table" data-role="state-table"></table>
      <h2>SQL preview</h2>
      <pre class="sql" data-role="sql"></pre>
      <div class="error hidden" data-role="error"></div>
    </aside>
  </div>
`;

function pick(root: HTMLElement, role: string): HTMLElement {
  const el = root.querySelector(`[data-role="${role}"]`);
  if (!el) throw new Error(`missing element ${role}`);
  return el as HTMLElement;
}

export function sessionIdFromFragment(hash: string): string | null {
  const match = /#s=([A-Za-z0-9_-]+)/.exec(hash);
  return match ? match[1] : null;
}

export async function connect(root: HTMLElement, baseUrl: string,
                              hash = ""): Promise<ConsoleApp> {
  root.innerHTML = SKELETON;
  const client = new ApiClient(baseUrl);
  const banner = pick(root, "banner");
  const bannerText = pick(root, "banner-text");
  const transcript = pick(root, "transcript");
  const stateTable = pick(root, "state-table");
  const input = pick(root, "input") as HTMLInputElement;
  const send = pick(root, "send") as HTMLButtonElement;
  const errorBox = pick(root, "error");

  const app: ConsoleApp = {
    root,
    client,
    sessionId: null,
    async sendMessage(text: string): Promise<void> {
      if (!app.sessionId || send.disabled || !text.trim()) return;
      send.disabled = true;
      errorBox.classList.add("hidden");
      appendMessage(transcript, "user", text);
      try {
        const response = await client.sendMessage(app.sessionId, text);
        appendMessage(transcript, "system", response.reply);
        renderVerdictBadge(pick(root, "verdict"), response.verdict);
        renderStatus(pick(root, "status"), response.result);
        renderSqlPreview(pick(root, "sql"), response.result);
        const state = await client.getState(app.sessionId);
        const highlight = response.action === "ask_followup"
          ? state.missing_mandatory[0] ?? null
          : null;
        renderIntent(pick(root, "intent"), state);
        renderStateTable(stateTable, state, highlight);
      } catch (error) {
        const message = error instanceof ApiError
          ? `${error.code}: ${error.message}`
          : String(error);
        errorBox.textContent = message;
        errorBox.classList.remove("hidden");
      } finally {
        send.disabled = false;
      }
    },
    async refreshState(): Promise<StateView> {
      if (!app.sessionId) throw new Error("no session");
      const state = await client.getState(app.sessionId);
      renderIntent(pick(root, "intent"), state);
      renderStateTable(stateTable, state, null);
      return state;
    },
  };

  pick(root, "composer").addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value;
    input.value = "";
    void app.sendMessage(text);
  });

  pick(root, "retry").addEventListener("click", () => {
    void establish();
  });

  async function establish(): Promise<void> {
    banner.classList.add("hidden");
    try {
      const existing = sessionIdFromFragment(hash);
      if (existing) {
        // reconnect: the full view comes back from the server alone
        app.sessionId = existing;
        renderTranscript(transcript, await client.getTranscript(existing));
        await app.refreshState();
      } else {
        app.sessionId = await client.createSession();
        renderTranscript(transcript, []);
        renderStateTable(stateTable, {
          session_id: app.sessionId,
          active_intent: null,
          pending: "none",
          turn_no: 0,
          fills: {},
          history: [],
          missing_mandatory: [],
        }, null);
      }
    } catch (error) {
      app.sessionId = null;
      bannerText.textContent = `cannot reach ${baseUrl}: ${String(error)}`;
      banner.classList.remove("hidden");
    }
  }

  await establish();
  return app;
}
