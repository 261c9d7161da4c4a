/** Browser bootstrap: mount the store-driven view and wire events.
 *
 * Configure the service origin with ?api=http://host:port or leave empty for
 * same-origin deployments (the service can host the built assets directly).
 */

import { HttpApiClient } from "./api.js";
import { html, renderApp } from "./render.js";
import { ExplorerStore } from "./state.js";

const params = new URLSearchParams(window.location.search);
const api = new HttpApiClient(params.get("api") ?? "");
const store = new ExplorerStore(api);
const root = document.getElementById("app");

function mount(): void {
  if (!root) return;
  root.innerHTML = html(renderApp(store));
}

store.subscribe(mount);

if (root) {
  root.addEventListener("input", (event) => {
    const target = event.target as HTMLInputElement | HTMLSelectElement;
    if (target.id === "seed-search") store.search((target as HTMLInputElement).value);
    if (target.id === "angle") void store.setAngle(Number(target.value));
    if (target.id === "model") void store.setModel(target.value).then(() => store.browseAtlas());
    if (target.id === "compare") void store.setCompare((target as HTMLInputElement).checked);
  });
  root.addEventListener("click", (event) => {
    const el = (event.target as HTMLElement).closest("[data-name],[data-mode],#retry-search");
    if (!el) return;
    const name = el.getAttribute("data-name");
    if (name) void store.selectSeed(name);
    const mode = el.getAttribute("data-mode");
    if (mode) {
      const card = store.state.atlas.modes.find((m) => `${m.source}/M${m.mode_id}` === mode);
      if (card) void store.selectModeAsTarget(card);
    }
    if (el.id === "retry-search") void store.runSearch(store.state.searchText);
  });
}

void store.loadModels().then(() => {
  mount();
  void store.browseAtlas();
});
