/** Pure view layer: state in, element tree out.
 *
 * The tree serializes to an HTML string, which is what both the browser
 * mount and the snapshot tests consume. All displayed numbers are formatted
 * verbatim from service payloads.
 */

import { ModeCard, ScoredName } from "./api.js";
import { ANGLE_DETENTS, ATLAS_PAGE_SIZE, ExplorerState, ExplorerStore, PanelState } from "./state.js";

export interface VNode {
  tag: string;
  attrs: Record<string, string>;
  children: Array<VNode | string>;
}

export function h(tag: string, attrs: Record<string, string> = {}, ...children: Array<VNode | string>): VNode {
  return { tag, attrs, children };
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function html(node: VNode | string): string {
  if (typeof node === "string") return escapeHtml(node);
  const attrs = Object.entries(node.attrs)
    .map(([key, value]) => ` ${key}="${escapeHtml(value)}"`)
    .join("");
  const inner = node.children.map(html).join("");
  return `<${node.tag}${attrs}>${inner}</${node.tag}>`;
}

function cosineBar(entry: ScoredName): VNode {
  const width = Math.round(Math.max(0, Math.min(1, entry.cosine)) * 100);
  return h(
    "li",
    { class: "result" },
    h("span", { class: "name" }, entry.name),
    h("span", { class: "bar", style: `width:${width}%` }),
    h("span", { class: "cosine" }, entry.cosine.toFixed(2)),
  );
}

export function renderModeCard(card: ModeCard): VNode {
  const children: Array<VNode | string> = [
    h("span", { class: "mode-coord" }, `${card.source}/M${card.mode_id}`),
    h("strong", { class: "mode-label" }, card.label),
  ];
  if (card.cosine !== undefined) {
    children.push(h("span", { class: "mode-cosine" }, `cos ${card.cosine.toFixed(2)}`));
  }
  if (card.top_members?.length) {
    children.push(
      h("ul", { class: "mode-members" }, ...card.top_members.map((m) => h("li", {}, m))),
    );
  }
  return h("div", { class: "mode-card" }, ...children);
}

export function renderPanel(panel: PanelState): VNode {
  const classes = panel.status === "loading" ? "panel loading" : "panel";
  const children: Array<VNode | string> = [h("h3", {}, panel.model)];
  if (panel.error) {
    children.push(h("p", { class: "error" }, panel.error));
  } else {
    children.push(h("ul", { class: "results" }, ...panel.results.map(cosineBar)));
    if (panel.modeCard) children.push(renderModeCard(panel.modeCard));
  }
  return h("section", { class: classes, "data-model": panel.model }, ...children);
}

export function renderResults(state: ExplorerState): VNode {
  const models = state.compare ? state.models.map((m) => m.name) : state.model ? [state.model] : [];
  const panels = models
    .map((name) => state.panels.get(name))
    .filter((p): p is PanelState => p !== undefined);
  if (!panels.length) {
    return h("div", { class: "results-empty" }, "pick a seed ingredient to begin");
  }
  return h("div", { class: state.compare ? "results-grid compare" : "results-grid" }, ...panels.map(renderPanel));
}

export function renderAtlas(store: ExplorerStore): VNode {
  const { modes, page } = store.state.atlas;
  if (!modes.length) return h("div", { class: "atlas-empty" }, "no modes loaded");
  const rows = store.atlasPage().map((mode) =>
    h(
      "li",
      { class: "atlas-row", "data-mode": `${mode.source}/M${mode.mode_id}` },
      h("span", { class: "mode-coord" }, `${mode.source}/M${mode.mode_id}`),
      h("span", { class: "mode-label" }, mode.label),
      h("span", {
        class: "coherence-bar",
        style: `width:${Math.round(Math.max(0, Math.min(1, mode.coherence)) * 100)}%`,
        title: mode.coherence.toFixed(3),
      }),
      h("span", { class: "members" }, `${mode.n_members} members`),
    ),
  );
  const pages = Math.ceil(modes.length / ATLAS_PAGE_SIZE);
  return h(
    "div",
    { class: "atlas" },
    h("ul", { class: "atlas-list" }, ...rows),
    h("p", { class: "atlas-pager" }, `page ${page + 1} of ${pages}`),
  );
}

export function renderControls(state: ExplorerState): VNode {
  const modelOptions = state.models.map((m) =>
    h("option", m.name === state.model ? { value: m.name, selected: "selected" } : { value: m.name }, m.name),
  );
  const detents = ANGLE_DETENTS.join(",");
  const targetChip = state.target
    ? h(
        "span",
        { class: "target-chip" },
        state.target.kind === "mode"
          ? `${state.target.label ?? ""} (${state.target.source}/M${state.target.mode_id})`
          : state.target.spec,
      )
    : h("span", { class: "target-chip empty" }, "no target");
  return h(
    "div",
    { class: "controls" },
    h("select", { id: "model", "data-detents": detents }, ...modelOptions),
    h("input", {
      id: "seed-search",
      type: "search",
      placeholder: "seed ingredient",
      value: state.searchText,
    }),
    h(
      "ul",
      { id: "suggestions" },
      ...state.suggestions.map((s) => h("li", { class: "suggestion", "data-name": s }, s)),
    ),
    targetChip,
    h("input", {
      id: "angle",
      type: "range",
      min: "0",
      max: "90",
      step: "1",
      value: String(state.angleDeg),
      list: "angle-detents",
    }),
    h("span", { id: "angle-value" }, `${state.angleDeg}°`),
    h("label", {}, h("input", state.compare ? { id: "compare", type: "checkbox", checked: "checked" } : { id: "compare", type: "checkbox" }), "compare all models"),
  );
}

export function renderApp(store: ExplorerStore): VNode {
  const state = store.state;
  const banner = state.suggestionError
    ? h("div", { class: "banner retry" }, `search failed: ${state.suggestionError}`, h("button", { id: "retry-search" }, "retry"))
    : h("div", { class: "banner hidden" });
  return h(
    "main",
    { class: "explorer" },
    banner,
    renderControls(state),
    renderResults(state),
    renderAtlas(store),
  );
}
