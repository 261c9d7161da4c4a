/** Explorer state and transitions.
 *
 * One pending request per panel, tracked by a monotonic query id: a response
 * only lands if its id is still the panel's latest, so stale payloads can
 * never overwrite a newer query (last write wins). The rendered panel always
 * corresponds to the displayed (model, seed, target, angle) tuple.
 */

import {
  ApiClient,
  ClosestModePayload,
  ModeCard,
  ModelInfo,
  RotatePayload,
  RotationTarget,
  ScoredName,
  ServiceError,
} from "./api.js";

export const ANGLE_DETENTS = [0, 15, 30, 45, 60, 75, 90];
export const ATLAS_PAGE_SIZE = 8;

export interface PanelState {
  model: string;
  status: "idle" | "loading" | "ready";
  queryId: number;
  results: ScoredName[];
  cosToSeed: number | null;
  modeCard: ModeCard | null; // closest-mode card, shown on the angle-0 panel
  error: string | null;
}

export interface ExplorerState {
  models: ModelInfo[];
  model: string | null;
  seed: string | null;
  searchText: string;
  suggestions: string[];
  suggestionError: string | null;
  target: (RotationTarget & { label?: string }) | null;
  angleDeg: number;
  k: number;
  compare: boolean;
  panels: Map<string, PanelState>;
  atlas: { modes: ModeCard[]; page: number };
  banner: string | null;
}

export function initialState(): ExplorerState {
  return {
    models: [],
    model: null,
    seed: null,
    searchText: "",
    suggestions: [],
    suggestionError: null,
    target: null,
    angleDeg: 0,
    k: 5,
    compare: false,
    panels: new Map(),
    atlas: { modes: [], page: 0 },
    banner: null,
  };
}

export class ExplorerStore {
  state: ExplorerState = initialState();
  private nextQueryId = 1;
  private listeners: Array<() => void> = [];
  private searchTimer: ReturnType<typeof setTimeout> | null = null;
  private controllers = new Map<string, AbortController>();

  constructor(
    private api: ApiClient,
    private debounceMs = 250,
  ) {}

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  async loadModels(): Promise<void> {
    this.state.models = await this.api.models();
    if (!this.state.model && this.state.models.length) {
      this.state.model = this.state.models[0].name;
    }
    this.emit();
  }

  /** Debounced prefix search; selecting a suggestion later sets the seed. */
  search(text: string): void {
    this.state.searchText = text;
    this.emit();
    if (this.searchTimer) clearTimeout(this.searchTimer);
    if (text.length < 1 || !this.state.model) {
      this.state.suggestions = [];
      this.emit();
      return;
    }
    this.searchTimer = setTimeout(() => void this.runSearch(text), this.debounceMs);
  }

  /** Immediate (non-debounced) search, used by tests and by Enter. */
  async runSearch(text: string): Promise<void> {
    if (!this.state.model) return;
    try {
      this.state.suggestions = await this.api.ingredients(this.state.model, text);
      this.state.suggestionError = null;
    } catch (err) {
      // network failure keeps prior state and shows an inline retry banner
      this.state.suggestionError = String(err instanceof Error ? err.message : err);
    }
    this.emit();
  }

  selectSeed(name: string): Promise<void> {
    this.state.seed = name;
    this.state.searchText = name;
    this.state.suggestions = [];
    return this.runQuery();
  }

  setModel(name: string): Promise<void> {
    this.state.model = name;
    this.state.atlas = { modes: [], page: 0 };
    return this.runQuery();
  }

  setAngle(angleDeg: number): Promise<void> {
    this.state.angleDeg = Math.min(90, Math.max(0, angleDeg));
    return this.runQuery();
  }

  setK(k: number): Promise<void> {
    this.state.k = Math.max(1, Math.round(k));
    return this.runQuery();
  }

  setCompare(compare: boolean): Promise<void> {
    this.state.compare = compare;
    return this.runQuery();
  }

  setTarget(target: (RotationTarget & { label?: string }) | null): Promise<void> {
    this.state.target = target;
    return this.runQuery();
  }

  selectModeAsTarget(mode: ModeCard): Promise<void> {
    return this.setTarget({
      kind: "mode",
      source: mode.source,
      mode_id: mode.mode_id,
      label: mode.label,
    });
  }

  async browseAtlas(page = 0): Promise<void> {
    if (!this.state.model) return;
    const payload = await this.api.modes(this.state.model);
    // server ordering is preserved verbatim; paging only slices it
    this.state.atlas = { modes: payload.modes, page };
    this.emit();
  }

  atlasPage(): ModeCard[] {
    const start = this.state.atlas.page * ATLAS_PAGE_SIZE;
    return this.state.atlas.modes.slice(start, start + ATLAS_PAGE_SIZE);
  }

  /** Issue the query for the current (model, seed, target, angle, k) tuple.
   * Compare mode issues the same query once per model, one panel each. */
  async runQuery(): Promise<void> {
    const { seed, model } = this.state;
    if (!seed || !model) return;
    const names = this.state.compare ? this.state.models.map((m) => m.name) : [model];
    await Promise.all(names.map((name) => this.queryPanel(name, seed)));
  }

  private panel(model: string): PanelState {
    let panel = this.state.panels.get(model);
    if (!panel) {
      panel = {
        model,
        status: "idle",
        queryId: 0,
        results: [],
        cosToSeed: null,
        modeCard: null,
        error: null,
      };
      this.state.panels.set(model, panel);
    }
    return panel;
  }

  private async queryPanel(model: string, seed: string): Promise<void> {
    const panel = this.panel(model);
    const queryId = this.nextQueryId++;
    panel.queryId = queryId; // previous in-flight responses become stale
    panel.status = "loading"; // previous panel grays out until the response lands
    // at most one pending request per panel: cancel the superseded one
    this.controllers.get(model)?.abort();
    const controller = new AbortController();
    this.controllers.set(model, controller);
    this.emit();

    const { angleDeg, k, target } = this.state;
    try {
      let payload: RotatePayload;
      let modeCard: ModeCard | null = null;
      if (angleDeg === 0) {
        payload = await this.api.neighbors(model, seed, k, controller.signal);
        modeCard = await this.fetchModeCard(model, seed, controller.signal);
      } else {
        if (!target) throw new Error("pick a target before rotating");
        payload = await this.api.rotate(model, seed, target, angleDeg, k, controller.signal);
      }
      if (panel.queryId !== queryId) return; // stale: a newer query owns the panel
      panel.results = payload.results ?? payload.neighbors ?? [];
      panel.cosToSeed = payload.cos_to_seed ?? (angleDeg === 0 ? 1.0 : null);
      panel.modeCard = modeCard;
      panel.error = null;
      panel.status = "ready";
    } catch (err) {
      if (panel.queryId !== queryId) return;
      if (err instanceof DOMException && err.name === "AbortError") return;
      panel.results = [];
      panel.modeCard = null;
      panel.error =
        err instanceof ServiceError && err.detail.suggestions.length
          ? `${err.detail.message} — try: ${err.detail.suggestions.join(", ")}`
          : String(err instanceof Error ? err.message : err);
      panel.status = "ready";
    }
    this.emit();
  }

  private async fetchModeCard(
    model: string,
    seed: string,
    signal?: AbortSignal,
  ): Promise<ModeCard | null> {
    try {
      const payload: ClosestModePayload = await this.api.closestMode(model, seed, signal);
      return payload.closest_mode;
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      return null; // models without an atlas still show plain neighbors
    }
  }
}
