/** Typed client for the pairing service's v1 JSON API.
 *
 * Every number the explorer displays comes out of these payloads; the client
 * never computes anything from embeddings itself.
 */

export interface ModelInfo {
  name: string;
  dim: number;
  n_ingredients: number;
  n_modes: number;
  n_emergent_modes: number;
}

export interface ScoredName {
  name: string;
  cosine: number;
}

export interface NeighborsPayload {
  model: string;
  seed: string;
  k: number;
  neighbors: ScoredName[];
}

export interface ModeCard {
  source: string;
  mode_id: number;
  label: string;
  coherence: number;
  n_members: number;
  cosine?: number;
  top_members?: string[];
}

export interface ClosestModePayload {
  model: string;
  seed: string;
  closest_mode: ModeCard;
}

export interface ModesPayload {
  model: string;
  baseline: number;
  modes: ModeCard[];
}

export interface RotatePayload {
  model: string;
  seed: string;
  angle_deg?: number;
  k: number;
  target?: unknown;
  cos_to_seed?: number;
  results?: ScoredName[];
  neighbors?: ScoredName[];
}

export type RotationTarget =
  | { kind: "supervised"; spec: string }
  | { kind: "mode"; source: string; mode_id: number };

export interface ApiError {
  code: string;
  message: string;
  suggestions: string[];
}

export class ServiceError extends Error {
  constructor(readonly status: number, readonly detail: ApiError) {
    super(detail.message);
  }
}

export interface ApiClient {
  models(): Promise<ModelInfo[]>;
  ingredients(model: string, q: string, limit?: number): Promise<string[]>;
  neighbors(model: string, seed: string, k: number, signal?: AbortSignal): Promise<NeighborsPayload>;
  closestMode(model: string, seed: string, signal?: AbortSignal): Promise<ClosestModePayload>;
  modes(model: string, includeSupervised?: boolean): Promise<ModesPayload>;
  rotate(
    model: string,
    seed: string,
    target: RotationTarget | null,
    angleDeg: number,
    k: number,
    signal?: AbortSignal,
  ): Promise<RotatePayload>;
}

async function unwrap<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  if (!resp.ok) {
    const detail: ApiError = body?.error ?? {
      code: "unknown",
      message: `HTTP ${resp.status}`,
      suggestions: [],
    };
    throw new ServiceError(resp.status, detail);
  }
  return body as T;
}

export class HttpApiClient implements ApiClient {
  constructor(private baseUrl: string = "") {}

  private url(path: string, params?: Record<string, string>): string {
    const q = params ? "?" + new URLSearchParams(params).toString() : "";
    return `${this.baseUrl}${path}${q}`;
  }

  async models(): Promise<ModelInfo[]> {
    return unwrap(await fetch(this.url("/v1/models")));
  }

  async ingredients(model: string, q: string, limit = 8): Promise<string[]> {
    const body = await unwrap<{ suggestions: string[] }>(
      await fetch(this.url("/v1/ingredients", { model, q, limit: String(limit) })),
    );
    return body.suggestions;
  }

  async neighbors(model: string, seed: string, k: number, signal?: AbortSignal): Promise<NeighborsPayload> {
    return unwrap(await fetch(this.url("/v1/neighbors", { model, seed, k: String(k) }), { signal }));
  }

  async closestMode(model: string, seed: string, signal?: AbortSignal): Promise<ClosestModePayload> {
    return unwrap(await fetch(this.url("/v1/modes/closest", { model, seed }), { signal }));
  }

  async modes(model: string, includeSupervised = false): Promise<ModesPayload> {
    return unwrap(
      await fetch(
        this.url("/v1/modes", { model, include_supervised: String(includeSupervised) }),
      ),
    );
  }

  async rotate(
    model: string,
    seed: string,
    target: RotationTarget | null,
    angleDeg: number,
    k: number,
    signal?: AbortSignal,
  ): Promise<RotatePayload> {
    const resp = await fetch(this.url("/v1/rotate"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ model, seed, target, angle_deg: angleDeg, k }),
      signal,
    });
    return unwrap(resp);
  }
}
