"""HTTP JSON API over loaded model bundles.

The registry config lists model directories plus the shared vocabulary;
every bundle is validated before serving starts. Vectors never leave the
server: responses carry names, cosines and mode metadata only. The payload
builders are shared with the CLI query commands so both surfaces return
byte-identical JSON for identical queries.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .artifacts import read_json
from .factors import load_atlas
from .ingest import load_vocabulary
from .operators import (
    ModelBundle,
    OperatorError,
    UnknownIngredientError,
    closest_mode,
    nearest_neighbors,
    resolve_target,
    slerp_rotate,
)
from .sgns import load_embedding

logger = logging.getLogger(__name__)

DEFAULT_BIND = "127.0.0.1:8000"


class RegistryError(ValueError):
    pass


def _validate_bundle(bundle: ModelBundle) -> None:
    if bundle.atlas is None:
        return
    for mode in bundle.atlas.modes:
        if len(mode.member_ids) < 1:
            raise RegistryError(f"bundle {bundle.name!r}: mode {mode.source}/M{mode.mode_id} is empty")
        if abs(np.linalg.norm(mode.pole) - 1.0) > 1e-6:
            raise RegistryError(
                f"bundle {bundle.name!r}: mode {mode.source}/M{mode.mode_id} pole is not unit-norm"
            )
        if mode.pole.shape[0] != bundle.model.dim:
            raise RegistryError(
                f"bundle {bundle.name!r}: mode {mode.source}/M{mode.mode_id} pole dim "
                f"{mode.pole.shape[0]} != model dim {bundle.model.dim}"
            )
        for member in mode.member_ids:
            if bundle.row_of_id(member) is None:
                raise RegistryError(
                    f"bundle {bundle.name!r}: mode {mode.source}/M{mode.mode_id} "
                    f"references unknown ingredient id {member}"
                )


def load_bundle(name: str, model_dir: str | Path, vocab) -> ModelBundle:
    model_dir = Path(model_dir)
    model = load_embedding(model_dir / "embedding.bin")
    atlas_path = model_dir / "atlas.json"
    atlas = load_atlas(atlas_path) if atlas_path.exists() else None
    geometry = read_json(model_dir / "geometry.json") if (model_dir / "geometry.json").exists() else None
    probes = read_json(model_dir / "probes.json") if (model_dir / "probes.json").exists() else None
    bundle = ModelBundle(
        name=name, model=model, vocab=vocab, atlas=atlas,
        geometry_report=geometry, probes_report=probes,
    )
    _validate_bundle(bundle)
    return bundle


def load_registry(config_path: str | Path) -> dict:
    """Load and validate every bundle named by the registry config.

    Config keys: vocab (path), models = [{name, dir}, ...], bind,
    cors_origin. Relative paths resolve against the config file.
    """
    config_path = Path(config_path)
    config = read_json(config_path)
    base = config_path.parent
    vocab = load_vocabulary(base / config["vocab"])
    bundles: dict[str, ModelBundle] = {}
    for spec in config.get("models", []):
        name = spec["name"]
        if name in bundles:
            raise RegistryError(f"duplicate model name {name!r} in registry")
        bundles[name] = load_bundle(name, base / spec["dir"], vocab)
        logger.info("loaded bundle %s: %d ingredients, %d modes", name,
                    bundles[name].n_ingredients,
                    len(bundles[name].atlas.modes) if bundles[name].atlas else 0)
    if not bundles:
        raise RegistryError("registry names no models")
    return {
        "bundles": bundles,
        "bind": config.get("bind", DEFAULT_BIND),
        "cors_origin": config.get("cors_origin"),
    }


def _bundle(registry: dict, model: str) -> ModelBundle:
    bundle = registry["bundles"].get(model)
    if bundle is None:
        raise UnknownModelError(model, sorted(registry["bundles"]))
    return bundle


class UnknownModelError(KeyError):
    def __init__(self, name: str, known: list[str]):
        super().__init__(name)
        self.name = name
        self.suggestions = known

    def __str__(self):
        return f"unknown model {self.name!r} (available: {', '.join(self.suggestions)})"


def _mode_card(mode, cosine: float | None = None) -> dict:
    card = {
        "source": mode.source,
        "mode_id": mode.mode_id,
        "label": mode.label,
        "coherence": mode.coherence,
        "n_members": len(mode.member_ids),
    }
    if cosine is not None:
        card["cosine"] = cosine
    return card


def build_models_payload(registry: dict) -> list[dict]:
    out = []
    for name in sorted(registry["bundles"]):
        b = registry["bundles"][name]
        out.append(
            {
                "name": name,
                "dim": b.model.dim,
                "n_ingredients": b.n_ingredients,
                "n_modes": len(b.atlas.modes) if b.atlas else 0,
                "n_emergent_modes": len(b.atlas.emergent_modes()) if b.atlas else 0,
            }
        )
    return out


def build_ingredients_payload(registry: dict, model: str, prefix: str, limit: int = 10) -> dict:
    bundle = _bundle(registry, model)
    key = prefix.strip().lower().replace(" ", "_")
    names = [n for n in bundle.ingredient_names() if n.startswith(key)]
    return {"model": model, "q": prefix, "suggestions": sorted(names)[:limit]}


def build_neighbors_payload(registry: dict, model: str, seed: str, k: int = 5) -> dict:
    bundle = _bundle(registry, model)
    ranked = nearest_neighbors(bundle, seed, k)
    return {
        "model": model,
        "seed": bundle.model.names[bundle.row_of_name(seed)],
        "k": k,
        "neighbors": [{"name": n, "cosine": c} for n, c in ranked],
    }


def build_modes_payload(registry: dict, model: str, include_supervised: bool = False) -> dict:
    bundle = _bundle(registry, model)
    if bundle.atlas is None:
        raise OperatorError(f"model {model!r} has no mode atlas")
    modes = bundle.atlas.modes if include_supervised else bundle.atlas.emergent_modes()
    return {
        "model": model,
        "baseline": bundle.atlas.baseline,
        "modes": [_mode_card(m) for m in modes],
    }


def _top_members(bundle: ModelBundle, mode, limit: int = 5) -> list[str]:
    rows = np.asarray([bundle.row_of_id(i) for i in mode.member_ids])
    sims = bundle.unit[rows] @ mode.pole
    order = np.lexsort((rows, -sims))[:limit]
    return [bundle.model.names[rows[i]] for i in order]


def build_closest_mode_payload(registry: dict, model: str, seed: str,
                               include_supervised: bool = False) -> dict:
    bundle = _bundle(registry, model)
    mode, cosine = closest_mode(bundle, seed, include_supervised=include_supervised)
    card = _mode_card(mode, cosine)
    card["top_members"] = _top_members(bundle, mode)
    return {
        "model": model,
        "seed": bundle.model.names[bundle.row_of_name(seed)],
        "closest_mode": card,
    }


def build_rotate_payload(registry: dict, model: str, seed: str, target: dict,
                         angle_deg: float, k: int = 5) -> dict:
    bundle = _bundle(registry, model)
    pole, resolved = resolve_target(bundle, target)
    ranked, query = slerp_rotate(bundle, seed, pole, angle_deg, k)
    seed_row = bundle.row_of_name(seed)
    return {
        "model": model,
        "seed": bundle.model.names[seed_row],
        "angle_deg": angle_deg,
        "k": k,
        "target": resolved,
        "cos_to_seed": float(query @ bundle.unit[seed_row]),
        "results": [{"name": n, "cosine": c} for n, c in ranked],
    }


def build_report_payload(registry: dict, model: str, which: str) -> dict:
    bundle = _bundle(registry, model)
    report = bundle.geometry_report if which == "geometry" else bundle.probes_report
    if report is None:
        raise OperatorError(f"model {model!r} has no {which} report")
    return report


def create_app(registry: dict, static_dir: str | Path | None = None) -> FastAPI:
    """FastAPI application over a validated registry. Endpoints are
    idempotent reads; malformed requests map to 400, unknown names to 404,
    both with a machine-readable error body. With static_dir the built
    explorer assets are served from the root path."""
    app = FastAPI(title="epicure", version="1")

    origin = registry.get("cors_origin")
    if origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware, allow_origins=[origin], allow_methods=["*"], allow_headers=["*"]
        )

    def _error(status: int, code: str, message: str, suggestions=None):
        return JSONResponse(
            status_code=status,
            content={"error": {"code": code, "message": message, "suggestions": suggestions or []}},
        )

    @app.exception_handler(UnknownIngredientError)
    async def _unknown_ingredient(request: Request, exc: UnknownIngredientError):
        return _error(404, "unknown_ingredient", str(exc), exc.suggestions)

    @app.exception_handler(UnknownModelError)
    async def _unknown_model(request: Request, exc: UnknownModelError):
        return _error(404, "unknown_model", str(exc), exc.suggestions)

    @app.exception_handler(OperatorError)
    async def _bad_query(request: Request, exc: OperatorError):
        return _error(400, "bad_request", str(exc))

    @app.get("/v1/models")
    def models():
        return build_models_payload(registry)

    @app.get("/v1/ingredients")
    def ingredients(model: str, q: str, limit: int = 10):
        if not q:
            raise OperatorError("q must be at least 1 character")
        return build_ingredients_payload(registry, model, q, limit)

    @app.get("/v1/neighbors")
    def neighbors(model: str, seed: str, k: int = 5):
        if k < 1:
            raise OperatorError("k must be >= 1")
        return build_neighbors_payload(registry, model, seed, k)

    @app.get("/v1/modes")
    def modes(model: str, include_supervised: bool = False):
        return build_modes_payload(registry, model, include_supervised)

    @app.get("/v1/modes/closest")
    def modes_closest(model: str, seed: str, include_supervised: bool = False):
        return build_closest_mode_payload(registry, model, seed, include_supervised)

    @app.post("/v1/rotate")
    async def rotate(request: Request):
        body = await request.json()
        try:
            model = body["model"]
            seed = body["seed"]
            target = body.get("target")
            angle = float(body.get("angle_deg", 0.0))
            k = int(body.get("k", 5))
        except (KeyError, TypeError, ValueError) as exc:
            raise OperatorError(f"malformed rotate request: {exc}")
        if k < 1:
            raise OperatorError("k must be >= 1")
        # angle 0 is the unmodified seed: the body IS the neighbors body
        if angle == 0.0:
            return build_neighbors_payload(registry, model, seed, k)
        if target is None:
            raise OperatorError("nonzero angle requires a target")
        return build_rotate_payload(registry, model, seed, target, angle, k)

    @app.get("/v1/reports/{which}")
    def reports(which: str, model: str):
        if which not in ("geometry", "probes"):
            raise OperatorError(f"unknown report {which!r}")
        return build_report_payload(registry, model, which)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="explorer")
    return app


def serve(config_path: str | Path, bind: str | None = None,
          static_dir: str | Path | None = None) -> None:
    import uvicorn

    registry = load_registry(config_path)
    app = create_app(registry, static_dir=static_dir)
    host, _, port = (bind or registry["bind"]).partition(":")
    logger.info("serving on %s:%s", host, port or 8000)
    uvicorn.run(app, host=host, port=int(port or 8000), log_level="info")
