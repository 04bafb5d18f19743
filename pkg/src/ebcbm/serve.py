"""HTTP+JSON inspection and intervention API over a frozen checkpoint.

The service is read-only: every endpoint computes from an immutable model
snapshot and the loaded dataset splits, so concurrent requests are safe and
restarting reproduces all responses. Interventions live entirely in request
bodies; the intervention handler shares the exact prediction path (and JSON
shape) with the CLI's intervene command.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import datagen, evaluation, pipeline
from .errors import ContractViolation


class ApiError(Exception):
    def __init__(self, code: str, message: str, status: int):
        self.code = code
        self.message = message
        self.status = status
        super().__init__(message)


def not_found(message: str) -> ApiError:
    return ApiError("not_found", message, 404)


def bad_request(message: str) -> ApiError:
    return ApiError("bad_request", message, 400)


def create_app(params: pipeline.ModelParams,
               splits: dict[str, datagen.SyntheticDataset]) -> FastAPI:
    app = FastAPI(title="concept-bottleneck inspection API")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])
    info = pipeline.model_info(params, latency_runs=10)
    cfg = params.config

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(Exception)
    async def server_error_handler(request: Request, exc: Exception):
        return JSONResponse(status_code=500,
                            content={"code": "server_error", "message": str(exc)})

    def get_split(name: str) -> datagen.SyntheticDataset:
        if name not in splits:
            raise not_found(f"unknown split '{name}'")
        return splits[name]

    def get_sample(split: datagen.SyntheticDataset, sample_id: int):
        if not 0 <= sample_id < split.num_samples:
            raise not_found(f"unknown sample id {sample_id}")
        return split.X[sample_id]

    @app.get("/api/model")
    def model_summary() -> dict[str, Any]:
        return {
            "num_concepts": cfg.num_concepts,
            "num_classes": cfg.num_classes,
            "input_dim": cfg.input_dim,
            "latent_dim": cfg.latent_dim,
            "parameter_counts": info["parameter_counts"],
            "total_parameters": info["total_parameters"],
            "dataset_sizes": {name: ds.num_samples for name, ds in splits.items()},
            "concept_names": [f"concept_{k}" for k in range(cfg.num_concepts)],
            "class_names": [f"class_{m}" for m in range(cfg.num_classes)],
        }

    @app.get("/api/samples")
    def list_samples(split: str = "test", offset: int = 0, limit: int = 50):
        ds = get_split(split)
        if offset < 0 or limit < 1:
            raise bad_request("offset must be >= 0 and limit >= 1")
        ids = range(offset, min(offset + limit, ds.num_samples))
        return {
            "split": split,
            "total": ds.num_samples,
            "offset": offset,
            "items": [{
                "id": i,
                "class_label": int(ds.y_star[i]),
                "concept_labels": [int(c) for c in ds.C_star[i]],
            } for i in ids],
        }

    @app.get("/api/predict/{sample_id}")
    def predict(sample_id: int, split: str = "test"):
        ds = get_split(split)
        x = get_sample(ds, sample_id)
        record = pipeline.predict(x, params)
        return record.to_json_dict(sample_id=sample_id)

    @app.post("/api/predict/{sample_id}")
    async def intervene(sample_id: int, request: Request, split: str = "test"):
        ds = get_split(split)
        x = get_sample(ds, sample_id)
        try:
            body = await request.json()
        except Exception:
            raise bad_request("request body must be JSON")
        if not isinstance(body, dict) or not isinstance(body.get("overrides", {}), dict):
            raise bad_request('body must be {"overrides": {"<concept>": 0|1}}')
        overrides = {}
        for key, value in body.get("overrides", {}).items():
            try:
                k = int(key)
            except (TypeError, ValueError):
                raise bad_request(f"override key '{key}' is not a concept index")
            if not isinstance(value, int) or isinstance(value, bool) or value not in (0, 1):
                raise bad_request(f"override value for concept '{key}' must be 0 or 1")
            if not 0 <= k < cfg.num_concepts:
                raise bad_request(f"override key '{key}' out of range")
            overrides[k] = value
        try:
            record = pipeline.intervene_predict(x, params, overrides)
        except ContractViolation as e:
            raise bad_request(str(e))
        return record.to_json_dict(sample_id=sample_id)

    @app.post("/api/sweep")
    async def sweep(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise bad_request("request body must be JSON")
        split = body.get("split", "test")
        ds = get_split(split)
        ratios = body.get("ratios", [0.0, 0.25, 0.5, 0.75, 1.0])
        strategy = body.get("strategy", "random")
        seeds = body.get("seeds", [10, 11, 12])
        try:
            result = evaluation.intervention_sweep(params, ds, ratios, strategy, seeds)
        except ContractViolation as e:
            raise bad_request(str(e))
        return result.to_json_dict()

    return app
