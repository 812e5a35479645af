"""HTTP service exposing the pipeline stages.

Each endpoint runs its stage synchronously on server-side paths and returns
the stage's result record; training and run-all requests block until the
job finishes. The CLI can target a running service with --server.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, HTTPException

from . import __version__, pipeline
from .schemas import (
    CommandRequest,
    EvaluateResponse,
    ExtractBgResponse,
    GenDatasetResponse,
    HealthResponse,
    PredictResponse,
    RunAllResponse,
    SynthResponse,
    TrainResponse,
)

app = FastAPI(title="bgsnetd", version=__version__)


def _config(req: CommandRequest) -> pipeline.PipelineConfig:
    try:
        return pipeline.PipelineConfig.from_json_dict(req.config)
    except (ValueError, TypeError) as exc:
        raise HTTPException(status_code=422, detail=f"bad config: {exc}") from exc


def _require(value, name: str) -> str:
    if not value:
        raise HTTPException(status_code=422, detail=f"'{name}' is required")
    return value


def _run(stage, *args):
    try:
        return stage(*args)
    except (ValueError, FileNotFoundError, NotADirectoryError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(version=__version__)


@app.post("/v1/synth", response_model=SynthResponse)
def synth(req: CommandRequest) -> SynthResponse:
    result = _run(pipeline.run_synth, _require(req.dataset_dir, "dataset_dir"), _config(req))
    return SynthResponse(**dataclasses.asdict(result))


@app.post("/v1/extract-bg", response_model=ExtractBgResponse)
def extract_bg(req: CommandRequest) -> ExtractBgResponse:
    result = _run(
        pipeline.run_extract_bg,
        _require(req.dataset_dir, "dataset_dir"),
        _require(req.out_dir, "out_dir"),
        _config(req),
    )
    return ExtractBgResponse(**dataclasses.asdict(result))


@app.post("/v1/gen-dataset", response_model=GenDatasetResponse)
def gen_dataset(req: CommandRequest) -> GenDatasetResponse:
    result = _run(
        pipeline.run_gen_dataset,
        _require(req.dataset_dir, "dataset_dir"),
        _require(req.out_dir, "out_dir"),
        _config(req),
    )
    return GenDatasetResponse(**dataclasses.asdict(result))


@app.post("/v1/train", response_model=TrainResponse)
def train(req: CommandRequest) -> TrainResponse:
    result = _run(pipeline.run_train, _require(req.out_dir, "out_dir"), _config(req))
    return TrainResponse(**dataclasses.asdict(result))


@app.post("/v1/predict", response_model=PredictResponse)
def predict(req: CommandRequest) -> PredictResponse:
    result = _run(
        pipeline.run_predict,
        _require(req.dataset_dir, "dataset_dir"),
        _require(req.out_dir, "out_dir"),
        _config(req),
    )
    return PredictResponse(**dataclasses.asdict(result))


@app.post("/v1/evaluate", response_model=EvaluateResponse)
def evaluate(req: CommandRequest) -> EvaluateResponse:
    result = _run(
        pipeline.run_evaluate,
        _require(req.dataset_dir, "dataset_dir"),
        _require(req.out_dir, "out_dir"),
        _config(req),
    )
    return EvaluateResponse(**dataclasses.asdict(result))


@app.post("/v1/run-all", response_model=RunAllResponse)
def run_all(req: CommandRequest) -> RunAllResponse:
    result = _run(
        pipeline.run_all,
        _require(req.dataset_dir, "dataset_dir"),
        _require(req.out_dir, "out_dir"),
        _config(req),
    )
    return RunAllResponse(**dataclasses.asdict(result))
