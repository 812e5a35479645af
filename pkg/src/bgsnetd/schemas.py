"""Request/response models for the HTTP service.

The request body mirrors the CLI: a dataset directory, an output directory,
and the same JSON configuration document the CLI reads from --config.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class CommandRequest(BaseModel):
    dataset_dir: Optional[str] = None
    out_dir: Optional[str] = None
    config: dict = Field(default_factory=dict)


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class SynthResponse(BaseModel):
    dataset_dir: str
    frames: int
    width: int
    height: int


class ExtractBgResponse(BaseModel):
    bg_path: str
    stats_path: str
    stats: dict


class GenDatasetResponse(BaseModel):
    dataset_path: str
    samples: int
    foreground_samples: int
    frames_used: int


class TrainResponse(BaseModel):
    checkpoint_path: str
    history_path: str
    epochs_run: int
    final_loss: float
    final_accuracy: float


class PredictResponse(BaseModel):
    masks_dir: str
    frames_written: int
    probabilities_dir: Optional[str] = None


class VideoMetrics(BaseModel):
    video: str
    recall: Optional[float] = None
    specificity: Optional[float] = None
    fpr: Optional[float] = None
    fnr: Optional[float] = None
    pwc: Optional[float] = None
    precision: Optional[float] = None
    f_measure: Optional[float] = None


class EvaluateResponse(BaseModel):
    metrics_path: str
    table_path: str
    rows: list[VideoMetrics]
    evaluated_frames: int


class RunAllResponse(BaseModel):
    synth: Optional[SynthResponse] = None
    extract_bg: ExtractBgResponse
    gen_dataset: GenDatasetResponse
    train: TrainResponse
    predict: PredictResponse
    evaluate: EvaluateResponse
