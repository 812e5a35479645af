"""Pipeline orchestration: the stage implementations behind both the CLI
subcommands and the HTTP service.

Every stage is a plain function taking directories plus a PipelineConfig and
returning a small result record. Outputs land under the given output
directory with fixed names (bg.pgm, stats.json, dataset.bgsd, model.bgsn,
masks/NNNNNN.pgm, metrics.csv, history.csv), and the effective configuration
is echoed to config.json so any run is reproducible from its output
directory alone.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import depth_io, metrics, preprocess, synth
from .infer import InferConfig, predict_frame
from .nn import ModelConfig
from .patches import SamplingConfig, generate_training_set, load_dataset, save_dataset
from .preprocess import DepthStats, NormConfig
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train


@dataclass
class ModelOptions:
    conv_channels: tuple[int, int, int] = (24, 48, 96)
    hidden_sizes: tuple[int, int] = (1200, 600)
    bn_before_activation: bool = False
    dtype: str = "float64"


@dataclass
class PipelineConfig:
    seed: int = 0
    preprocess: bool = True  # off = plain x/65535 scaling, no absent-pixel separation
    train_fraction: float = 1.0  # leading fraction of frames used for training
    threads: Optional[int] = None  # None: BGSNETD_THREADS env var, else 1
    save_probabilities: bool = False
    norm: NormConfig = field(default_factory=NormConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    model: ModelOptions = field(default_factory=ModelOptions)
    synth: Optional[synth.SynthConfig] = None

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")

    def resolved_threads(self) -> int:
        if self.threads is not None:
            return max(1, self.threads)
        return max(1, int(os.environ.get("BGSNETD_THREADS", "1")))

    def model_config(self, patch_size: int) -> ModelConfig:
        return ModelConfig(
            in_channels=2,
            patch_size=patch_size,
            conv_channels=tuple(self.model.conv_channels),
            hidden_sizes=tuple(self.model.hidden_sizes),
            bn_before_activation=self.model.bn_before_activation,
            dtype=self.model.dtype,
        )

    def to_json_dict(self) -> dict:
        def jsonify(value):
            if isinstance(value, dict):
                return {k: jsonify(v) for k, v in value.items()}
            if isinstance(value, (list, tuple)):
                return [jsonify(v) for v in value]
            return value

        return jsonify(dataclasses.asdict(self))

    @classmethod
    def from_json_dict(cls, raw: dict) -> "PipelineConfig":
        """Build a config from the documented JSON schema.

        Unknown keys are rejected. A top-level "seed" seeds every component
        whose section does not set its own.
        """
        raw = dict(raw)
        sections = {
            "norm": NormConfig,
            "sampling": SamplingConfig,
            "train": TrainConfig,
            "infer": InferConfig,
            "model": ModelOptions,
            "synth": synth.SynthConfig,
        }
        kwargs: dict = {}
        seeded_sections: list[tuple[str, dict]] = []
        for name, sub_cls in sections.items():
            sub_raw = raw.pop(name, None)
            if sub_raw is None:
                continue
            if not isinstance(sub_raw, dict):
                raise ValueError(f"config section '{name}' must be an object")
            allowed = {f.name for f in dataclasses.fields(sub_cls)}
            unknown = set(sub_raw) - allowed
            if unknown:
                raise ValueError(f"unknown keys in '{name}': {sorted(unknown)}")
            fixed = dict(sub_raw)
            for key in ("conv_channels", "hidden_sizes", "out_of_range_rect", "backdrop_rect"):
                if isinstance(fixed.get(key), list):
                    fixed[key] = tuple(fixed[key])
            kwargs[name] = sub_cls(**fixed)
            seeded_sections.append((name, sub_raw))

        allowed_top = {f.name for f in dataclasses.fields(cls)} - set(sections)
        unknown = set(raw) - allowed_top
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(raw)
        cfg = cls(**kwargs)
        for name, sub_raw in seeded_sections:
            sub = getattr(cfg, name)
            if hasattr(sub, "seed") and "seed" not in sub_raw:
                sub.seed = cfg.seed
        # Sections left entirely to defaults also inherit the top-level seed.
        for name in ("sampling", "train"):
            if name not in kwargs:
                getattr(cfg, name).seed = cfg.seed
        return cfg


def load_config(path) -> PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    return PipelineConfig.from_json_dict(raw)


def _echo_config(cfg: PipelineConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(cfg.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )


# --- stage results -----------------------------------------------------------


@dataclass
class SynthResult:
    dataset_dir: str
    frames: int
    width: int
    height: int


@dataclass
class ExtractBgResult:
    bg_path: str
    stats_path: str
    stats: dict


@dataclass
class GenDatasetResult:
    dataset_path: str
    samples: int
    foreground_samples: int
    frames_used: int


@dataclass
class TrainResult:
    checkpoint_path: str
    history_path: str
    epochs_run: int
    final_loss: float
    final_accuracy: float


@dataclass
class PredictResult:
    masks_dir: str
    frames_written: int
    probabilities_dir: Optional[str] = None


@dataclass
class EvaluateResult:
    metrics_path: str
    table_path: str
    rows: list[dict]
    evaluated_frames: int


@dataclass
class RunAllResult:
    synth: Optional[SynthResult]
    extract_bg: ExtractBgResult
    gen_dataset: GenDatasetResult
    train: TrainResult
    predict: PredictResult
    evaluate: EvaluateResult


# --- stages ------------------------------------------------------------------


def run_synth(dataset_dir, cfg: PipelineConfig) -> SynthResult:
    if cfg.synth is None:
        raise ValueError("config has no 'synth' section")
    seq = synth.generate(cfg.synth)
    depth_io.save_sequence(seq, dataset_dir)
    return SynthResult(str(dataset_dir), len(seq), seq.width, seq.height)


def run_extract_bg(dataset_dir, out_dir, cfg: PipelineConfig) -> ExtractBgResult:
    out_dir = Path(out_dir)
    _echo_config(cfg, out_dir)
    seq = depth_io.load_sequence(dataset_dir)
    bg = preprocess.extract_background(seq)
    bg_path = out_dir / "bg.pgm"
    depth_io.save_depth_frame(bg, bg_path)

    stats_doc: dict = {"preprocess": cfg.preprocess}
    if cfg.preprocess:
        stats = preprocess.compute_depth_stats(seq)
        stats_doc.update(min_valid=stats.min_valid, max=stats.max, alpha=cfg.norm.alpha)
    stats_path = out_dir / "stats.json"
    stats_path.write_text(json.dumps(stats_doc, indent=2, sort_keys=True) + "\n")
    return ExtractBgResult(str(bg_path), str(stats_path), stats_doc)


def _load_normalizer(out_dir: Path):
    """Read stats.json and return the frame normalizer the run was set up with."""
    stats_path = out_dir / "stats.json"
    if not stats_path.exists():
        raise FileNotFoundError(f"{stats_path}: run extract-bg first")
    doc = json.loads(stats_path.read_text())
    if doc.get("preprocess", True):
        stats = DepthStats(min_valid=doc["min_valid"], max=doc["max"])
        norm_cfg = NormConfig(alpha=doc["alpha"])
        return lambda frame: preprocess.normalize_frame(frame, stats, norm_cfg)
    return preprocess.scale_raw_frame


def _train_frame_count(total: int, train_fraction: float) -> int:
    return total if train_fraction >= 1.0 else max(1, int(round(total * train_fraction)))


def run_gen_dataset(dataset_dir, out_dir, cfg: PipelineConfig) -> GenDatasetResult:
    out_dir = Path(out_dir)
    _echo_config(cfg, out_dir)
    seq = depth_io.load_sequence(dataset_dir)
    normalize = _load_normalizer(out_dir)
    bg = depth_io.load_depth_frame(out_dir / "bg.pgm")
    n_train = _train_frame_count(len(seq), cfg.train_fraction)
    frames_norm = [normalize(f) for f in seq.frames[:n_train]]

    dataset = generate_training_set(
        seq, normalize(bg), frames_norm, cfg.sampling, frame_indices=range(n_train)
    )
    dataset_path = out_dir / "dataset.bgsd"
    save_dataset(dataset, dataset_path)
    return GenDatasetResult(
        str(dataset_path),
        len(dataset),
        int(np.count_nonzero(dataset.labels == 1)),
        n_train,
    )


def run_train(out_dir, cfg: PipelineConfig) -> TrainResult:
    out_dir = Path(out_dir)
    _echo_config(cfg, out_dir)
    dataset_path = out_dir / "dataset.bgsd"
    if not dataset_path.exists():
        raise FileNotFoundError(f"{dataset_path}: run gen-dataset first")
    dataset = load_dataset(dataset_path)
    model, history, state = train(
        dataset, cfg.train, model_config=cfg.model_config(dataset.patch_size)
    )
    checkpoint_path = out_dir / "model.bgsn"
    save_checkpoint(model, state, checkpoint_path)
    history_path = out_dir / "history.csv"
    history_path.write_text(history.to_csv())
    last = history.entries[-1]
    return TrainResult(
        str(checkpoint_path), str(history_path), len(history.entries), last.mean_loss,
        last.accuracy,
    )


def run_predict(dataset_dir, out_dir, cfg: PipelineConfig) -> PredictResult:
    out_dir = Path(out_dir)
    _echo_config(cfg, out_dir)
    checkpoint_path = out_dir / "model.bgsn"
    if not checkpoint_path.exists():
        raise FileNotFoundError(f"{checkpoint_path}: no checkpoint; run train first")
    model, _ = load_checkpoint(checkpoint_path)
    seq = depth_io.load_sequence(dataset_dir)
    normalize = _load_normalizer(out_dir)
    bg_norm = normalize(depth_io.load_depth_frame(out_dir / "bg.pgm"))

    masks_dir = out_dir / "masks"
    probs_dir = out_dir / "probs" if cfg.save_probabilities else None

    def score(k: int) -> None:
        prob, mask = predict_frame(model, normalize(seq.frames[k]), bg_norm, cfg.infer)
        depth_io.save_mask(mask, masks_dir / f"{k:06d}.pgm")
        if probs_dir is not None:
            quantized = np.rint(prob * 65535.0).astype(np.uint16)
            depth_io.save_depth_frame(quantized, probs_dir / f"{k:06d}.pgm")

    n_threads = cfg.resolved_threads()
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(score, range(len(seq))))
    else:
        for k in range(len(seq)):
            score(k)
    return PredictResult(str(masks_dir), len(seq), str(probs_dir) if probs_dir else None)


def run_evaluate(dataset_dir, out_dir, cfg: PipelineConfig) -> EvaluateResult:
    out_dir = Path(out_dir)
    _echo_config(cfg, out_dir)
    seq = depth_io.load_sequence(dataset_dir)
    if seq.gt is None:
        raise ValueError(f"{dataset_dir}: sequence has no ground truth to evaluate against")
    n_train = _train_frame_count(len(seq), cfg.train_fraction)
    eval_frames = range(n_train, len(seq)) if n_train < len(seq) else range(len(seq))

    counts = metrics.ConfusionCounts()
    for k in eval_frames:
        mask = depth_io.load_mask(out_dir / "masks" / f"{k:06d}.pgm")
        counts = counts + metrics.accumulate(mask, seq.gt[k], seq.roi)
    report = metrics.compute_metrics(counts)
    average, _ = metrics.average_reports([report])
    rows = [(seq.name, report), ("average", average)]

    metrics_path = out_dir / "metrics.csv"
    metrics_path.write_text(metrics.reports_to_csv(rows))
    table_path = out_dir / "metrics.txt"
    table_path.write_text(metrics.reports_to_table(rows))
    return EvaluateResult(
        str(metrics_path),
        str(table_path),
        [dict(video=name, **dataclasses.asdict(r)) for name, r in rows],
        len(eval_frames),
    )


def run_all(dataset_dir, out_dir, cfg: PipelineConfig) -> RunAllResult:
    """Synthesize (only if configured and the dataset directory has no depth
    frames yet), then extract-bg, gen-dataset, train, predict, evaluate."""
    dataset_dir = Path(dataset_dir)
    synth_result = None
    if cfg.synth is not None and not (dataset_dir / "depth").is_dir():
        synth_result = run_synth(dataset_dir, cfg)
    return RunAllResult(
        synth=synth_result,
        extract_bg=run_extract_bg(dataset_dir, out_dir, cfg),
        gen_dataset=run_gen_dataset(dataset_dir, out_dir, cfg),
        train=run_train(out_dir, cfg),
        predict=run_predict(dataset_dir, out_dir, cfg),
        evaluate=run_evaluate(dataset_dir, out_dir, cfg),
    )
