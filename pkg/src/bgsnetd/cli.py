"""Command-line client for the pipeline.

Commands run in-process by default; with --server URL the same request is
sent to a running bgsnetd HTTP service instead. Configuration comes from a
JSON file (--config) and individual flags override their JSON fields;
--set key=value reaches any field by dotted path.

On failure every command prints exactly one line, "bgsnetd: error: <message>",
to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import pipeline

# argparse destination -> dotted config path
_FLAG_FIELDS = {
    "seed": "seed",
    "threads": "threads",
    "train_fraction": "train_fraction",
    "alpha": "norm.alpha",
    "patch_size": "sampling.patch_size",
    "stride": "sampling.stride",
    "max_samples": "sampling.max_samples_per_frame",
    "balance": "sampling.fg_bg_balance",
    "lr": "train.learning_rate",
    "batch_size": "train.batch_size",
    "epochs": "train.epochs",
    "threshold": "infer.threshold",
    "pixel_batch": "infer.pixel_batch",
}

# command -> (pipeline function, needs dataset dir, needs out dir)
_COMMANDS = {
    "synth": (pipeline.run_synth, True, False),
    "extract-bg": (pipeline.run_extract_bg, True, True),
    "gen-dataset": (pipeline.run_gen_dataset, True, True),
    "train": (pipeline.run_train, False, True),
    "predict": (pipeline.run_predict, True, True),
    "evaluate": (pipeline.run_evaluate, True, True),
    "run-all": (pipeline.run_all, True, True),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bgsnetd",
        description="Depth-video background subtraction: synthesize, preprocess, "
        "train, predict, and evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--dataset", help="sequence directory (depth/, gt/, ROI.pgm)")
    common.add_argument("--out", help="output directory for pipeline artifacts")
    common.add_argument("--server", metavar="URL", help="send the command to a running service")
    common.add_argument("--json", action="store_true", help="print the result record as JSON")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        dest="overrides", help="override any config field by dotted path")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--train-fraction", type=float, dest="train_fraction")
    common.add_argument("--alpha", type=float)
    common.add_argument("--patch-size", type=int, dest="patch_size")
    common.add_argument("--stride", type=int)
    common.add_argument("--max-samples", type=int, dest="max_samples")
    common.add_argument("--balance", type=float)
    common.add_argument("--lr", type=float)
    common.add_argument("--batch-size", type=int, dest="batch_size")
    common.add_argument("--epochs", type=int)
    common.add_argument("--threshold", type=float)
    common.add_argument("--pixel-batch", type=int, dest="pixel_batch")
    common.add_argument("--no-preprocess", action="store_true",
                        help="plain x/65535 scaling instead of the depth normalization")
    common.add_argument("--save-probabilities", action="store_true",
                        help="also write probability maps as 16-bit PGMs")

    for name in _COMMANDS:
        sub.add_parser(name, parents=[common])

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _set_path(raw: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ValueError(f"cannot override '{dotted}': '{key}' is not an object")
    node[keys[-1]] = value


def _effective_config(args) -> dict:
    raw = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        raw = json.loads(path.read_text())
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: top-level config must be a JSON object")
    for dest, dotted in _FLAG_FIELDS.items():
        value = getattr(args, dest)
        if value is not None:
            _set_path(raw, dotted, value)
    if args.no_preprocess:
        raw["preprocess"] = False
    if args.save_probabilities:
        raw["save_probabilities"] = True
    for item in args.overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got '{item}'")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        _set_path(raw, key.strip(), value)
    return raw


def _require(value, flag: str):
    if not value:
        raise ValueError(f"missing required option {flag}")
    return value


def _run_remote(args, raw_cfg: dict) -> dict:
    import httpx

    body = {"dataset_dir": args.dataset, "out_dir": args.out, "config": raw_cfg}
    url = args.server.rstrip("/") + "/v1/" + args.command
    response = httpx.post(url, json=body, timeout=None)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise RuntimeError(f"server returned {response.status_code}: {detail}")
    return response.json()


def _run_local(args, raw_cfg: dict) -> dict:
    cfg = pipeline.PipelineConfig.from_json_dict(raw_cfg)
    fn, needs_dataset, needs_out = _COMMANDS[args.command]
    call = []
    if needs_dataset:
        call.append(_require(args.dataset, "--dataset"))
    if needs_out:
        call.append(_require(args.out, "--out"))
    result = fn(*call, cfg)
    return dataclasses.asdict(result)


def _summarize(command: str, result: dict) -> str:
    if command == "synth":
        return f"wrote {result['frames']} frames to {result['dataset_dir']}"
    if command == "extract-bg":
        return f"wrote {result['bg_path']} and {result['stats_path']}"
    if command == "gen-dataset":
        return (f"wrote {result['dataset_path']}: {result['samples']} samples "
                f"({result['foreground_samples']} foreground)")
    if command == "train":
        return (f"wrote {result['checkpoint_path']} after {result['epochs_run']} epochs "
                f"(loss {result['final_loss']:.4f}, accuracy {result['final_accuracy']:.4f})")
    if command == "predict":
        return f"wrote {result['frames_written']} masks to {result['masks_dir']}"
    if command == "evaluate":
        return Path(result["table_path"]).read_text().rstrip()
    lines = [
        _summarize(stage, result[stage.replace("-", "_")])
        for stage in ("extract-bg", "gen-dataset", "train", "predict", "evaluate")
    ]
    if result.get("synth"):
        lines.insert(0, _summarize("synth", result["synth"]))
    return "\n".join(lines)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    try:
        raw_cfg = _effective_config(args)
        result = _run_remote(args, raw_cfg) if args.server else _run_local(args, raw_cfg)
    except Exception as exc:  # single-line, machine-parseable failure contract
        message = " ".join(str(exc).split()) or exc.__class__.__name__
        print(f"bgsnetd: error: {message}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2) if args.json else _summarize(args.command, result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
