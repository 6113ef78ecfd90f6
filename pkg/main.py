"""
spikefront command line.
Feature extraction, training, evaluation, ablation grids, SNR sweeps, gradient
checks and raster inspection; every command that does work is recorded in the
run registry.
"""

import argparse
import asyncio
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv
from pydantic import ValidationError

from audio_io import load_wav, resample
from components.pipeline import SpikingPipeline
from database import get_registry
from datasets import AudioDataset, synthesize_corpus, write_corpus
from evaluation import (
    PRESETS,
    encode_buffer,
    evaluate,
    export_raster,
    fbank_baseline,
    pipeline_features,
    snr_sweep,
    sweep_rows,
    write_results_csv
)
from gradcheck import check_tiny_pipeline
from models import (
    AudioBuffer,
    FeatureKind,
    NeuronKind,
    Precision,
    RunConfig
)
from orchestrator import ExperimentOrchestrator, configure_threads
from serialization import (
    load_pipeline,
    save_pipeline,
    save_raster_npy,
    write_feature_binary,
    write_feature_csv
)
from settings import get_settings, log_level
from training import Trainer, TrainingDivergedError

# Load environment variables
load_dotenv()

# Configure logging; stdout carries only command output
logging.basicConfig(
    level=log_level(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    stream=sys.stderr
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    """Invalid or unresolvable run configuration, with the offending field paths"""

    def __init__(self, fields: Sequence[Tuple[str, str]]):
        self.fields = list(fields)
        super().__init__("; ".join(f"{path}: {message}" for path, message in self.fields))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _set_path(data: Dict[str, Any], dotted: str, value: Any) -> None:
    node = data
    *parents, leaf = dotted.split(".")
    for key in parents:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[leaf] = value


# flag attribute -> RunConfig field
_OVERRIDES = {
    "seed": "seed",
    "threads": "threads",
    "out": "paths.out_dir",
    "precision": "pipeline.precision",
    "manifest": "paths.manifest",
    "test_manifest": "paths.test_manifest",
    "checkpoint": "paths.checkpoint",
    "noise": "paths.noise",
    "epochs": "optimizer.epochs",
    "lr": "optimizer.learning_rate",
    "batch_size": "optimizer.batch_size",
    "feature": "pipeline.frontend.feature",
    "neuron": "pipeline.encoder.neuron",
    "feedback": "pipeline.encoder.use_feedback",
    "inhibition": "pipeline.encoder.use_inhibition",
    "lambda_": "loss.lambda",
    "target_sr": "loss.target_sr",
    "recurrent": "classifier_recurrent",
    "snrs": "evaluation.snrs",
    "seeds": "evaluation.seeds",
}


def read_config_file(path: Path) -> Dict[str, Any]:
    """Parse a JSON config file into a plain dict"""
    if not path.exists():
        raise ConfigError([("config", f"file not found: {path}")])
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError([("config", f"{path}: invalid JSON ({e})")]) from e
    if not isinstance(data, dict):
        raise ConfigError([("config", f"{path}: top level must be an object")])
    return data


def load_run_config(args: argparse.Namespace, require_seed: bool = True) -> RunConfig:
    """
    Layer flags over the config file over built-in defaults.

    Args:
        args: Parsed command line
        require_seed: When False a missing seed defaults to 0

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: Unreadable config file
        ValidationError: Schema violations (including a missing seed)
    """
    data = read_config_file(Path(args.config)) if getattr(args, "config", None) else {}

    # Switching to a neuron without lateral terms drops file-level lateral settings
    neuron = getattr(args, "neuron", None)
    if neuron is not None and neuron != NeuronKind.IHC_LIF.value:
        encoder = data.get("pipeline", {}).get("encoder", {})
        if getattr(args, "feedback", None) is None:
            encoder.pop("use_feedback", None)
        if getattr(args, "inhibition", None) is None:
            encoder.pop("use_inhibition", None)

    for attr, field in _OVERRIDES.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if field == "classifier_recurrent":
            if value:
                _set_path(data, "pipeline.classifier.recurrent", True)
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, list):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        _set_path(data, field, value)

    settings = get_settings()
    data.setdefault("paths", {}).setdefault("out_dir", str(settings.out_dir))
    data.setdefault("threads", settings.threads)
    if not require_seed:
        data.setdefault("seed", 0)

    return RunConfig.model_validate(data)


# command -> RunConfig path fields that must name existing files
_REQUIRED_PATHS = {
    "eval": ("paths.checkpoint",),
    "sweep-snr": ("paths.checkpoint",),
}


def validate_paths(command: str, config: RunConfig, args: argparse.Namespace) -> None:
    """
    Check that every path the command reads resolves before any work starts.

    Raises:
        ConfigError: Listing each missing or unresolvable path
    """
    problems: List[Tuple[str, str]] = []
    paths = config.paths

    for field in _REQUIRED_PATHS.get(command, ()):
        value = getattr(paths, field.split(".")[1])
        if value is None:
            problems.append((field, "required for this command"))

    for name in ("manifest", "test_manifest", "checkpoint"):
        value = getattr(paths, name)
        if value is not None and not value.exists():
            problems.append((f"paths.{name}", f"file not found: {value}"))

    for i, noise in enumerate(paths.noise):
        if not noise.exists():
            problems.append((f"paths.noise.{i}", f"file not found: {noise}"))

    wav = getattr(args, "wav", None)
    if wav is not None and not Path(wav).exists():
        problems.append(("wav", f"file not found: {wav}"))
    for i, checkpoint in enumerate(getattr(args, "checkpoints", None) or []):
        if not Path(checkpoint).exists():
            problems.append((f"checkpoints.{i}", f"file not found: {checkpoint}"))

    if command == "eval" and args.snr is not None and not math.isinf(args.snr) and not paths.noise:
        problems.append(("paths.noise", "a noise file is required for a finite SNR"))
    if command == "sweep-snr" and not paths.noise and any(not math.isinf(s) for s in config.evaluation.snrs):
        problems.append(("paths.noise", "a noise file is required for finite SNRs"))

    if problems:
        raise ConfigError(problems)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _check_classes(dataset: AudioDataset, n_classes: int, field: str = "pipeline.classifier.n_classes") -> None:
    if dataset.n_classes != n_classes:
        raise ConfigError([(field, f"classifier has {n_classes} classes but the data has {dataset.n_classes}")])


def load_train_set(config: RunConfig) -> AudioDataset:
    """Training manifest, or the synthetic training split when none is given"""
    rate = config.pipeline.frontend.sample_rate
    if config.paths.manifest is not None:
        return AudioDataset.from_manifest(
            config.paths.manifest, rate, config.data.clip_seconds, normalize=config.data.normalize_peak
        )
    return synthesize_corpus(
        n_classes=config.data.synthetic_classes,
        per_class=config.data.synthetic_train_per_class,
        seed=config.data.synthetic_train_seed,
        sample_rate=rate,
        duration=config.data.clip_seconds
    )


def load_test_set(config: RunConfig, class_names: Optional[Sequence[str]] = None) -> Optional[AudioDataset]:
    """
    Test manifest in the given class order, the synthetic test split when no
    manifest is configured at all, or None for a train manifest without a test one.
    """
    rate = config.pipeline.frontend.sample_rate
    if config.paths.test_manifest is not None:
        return AudioDataset.from_manifest(
            config.paths.test_manifest,
            rate,
            config.data.clip_seconds,
            class_names=class_names,
            normalize=config.data.normalize_peak
        )
    if config.paths.manifest is not None:
        return None
    return synthesize_corpus(
        n_classes=config.data.synthetic_classes,
        per_class=config.data.synthetic_test_per_class,
        seed=config.data.synthetic_test_seed,
        sample_rate=rate,
        duration=config.data.clip_seconds
    )


def load_noises(config: RunConfig, sample_rate: int) -> List[AudioBuffer]:
    return [resample(load_wav(path), sample_rate) for path in config.paths.noise]


def load_utterance(path: Path, sample_rate: int, min_samples: int, normalize: bool = False) -> AudioBuffer:
    """One WAV at the pipeline's rate, long enough for a single frame"""
    buf = resample(load_wav(path, normalize=normalize), sample_rate)
    if len(buf) < min_samples:
        raise ValueError(f"{path}: {len(buf)} samples is shorter than one {min_samples}-sample frame")
    return buf


def _pipeline_for(config: RunConfig, checkpoint: Optional[Path]) -> Tuple[SpikingPipeline, Dict[str, Any]]:
    if checkpoint is not None:
        return load_pipeline(checkpoint)
    return SpikingPipeline(config.pipeline, config.seed), {}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_encode(config: RunConfig, args: argparse.Namespace) -> Dict[str, Any]:
    """
    Features and encoder spikes of one WAV.
    Writes <stem>_raster.csv, <stem>_features.csv, <stem>_features.bin and
    <stem>_raster.npy; the result is the stats line.
    """
    pipeline, _ = _pipeline_for(config, config.paths.checkpoint)
    frontend = pipeline.config.frontend
    buf = load_utterance(Path(args.wav), frontend.sample_rate, frontend.pool_window, config.data.normalize_peak)

    features = pipeline_features(pipeline, buf)
    spikes = encode_buffer(pipeline, buf)
    out_dir = config.paths.out_dir
    stem = Path(args.wav).stem
    export_raster(spikes, features, out_dir, stem)
    write_feature_binary(features, out_dir / f"{stem}_features.bin")
    save_raster_npy(spikes, out_dir / f"{stem}_raster.npy")

    return {"T": spikes.n_steps, "N": spikes.n_channels, "firing_rate": spikes.firing_rate}


def cmd_train(config: RunConfig, args: argparse.Namespace) -> Dict[str, Any]:
    train_set = load_train_set(config)
    _check_classes(train_set, config.pipeline.classifier.n_classes)
    test_set = load_test_set(config, train_set.class_names)

    out_dir = config.paths.out_dir
    report_path = out_dir / "train_report.jsonl"
    report_path.unlink(missing_ok=True)

    pipeline = SpikingPipeline(config.pipeline, config.seed)
    trainer = Trainer(pipeline, config.loss, config.optimizer, config.seed, report_path=report_path)
    reports = trainer.fit(train_set)

    checkpoint = save_pipeline(
        out_dir / "model.ckpt",
        pipeline,
        extra={
            "class_names": train_set.class_names,
            "lambda": config.loss.lambda_,
            "target_sr": config.loss.target_sr,
        }
    )
    final = reports[-1].model_dump(exclude={"wall_clock_seconds"})
    result: Dict[str, Any] = {"checkpoint": str(checkpoint), "epochs": len(reports), "final": final, "test": None}

    if test_set is not None:
        evaluation = evaluate(pipeline, test_set, config.evaluation.batch_size, seed=config.seed)
        _write_json(out_dir / "eval.json", evaluation.model_dump())
        result["test"] = evaluation.model_dump()
    return result


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> Dict[str, Any]:
    pipeline, metadata = load_pipeline(config.paths.checkpoint)
    test_set = load_test_set(config, metadata.get("class_names"))
    if test_set is None:
        raise ConfigError([("paths.test_manifest", "required when a training manifest is configured")])
    _check_classes(test_set, pipeline.config.classifier.n_classes, "paths.test_manifest")

    snr = args.snr if args.snr is not None else math.inf
    if not math.isinf(snr):
        noises = load_noises(config, test_set.sample_rate)
        test_set = test_set.with_noise(noises, snr, config.seed)

    result = evaluate(
        pipeline,
        test_set,
        config.evaluation.batch_size,
        snr_db=None if math.isinf(snr) else snr,
        seed=config.seed
    )
    _write_json(config.paths.out_dir / "eval.json", result.model_dump())
    return result.model_dump()


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> Dict[str, Any]:
    pipeline, metadata = load_pipeline(config.paths.checkpoint)
    test_set = load_test_set(config, metadata.get("class_names"))
    if test_set is None:
        raise ConfigError([("paths.test_manifest", "required when a training manifest is configured")])
    _check_classes(test_set, pipeline.config.classifier.n_classes, "paths.test_manifest")

    noises = load_noises(config, test_set.sample_rate)
    results = snr_sweep(
        pipeline,
        test_set,
        config.evaluation.snrs,
        noises,
        config.evaluation.seeds,
        config.evaluation.batch_size
    )
    rows = sweep_rows(pipeline.config, results, use_lsr=float(metadata.get("lambda", 0.0)) > 0)
    csv_path = write_results_csv(rows, config.paths.out_dir / "snr_sweep.csv")
    return {"csv": str(csv_path), "rows": [row.csv_row() for row in rows]}


async def cmd_ablate(
    config: RunConfig,
    args: argparse.Namespace,
    orchestrator: ExperimentOrchestrator
) -> Dict[str, Any]:
    train_set = load_train_set(config)
    _check_classes(train_set, config.pipeline.classifier.n_classes)
    test_set = load_test_set(config, train_set.class_names)
    if test_set is None:
        raise ConfigError([("paths.test_manifest", "required when a training manifest is configured")])

    rows = await orchestrator.run_ablation(
        PRESETS[args.preset],
        config.evaluation.seeds,
        config.pipeline,
        config.loss,
        config.optimizer,
        train_set,
        test_set,
        config.evaluation.batch_size
    )
    csv_path = write_results_csv(rows, config.paths.out_dir / "ablation.csv")
    return {"csv": str(csv_path), "preset": args.preset, "rows": [row.csv_row() for row in rows]}


def cmd_gradcheck(config: RunConfig, args: argparse.Namespace) -> Dict[str, Any]:
    report, runtime = check_tiny_pipeline(
        seed=config.seed,
        epsilon=args.epsilon,
        tolerance=args.tolerance
    )
    logger.info(f"Gradient check finished in {runtime:.2f}s")
    _write_json(config.paths.out_dir / "gradcheck.json", report.model_dump())
    return {
        "max_relative_error": report.max_relative_error,
        "passed": report.passed,
        "tolerance": report.tolerance,
        "worst_parameter": report.worst_parameter,
    }


def cmd_inspect(config: RunConfig, args: argparse.Namespace) -> Dict[str, Any]:
    """
    Side-by-side material for one WAV: fixed fbank features plus, for each
    checkpoint (or the seeded initial pipeline when none is given), the
    encoder raster, its input features and the firing rate.
    """
    wav = Path(args.wav)
    stem = wav.stem
    out_dir = config.paths.out_dir
    frontend = config.pipeline.frontend

    utterance = load_utterance(wav, frontend.sample_rate, frontend.pool_window, config.data.normalize_peak)
    fbank = fbank_baseline(utterance, frontend)
    fbank_path = write_feature_csv(fbank, out_dir / f"{stem}_fbank.csv")

    sources: List[Tuple[str, Optional[Path]]] = [
        (Path(checkpoint).stem, Path(checkpoint)) for checkpoint in (args.checkpoints or [])
    ] or [("init", None)]

    variants = []
    for label, checkpoint in sources:
        pipeline, _ = _pipeline_for(config, checkpoint)
        pipeline_frontend = pipeline.config.frontend
        buf = load_utterance(
            wav, pipeline_frontend.sample_rate, pipeline_frontend.pool_window, config.data.normalize_peak
        )
        spikes = encode_buffer(pipeline, buf)
        paths = export_raster(spikes, pipeline_features(pipeline, buf), out_dir, f"{stem}_{label}")
        npy = save_raster_npy(spikes, out_dir / f"{stem}_{label}_raster.npy")
        variants.append({
            "label": label,
            "checkpoint": str(checkpoint) if checkpoint else None,
            "T": spikes.n_steps,
            "N": spikes.n_channels,
            "firing_rate": spikes.firing_rate,
            "raster": str(paths["raster"]),
            "raster_npy": str(npy),
            "features": str(paths["features"]),
        })
    return {"fbank": str(fbank_path), "variants": variants}


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> Dict[str, Any]:
    """Write the synthetic train and test splits as WAVs plus manifests"""
    rate = config.pipeline.frontend.sample_rate
    out_dir = config.paths.out_dir
    manifests = {}
    for split, per_class, seed in (
        ("train", config.data.synthetic_train_per_class, config.data.synthetic_train_seed),
        ("test", config.data.synthetic_test_per_class, config.data.synthetic_test_seed),
    ):
        corpus = synthesize_corpus(
            n_classes=config.data.synthetic_classes,
            per_class=per_class,
            seed=seed,
            sample_rate=rate,
            duration=config.data.clip_seconds
        )
        manifests[split] = str(write_corpus(corpus, out_dir, f"{split}.tsv"))
    return {"manifests": manifests, "classes": config.data.synthetic_classes}


# command -> (handler, handler takes the orchestrator)
COMMANDS: Dict[str, Tuple[Callable[..., Any], bool]] = {
    "encode": (cmd_encode, False),
    "train": (cmd_train, False),
    "eval": (cmd_eval, False),
    "sweep-snr": (cmd_sweep, False),
    "ablate": (cmd_ablate, True),
    "gradcheck": (cmd_gradcheck, False),
    "inspect": (cmd_inspect, False),
    "synth": (cmd_synth, False),
}


async def cmd_runs(args: argparse.Namespace) -> Dict[str, Any]:
    """Recent registry entries and statistics"""
    registry = get_registry()
    await registry.initialize()
    limit = min(max(args.limit, 1), 100)
    orchestrator = ExperimentOrchestrator(registry)
    return {
        "runs": await orchestrator.get_recent_runs(limit),
        "statistics": await registry.get_statistics(),
    }


async def dispatch(args: argparse.Namespace) -> int:
    """Run one parsed command and print its JSON result on stdout"""
    if args.command == "schema":
        print(json.dumps(RunConfig.model_json_schema(by_alias=True), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "runs":
        print(json.dumps(await cmd_runs(args), sort_keys=True))
        return EXIT_OK

    config = load_run_config(args, require_seed=args.command != "synth")
    validate_paths(args.command, config, args)
    configure_threads(config.threads)
    config.paths.out_dir.mkdir(parents=True, exist_ok=True)

    registry = get_registry()
    await registry.initialize()
    orchestrator = ExperimentOrchestrator(
        registry, max_workers=getattr(args, "workers", None) or 1, threads=config.threads
    )

    handler, wants_orchestrator = COMMANDS[args.command]
    if wants_orchestrator:
        job = lambda: handler(config, args, orchestrator)  # noqa: E731
    else:
        job = lambda: handler(config, args)  # noqa: E731

    result = await orchestrator.run(args.command, config.model_dump(mode="json", by_alias=True), job)
    print(json.dumps(result, sort_keys=True))

    if args.command == "gradcheck" and not result["passed"]:
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (see CONFIG.md)")
    common.add_argument("--seed", type=int, help="Seed of the run (required here or in --config)")
    common.add_argument("--threads", type=int, help="Intra-op threads; 1 is bit-reproducible")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--precision", choices=[p.value for p in Precision])

    pipeline = argparse.ArgumentParser(add_help=False)
    pipeline.add_argument("--feature", choices=[f.value for f in FeatureKind])
    pipeline.add_argument("--neuron", choices=[n.value for n in NeuronKind], help="Encoder neuron")
    pipeline.add_argument("--feedback", action=argparse.BooleanOptionalAction, help="Lateral feedback I_f")
    pipeline.add_argument("--inhibition", action=argparse.BooleanOptionalAction, help="Lateral inhibition I_LI")
    pipeline.add_argument("--recurrent", action="store_true", default=None, help="Recurrent classifier layers")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--manifest", type=Path, help="Training manifest (path<TAB>label)")
    data.add_argument("--test-manifest", type=Path, help="Test manifest (path<TAB>label)")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--epochs", type=int)
    training.add_argument("--lr", type=float, help="Learning rate")
    training.add_argument("--batch-size", type=int)
    training.add_argument("--lambda", dest="lambda_", type=float, help="Spike-rate penalty coefficient")
    training.add_argument("--target-sr", type=float, help="Expected spike rate SR")

    parser = argparse.ArgumentParser(
        prog="spikefront",
        description="Learnable Gabor/PCEN front-end with IHC-LIF spiking encoders"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    encode = sub.add_parser("encode", parents=[common, pipeline], help="Features and spike raster of one WAV")
    encode.add_argument("--wav", type=Path, required=True)
    encode.add_argument("--checkpoint", type=Path, help="Trained pipeline (default: seeded initial weights)")

    sub.add_parser("train", parents=[common, pipeline, data, training], help="Train a pipeline end to end")

    evaluate_cmd = sub.add_parser("eval", parents=[common, data], help="Accuracy and firing rate of a checkpoint")
    evaluate_cmd.add_argument("--checkpoint", type=Path)
    evaluate_cmd.add_argument("--snr", type=float, help="Evaluate under noise at this SNR in dB (default: clean)")
    evaluate_cmd.add_argument("--noise", type=Path, action="append", help="Noise WAV; repeat for several")

    sweep = sub.add_parser("sweep-snr", parents=[common, data], help="Accuracy of a checkpoint across SNRs")
    sweep.add_argument("--checkpoint", type=Path)
    sweep.add_argument("--snrs", type=float, nargs="+", help="SNRs in dB; 'inf' is clean")
    sweep.add_argument("--seeds", type=int, nargs="+", help="Noise crop seeds")
    sweep.add_argument("--noise", type=Path, action="append", help="Noise WAV; repeat for several")

    ablate = sub.add_parser("ablate", parents=[common, pipeline, data, training], help="Train and evaluate a preset grid")
    ablate.add_argument("--preset", choices=sorted(PRESETS), default="ablation")
    ablate.add_argument("--seeds", type=int, nargs="+", help="Seeds shared by every grid row")
    ablate.add_argument("--workers", type=int, default=1, help="Processes for grid cells")

    gradcheck = sub.add_parser("gradcheck", parents=[common], help="Finite-difference check of the tiny pipeline")
    gradcheck.add_argument("--epsilon", type=float, default=1e-4)
    gradcheck.add_argument("--tolerance", type=float, default=1e-3)

    inspect_cmd = sub.add_parser("inspect", parents=[common], help="Fbank features and rasters of one WAV")
    inspect_cmd.add_argument("--wav", type=Path, required=True)
    inspect_cmd.add_argument(
        "--checkpoint", dest="checkpoints", type=Path, action="append",
        help="Checkpoint to compare; repeat for several"
    )

    sub.add_parser("synth", parents=[common], help="Write the synthetic corpus as WAVs plus manifests")

    runs = sub.add_parser("runs", help="Recent runs and registry statistics")
    runs.add_argument("--limit", type=int, default=10)

    sub.add_parser("schema", help="Print the JSON schema of the run configuration")
    return parser


def _error_payload(kind: str, message: str, fields: Sequence[Dict[str, str]] = ()) -> Dict[str, Any]:
    return {"error": kind, "message": message, "fields": list(fields)}


def _emit_error(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point.

    Returns:
        0 on success, 2 for configuration errors, 1 for runtime errors
    """
    args = build_parser().parse_args(argv)
    try:
        return asyncio.run(dispatch(args))

    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        fields = [{"path": path, "message": message} for path, message in e.fields]
        _emit_error(_error_payload("config", str(e), fields))
        return EXIT_CONFIG

    except ValidationError as e:
        logger.error(f"Invalid configuration: {e.error_count()} error(s)")
        fields = [
            {"path": ".".join(str(part) for part in err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        _emit_error(_error_payload("validation", f"{e.error_count()} configuration error(s)", fields))
        return EXIT_CONFIG

    except TrainingDivergedError as e:
        logger.error(f"Training diverged: {e}", exc_info=True)
        payload = _error_payload("diverged", str(e))
        payload["diagnostics"] = e.diagnostics
        _emit_error(payload)
        return EXIT_RUNTIME

    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        _emit_error(_error_payload(type(e).__name__, str(e)))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
