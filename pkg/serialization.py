"""
On-disk formats: the checkpoint container, feature dumps and dense rasters.
Byte layouts are documented in FORMATS.md.
"""

import csv
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch

from components.pipeline import SpikingPipeline
from models import PipelineConfig, Spectrogram, SpikeTrain

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_HEADER_LEN = struct.Struct("<Q")
_FEATURE_HEADER = struct.Struct("<II")
_F32 = np.dtype("<f4")


def save_checkpoint(
    path: PathLike,
    tensors: Dict[str, torch.Tensor],
    metadata: Optional[Dict[str, Any]] = None
) -> Path:
    """
    Write named tensors as little-endian f32 with a JSON header.

    Layout: u64 LE header length, UTF-8 JSON header
    {"__metadata__": {...}, name: {"dtype": "F32", "shape": [...], "data_offsets": [begin, end]}},
    then the concatenated tensor bytes in name order.

    Args:
        path: Destination file
        tensors: Name -> tensor
        metadata: JSON-serializable metadata

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    header: Dict[str, Any] = {"__metadata__": metadata or {}}
    chunks = []
    offset = 0
    for name in sorted(tensors):
        array = tensors[name].detach().cpu().numpy().astype(_F32)
        data = np.ascontiguousarray(array).tobytes()
        header[name] = {
            "dtype": "F32",
            "shape": list(array.shape),
            "data_offsets": [offset, offset + len(data)]
        }
        chunks.append(data)
        offset += len(data)

    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with path.open("wb") as f:
        f.write(_HEADER_LEN.pack(len(header_bytes)))
        f.write(header_bytes)
        for chunk in chunks:
            f.write(chunk)
    logger.debug(f"Saved {len(tensors)} tensors to {path}")
    return path


def load_checkpoint(path: PathLike) -> Tuple[Dict[str, torch.Tensor], Dict[str, Any]]:
    """
    Read a checkpoint written by save_checkpoint.

    Returns:
        (name -> float32 tensor, metadata)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER_LEN.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    (header_len,) = _HEADER_LEN.unpack_from(raw, 0)
    start = _HEADER_LEN.size + header_len
    if start > len(raw):
        raise ValueError(f"{path}: header length {header_len} exceeds file size")
    header = json.loads(raw[_HEADER_LEN.size:start].decode("utf-8"))
    metadata = header.pop("__metadata__", {})

    tensors = {}
    for name, entry in header.items():
        if entry.get("dtype") != "F32":
            raise ValueError(f"{path}: tensor {name} has unsupported dtype {entry.get('dtype')}")
        begin, end = entry["data_offsets"]
        if start + end > len(raw):
            raise ValueError(f"{path}: tensor {name} runs past the end of the file")
        array = np.frombuffer(raw, dtype=_F32, count=(end - begin) // 4, offset=start + begin)
        tensors[name] = torch.from_numpy(array.reshape(entry["shape"]).astype(np.float32))
    return tensors, metadata


def save_pipeline(path: PathLike, pipeline: SpikingPipeline, extra: Optional[Dict[str, Any]] = None) -> Path:
    """Checkpoint a pipeline with the config needed to rebuild it"""
    metadata = {
        "format": "spikefront",
        "pipeline": pipeline.config.model_dump(mode="json"),
        "seed": pipeline.seed,
    }
    metadata.update(extra or {})
    return save_checkpoint(path, pipeline.state_dict(), metadata)


def load_pipeline(path: PathLike) -> Tuple[SpikingPipeline, Dict[str, Any]]:
    """
    Rebuild a pipeline from its checkpoint.

    Returns:
        (pipeline with loaded weights, metadata)
    """
    tensors, metadata = load_checkpoint(path)
    if "pipeline" not in metadata:
        raise ValueError(f"{path}: checkpoint carries no pipeline config")
    config = PipelineConfig.model_validate(metadata["pipeline"])
    pipeline = SpikingPipeline(config, metadata.get("seed", 0))
    expected = pipeline.state_dict()
    missing = sorted(set(expected) - set(tensors))
    unexpected = sorted(set(tensors) - set(expected))
    if missing or unexpected:
        raise ValueError(f"{path}: checkpoint does not match its pipeline (missing {missing}, unexpected {unexpected})")
    for name, tensor in tensors.items():
        if tuple(tensor.shape) != tuple(expected[name].shape):
            raise ValueError(
                f"{path}: {name} has shape {tuple(tensor.shape)}, pipeline expects {tuple(expected[name].shape)}"
            )
    pipeline.load_state_dict({name: t.to(expected[name].dtype) for name, t in tensors.items()})
    logger.info(f"Loaded pipeline from {path}")
    return pipeline, metadata


def write_feature_csv(features: Spectrogram, path: PathLike) -> Path:
    """CSV `frame,channel,value`, one row per entry in row-major order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = features.values.detach().cpu().double().numpy()
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["frame", "channel", "value"])
        for t in range(values.shape[0]):
            for n in range(values.shape[1]):
                writer.writerow([t, n, repr(float(values[t, n]))])
    return path


def write_feature_binary(features: Spectrogram, path: PathLike) -> Path:
    """u32 LE T, u32 LE N, then T*N little-endian f32 in row-major order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = features.values.detach().cpu().numpy().astype(_F32)
    with path.open("wb") as f:
        f.write(_FEATURE_HEADER.pack(*values.shape))
        f.write(np.ascontiguousarray(values).tobytes())
    return path


def read_feature_binary(path: PathLike) -> torch.Tensor:
    """Inverse of write_feature_binary; returns float32 [T, N]"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"feature dump not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _FEATURE_HEADER.size:
        raise ValueError(f"{path}: truncated feature header")
    n_frames, n_channels = _FEATURE_HEADER.unpack_from(raw, 0)
    expected = _FEATURE_HEADER.size + 4 * n_frames * n_channels
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for [{n_frames} x {n_channels}], got {len(raw)}")
    array = np.frombuffer(raw, dtype=_F32, offset=_FEATURE_HEADER.size).reshape(n_frames, n_channels)
    return torch.from_numpy(array.astype(np.float32))


def save_raster_npy(spikes: SpikeTrain, path: PathLike) -> Path:
    """Dense raster as a uint8 [T, N] .npy array"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, spikes.spikes.detach().cpu().numpy().astype(np.uint8), allow_pickle=False)
    return path


def load_raster_npy(path: PathLike) -> SpikeTrain:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"raster not found: {path}")
    array = np.load(path, allow_pickle=False)
    return SpikeTrain(spikes=torch.from_numpy(array.astype(np.float64)))
