"""
Tests for the checkpoint container, feature dumps and raster arrays.
"""

import json
import struct

import numpy as np
import pytest
import torch

from components.pipeline import SpikingPipeline
from models import Spectrogram, SpikeTrain
from serialization import (
    load_checkpoint,
    load_pipeline,
    load_raster_npy,
    read_feature_binary,
    save_checkpoint,
    save_pipeline,
    save_raster_npy,
    write_feature_binary,
    write_feature_csv
)


@pytest.mark.unit
class TestCheckpoint:
    """Test the length-prefixed JSON header + f32 payload layout"""

    def test_layout(self, tmp_path):
        path = save_checkpoint(
            tmp_path / "c.ckpt",
            {"b": torch.tensor([1.5, -2.0]), "a": torch.tensor([[0.25]])},
            {"seed": 3}
        )
        raw = path.read_bytes()
        (header_len,) = struct.unpack_from("<Q", raw, 0)
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
        assert header["__metadata__"] == {"seed": 3}
        assert header["a"] == {"dtype": "F32", "shape": [1, 1], "data_offsets": [0, 4]}
        assert header["b"] == {"dtype": "F32", "shape": [2], "data_offsets": [4, 12]}
        payload = np.frombuffer(raw[8 + header_len:], dtype="<f4")
        assert payload.tolist() == [0.25, 1.5, -2.0]

    def test_round_trip(self, tmp_path):
        tensors = {"w": torch.arange(6, dtype=torch.float64).reshape(2, 3) / 7}
        save_checkpoint(tmp_path / "c.ckpt", tensors, {"note": "x"})
        loaded, metadata = load_checkpoint(tmp_path / "c.ckpt")
        assert metadata == {"note": "x"}
        assert loaded["w"].dtype == torch.float32
        assert torch.equal(loaded["w"], tensors["w"].float())

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "none.ckpt")

    def test_truncated(self, tmp_path):
        path = save_checkpoint(tmp_path / "c.ckpt", {"w": torch.ones(4)})
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ValueError, match="past the end"):
            load_checkpoint(path)

    def test_bad_header_length(self, tmp_path):
        path = tmp_path / "c.ckpt"
        path.write_bytes(struct.pack("<Q", 1000) + b"{}")
        with pytest.raises(ValueError):
            load_checkpoint(path)


@pytest.mark.unit
class TestPipelineCheckpoint:
    """Test rebuilding a pipeline from its checkpoint"""

    def test_round_trip(self, tmp_path, small_pipeline_config):
        pipeline = SpikingPipeline(small_pipeline_config, seed=4)
        save_pipeline(tmp_path / "model.ckpt", pipeline, {"class_names": ["a", "b"]})
        loaded, metadata = load_pipeline(tmp_path / "model.ckpt")

        assert metadata["format"] == "spikefront"
        assert metadata["seed"] == 4
        assert metadata["class_names"] == ["a", "b"]
        assert loaded.config == pipeline.config
        original = pipeline.state_dict()
        for name, value in loaded.state_dict().items():
            assert value.dtype == torch.float64
            assert torch.equal(value, original[name].float().double()), name

    def test_shape_mismatch(self, tmp_path, small_pipeline_config):
        pipeline = SpikingPipeline(small_pipeline_config, seed=0)
        tensors = dict(pipeline.state_dict())
        tensors["classifier.readout.bias"] = torch.zeros(5)
        save_checkpoint(tmp_path / "bad.ckpt", tensors, {"pipeline": pipeline.config.model_dump(mode="json")})
        with pytest.raises(ValueError, match="shape"):
            load_pipeline(tmp_path / "bad.ckpt")

    def test_missing_tensor(self, tmp_path, small_pipeline_config):
        pipeline = SpikingPipeline(small_pipeline_config, seed=0)
        tensors = dict(pipeline.state_dict())
        tensors.pop("encoder.weight")
        save_checkpoint(tmp_path / "bad.ckpt", tensors, {"pipeline": pipeline.config.model_dump(mode="json")})
        with pytest.raises(ValueError, match="missing"):
            load_pipeline(tmp_path / "bad.ckpt")

    def test_no_config(self, tmp_path):
        save_checkpoint(tmp_path / "bare.ckpt", {"w": torch.ones(1)})
        with pytest.raises(ValueError, match="pipeline config"):
            load_pipeline(tmp_path / "bare.ckpt")


@pytest.mark.unit
class TestFeatureDumps:
    """Test the CSV and binary feature formats"""

    def test_binary_layout(self, tmp_path):
        values = torch.tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], dtype=torch.float64)
        path = write_feature_binary(Spectrogram(values=values, frame_hop=160), tmp_path / "f.bin")
        raw = path.read_bytes()
        assert len(raw) == 8 + 4 * 6
        assert struct.unpack_from("<II", raw, 0) == (2, 3)
        assert np.frombuffer(raw[8:], dtype="<f4").tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        assert torch.equal(read_feature_binary(path), values.float())

    def test_binary_size_checked(self, tmp_path):
        path = tmp_path / "f.bin"
        path.write_bytes(struct.pack("<II", 2, 2) + b"\x00" * 8)
        with pytest.raises(ValueError):
            read_feature_binary(path)

    def test_csv_rows(self, tmp_path):
        values = torch.tensor([[0.1, -2.0]], dtype=torch.float64)
        path = write_feature_csv(Spectrogram(values=values, frame_hop=160, log_compressed=True), tmp_path / "f.csv")
        assert path.read_text(encoding="utf-8") == "frame,channel,value\n0,0,0.1\n0,1,-2.0\n"


@pytest.mark.unit
class TestRasterNpy:
    def test_uint8_round_trip(self, tmp_path):
        dense = torch.tensor([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        path = save_raster_npy(SpikeTrain(spikes=dense), tmp_path / "r.npy")
        array = np.load(path)
        assert array.dtype == np.uint8
        assert array.shape == (3, 2)
        assert torch.equal(load_raster_npy(path).spikes, dense.double())
