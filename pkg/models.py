"""
Pydantic models for the spikefront auditory front-end.
Defines domain types, run configuration schemas and report objects.
"""

import math
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class FeatureKind(str, Enum):
    """Acoustic feature extractor in front of the encoder"""
    FBANK = "fbank"
    LEARNABLE = "learnable"


class NeuronKind(str, Enum):
    """Spiking neuron model"""
    LIF = "lif"
    TC_LIF = "tc-lif"
    IHC_LIF = "ihc-lif"


class PcenForm(str, Enum):
    """Placement of the PCEN offset delta"""
    INNER = "inner"  # delta added to the smoother power in the denominator
    STANDARD = "standard"  # delta added after the division

    @classmethod
    def _missing_(cls, value):
        # accepted alias of INNER
        if isinstance(value, str) and value.lower() == "paper":
            return cls.INNER
        return None


class SurrogateKind(str, Enum):
    """Pseudo-derivative used in place of the Heaviside derivative"""
    RECTANGULAR = "rectangular"
    SIGMOID = "sigmoid-derivative"


class OptimizerKind(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


class ScheduleKind(str, Enum):
    """Learning-rate schedules"""
    CONSTANT = "constant"
    STEP = "step"


class Precision(str, Enum):
    FLOAT64 = "float64"
    FLOAT32 = "float32"

    @property
    def dtype(self) -> torch.dtype:
        return torch.float64 if self is Precision.FLOAT64 else torch.float32


class RunStatus(str, Enum):
    """Run registry status"""
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

class AudioBuffer(BaseModel):
    """
    Mono waveform at a known sample rate.
    Samples are stored as a 1-d float64 array.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: np.ndarray
    sample_rate: int = Field(..., gt=0, description="Sample rate in Hz")

    @field_validator("samples", mode="before")
    @classmethod
    def validate_samples(cls, v):
        """Ensure samples are a finite, non-empty 1-d array"""
        arr = np.asarray(v, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"samples must be 1-d, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("samples must not be empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        return arr

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        """Duration in seconds"""
        return len(self) / self.sample_rate

    @property
    def power(self) -> float:
        """Mean squared amplitude over the whole buffer"""
        return float(np.mean(self.samples ** 2))


class NoiseSpec(BaseModel):
    """Noise source and target signal-to-noise ratio"""
    model_config = ConfigDict(frozen=True)

    noise: AudioBuffer
    snr_db: float = Field(..., description="Target SNR in dB; +inf means clean")

    @property
    def is_clean(self) -> bool:
        return math.isinf(self.snr_db) and self.snr_db > 0


class Spectrogram(BaseModel):
    """
    Time-frequency representation F with shape [frames, channels].
    Energy spectrograms are non-negative; log-compressed ones are not.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: torch.Tensor
    frame_hop: int = Field(..., gt=0, description="Hop between frames in samples")
    log_compressed: bool = False

    @model_validator(mode="after")
    def validate_values(self):
        if self.values.dim() != 2:
            raise ValueError(f"spectrogram must be [frames, channels], got {tuple(self.values.shape)}")
        if not torch.isfinite(self.values).all():
            raise ValueError("spectrogram entries must be finite")
        if not self.log_compressed and (self.values < 0).any():
            raise ValueError("energy spectrogram entries must be non-negative")
        return self

    @property
    def n_frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.values.shape[1])


class PcenState(BaseModel):
    """Running per-channel mean M of the PCEN smoother"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    smoother: torch.Tensor

    @field_validator("smoother")
    @classmethod
    def validate_smoother(cls, v):
        if (v < 0).any():
            raise ValueError("PCEN smoother must be non-negative")
        return v


class SpikeTrain(BaseModel):
    """Binary spike tensor with shape [timesteps, channels]"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spikes: torch.Tensor

    @field_validator("spikes")
    @classmethod
    def validate_spikes(cls, v):
        if v.dim() != 2:
            raise ValueError(f"spike train must be [timesteps, channels], got {tuple(v.shape)}")
        if not ((v == 0) | (v == 1)).all():
            raise ValueError("spike train must be binary")
        return v

    @property
    def n_steps(self) -> int:
        return int(self.spikes.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.spikes.shape[1])

    @property
    def firing_rate(self) -> float:
        """Average spikes per neuron per timestep"""
        if self.spikes.numel() == 0:
            return 0.0
        return float(self.spikes.sum().item() / self.spikes.numel())


class SurrogateSpec(BaseModel):
    """Surrogate gradient shape"""
    kind: SurrogateKind = SurrogateKind.RECTANGULAR
    width: float = Field(0.5, gt=0, description="Half-width w of the rectangular window")
    steepness: float = Field(4.0, gt=0, description="Slope k of the sigmoid")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

class FrontendConfig(BaseModel):
    """Feature extraction settings"""
    feature: FeatureKind = FeatureKind.LEARNABLE
    sample_rate: int = Field(16000, gt=0)
    n_filters: int = Field(40, ge=1)
    window_len: int = Field(401, ge=1, description="Gabor window length L in samples")
    pool_window: int = Field(400, ge=1, description="Energy pooling window (25 ms)")
    hop: int = Field(160, ge=1, description="Frame hop (10 ms)")
    min_freq: float = Field(60.0, ge=0)
    max_freq_margin: float = Field(100.0, ge=0, description="Top center is sample_rate/2 minus this")
    pcen_form: PcenForm = PcenForm.INNER
    alpha_init: float = Field(0.96, gt=0)
    delta_init: Optional[float] = Field(None, gt=0, description="Defaults to 0.01 (inner) or 2.0 (standard)")
    r_init: float = Field(0.5, gt=0)
    s_init: float = Field(0.04, gt=0, lt=1)
    epsilon: float = Field(1e-6, gt=0)
    train_s: bool = True
    train_epsilon: bool = False
    log_floor: float = Field(1e-6, gt=0, description="Floor applied before the fbank log")

    @field_validator("pcen_form", mode="before")
    @classmethod
    def resolve_pcen_alias(cls, v):
        return PcenForm(v) if isinstance(v, str) else v

    @property
    def resolved_delta(self) -> float:
        if self.delta_init is not None:
            return self.delta_init
        return 0.01 if self.pcen_form is PcenForm.INNER else 2.0


class EncoderConfig(BaseModel):
    """Spiking encoder settings"""
    neuron: NeuronKind = NeuronKind.IHC_LIF
    n_neurons: Optional[int] = Field(None, ge=1, description="Defaults to one neuron per front-end channel")
    use_feedback: bool = Field(True, description="Lateral feedback I_f at the dendrite")
    use_inhibition: bool = Field(True, description="Lateral inhibition I_LI at the soma")
    v_th: float = Field(1.0, gt=0)
    beta_init: float = Field(0.9, gt=0, lt=1, description="LIF membrane decay")
    coupling_init: float = Field(0.2, ge=0, description="beta_d, beta_s drawn from U(-c, c)")
    learn_gamma: bool = True
    surrogate: SurrogateSpec = Field(default_factory=SurrogateSpec)

    @model_validator(mode="before")
    @classmethod
    def default_lateral_terms(cls, data):
        """Lateral terms default to off for neurons that have none"""
        if isinstance(data, dict) and data.get("neuron", NeuronKind.IHC_LIF) != NeuronKind.IHC_LIF:
            data = dict(data)
            data.setdefault("use_feedback", False)
            data.setdefault("use_inhibition", False)
        return data

    @model_validator(mode="after")
    def validate_feedback(self):
        if self.neuron is not NeuronKind.IHC_LIF and (self.use_feedback or self.use_inhibition):
            raise ValueError(
                f"use_feedback / use_inhibition are only valid with {NeuronKind.IHC_LIF.value}"
            )
        return self


class ClassifierConfig(BaseModel):
    """Backend SNN classifier settings"""
    layer_sizes: List[int] = Field(default_factory=lambda: [128], min_length=1)
    recurrent: bool = False
    n_classes: int = Field(10, ge=2)
    neuron: NeuronKind = NeuronKind.LIF
    readout: Literal["mean-membrane"] = "mean-membrane"
    beta_init: float = Field(0.9, gt=0, lt=1)
    v_th: float = Field(1.0, gt=0)

    @field_validator("layer_sizes")
    @classmethod
    def validate_layer_sizes(cls, v):
        if any(size < 1 for size in v):
            raise ValueError("layer sizes must be positive")
        return v

    @field_validator("neuron")
    @classmethod
    def validate_neuron(cls, v):
        if v is NeuronKind.IHC_LIF:
            raise ValueError("classifier layers use lif or tc-lif neurons")
        return v


class PipelineConfig(BaseModel):
    """Front-end, encoder and classifier together"""
    frontend: FrontendConfig = Field(default_factory=FrontendConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    precision: Precision = Precision.FLOAT64


class LossConfig(BaseModel):
    """L = L_cls + lambda * ReLU(R - SR)"""
    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(1.0, ge=0, alias="lambda", description="Spike-rate penalty coefficient")
    target_sr: float = Field(0.1, ge=0, le=1, description="Expected spike rate SR")


class OptimizerConfig(BaseModel):
    """Optimizer and schedule"""
    kind: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = Field(1e-3, ge=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    batch_size: int = Field(16, ge=1)
    epochs: int = Field(10, ge=1)
    grad_clip: Optional[float] = Field(5.0, gt=0)
    schedule: ScheduleKind = ScheduleKind.CONSTANT
    step_size: int = Field(5, ge=1, description="Epochs between step decays")
    decay: float = Field(0.5, gt=0, le=1)


class DataConfig(BaseModel):
    """Dataset shaping"""
    clip_seconds: float = Field(1.0, gt=0)
    synthetic_classes: int = Field(10, ge=2)
    synthetic_train_per_class: int = Field(40, ge=1)
    synthetic_test_per_class: int = Field(10, ge=1)
    synthetic_train_seed: int = Field(1, ge=0, description="Jitter seed of the synthetic training split")
    synthetic_test_seed: int = Field(2, ge=0, description="Jitter seed of the synthetic test split")
    normalize_peak: bool = Field(False, description="Scale every loaded utterance WAV to unit peak")


class EvaluationConfig(BaseModel):
    """Evaluation protocol"""
    snrs: List[float] = Field(default_factory=lambda: [20.0, 10.0, 5.0, 0.0, -5.0])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    batch_size: int = Field(32, ge=1)


class PathsConfig(BaseModel):
    """Files the run reads and writes"""
    manifest: Optional[Path] = None
    test_manifest: Optional[Path] = None
    checkpoint: Optional[Path] = None
    out_dir: Path = Path("runs")
    noise: List[Path] = Field(default_factory=list)


class RunConfig(BaseModel):
    """
    Complete configuration of a command-line run.
    The seed has no default: every run states it.
    """
    paths: PathsConfig = Field(default_factory=PathsConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    seed: int = Field(..., ge=0, lt=2 ** 64, description="Seed of the single run generator")
    threads: int = Field(1, ge=1)

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "paths": {"manifest": "data/train.tsv", "test_manifest": "data/test.tsv", "out_dir": "runs/demo"},
                "pipeline": {
                    "frontend": {"feature": "learnable", "pcen_form": "paper"},
                    "encoder": {"neuron": "ihc-lif", "use_feedback": True, "use_inhibition": True},
                    "classifier": {"layer_sizes": [128], "recurrent": False, "n_classes": 10},
                },
                "loss": {"lambda": 1.0, "target_sr": 0.1},
                "optimizer": {"learning_rate": 0.001, "batch_size": 16, "epochs": 10},
                "seed": 0,
                "threads": 1,
            }
        }
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class TrainReport(BaseModel):
    """One epoch of training"""
    epoch: int = Field(..., ge=0)
    steps: int = Field(..., ge=0)
    loss: float
    cls_loss: float
    sr_loss: float
    accuracy: float = Field(..., ge=0, le=1)
    firing_rate: float = Field(..., ge=0, le=1, description="Encoder spike rate R")
    learning_rate: float
    wall_clock_seconds: float = Field(..., ge=0)


class EvalResult(BaseModel):
    """Accuracy and encoder firing rate on an evaluation set"""
    accuracy: float = Field(..., ge=0, le=1)
    firing_rate: float = Field(..., ge=0, le=1)
    snr_db: Optional[float] = None
    seed: Optional[int] = None


class AblationSpec(BaseModel):
    """One row of the ablation grid"""
    model_config = ConfigDict(frozen=True)

    feature: FeatureKind = FeatureKind.LEARNABLE
    neuron: NeuronKind = NeuronKind.IHC_LIF
    use_if: bool = False
    use_ili: bool = False
    use_lsr: bool = False

    @model_validator(mode="after")
    def validate_combination(self):
        if self.neuron is not NeuronKind.IHC_LIF and (self.use_if or self.use_ili):
            raise ValueError(f"I_f / I_LI require {NeuronKind.IHC_LIF.value}, got {self.neuron.value}")
        return self

    @property
    def label(self) -> str:
        parts = [self.feature.value, self.neuron.value]
        if self.use_if:
            parts.append("If")
        if self.use_ili:
            parts.append("ILI")
        if self.use_lsr:
            parts.append("LSR")
        return "+".join(parts)


class AblationRow(BaseModel):
    """Ablation grid cell outcome"""
    spec: AblationSpec
    seed: int
    result: EvalResult

    def csv_row(self) -> Dict[str, Any]:
        snr = self.result.snr_db
        return {
            "feature": self.spec.feature.value,
            "neuron": self.spec.neuron.value,
            "If": int(self.spec.use_if),
            "ILI": int(self.spec.use_ili),
            "LSR": int(self.spec.use_lsr),
            "seed": self.seed,
            "snr_db": "inf" if snr is None else repr(float(snr)),
            "accuracy": f"{self.result.accuracy:.6f}",
            "firing_rate": f"{self.result.firing_rate:.6f}",
        }


class GradCheckReport(BaseModel):
    """Finite-difference comparison outcome"""
    passed: bool
    max_relative_error: float
    worst_parameter: Optional[str] = None
    epsilon: float
    tolerance: float
    per_parameter: Dict[str, float] = Field(default_factory=dict)


class RunRecord(BaseModel):
    """
    Registry entry for one command or grid job.
    Tracks the state of each run.
    """
    run_id: str
    command: str
    status: RunStatus
    config: Dict[str, Any]
    result: Optional[Dict[str, Any]] = None
    created_at: datetime
    updated_at: datetime
    error_message: Optional[str] = None
