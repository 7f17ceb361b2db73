"""Model and training configuration.

The model consumes a 104-entry measurement frame plus a 64x64 binary
guidance mask and emits a 64x64 image. Widths scale uniformly through
``width_multiplier`` so the same architecture runs at toy size on CPU.
"""

from dataclasses import dataclass, field

N_MEASUREMENTS = 104
IMAGE_SIDE = 64
N_IMAGE = IMAGE_SIDE * IMAGE_SIDE
N_STAGES = 5


@dataclass(frozen=True)
class ModelConfig:
    stem_channels: int = 32
    stage_repeats: tuple = (1, 2, 4, 4, 2)
    fc_widths: tuple = (512, 2048, 4096)
    fusion_scales: int = N_STAGES          # deepest stages that fuse the mask
    spatial_attention_min_size: int = 16   # gate maps this size and up spatially
    attention_reduction: int = 8
    single_modal: bool = False
    width_multiplier: float = 1.0

    def __post_init__(self):
        if len(self.stage_repeats) != N_STAGES:
            raise ValueError(f"backbone needs exactly {N_STAGES} stages")
        if any(int(r) < 0 for r in self.stage_repeats):
            raise ValueError("stage repeats must be non-negative")
        if not self.fc_widths or any(int(w) <= 0 for w in self.fc_widths):
            raise ValueError("fully connected widths must be positive")
        if self.fc_widths[-1] != N_IMAGE:
            raise ValueError(f"measurement branch must end at {N_IMAGE} "
                             f"to reshape into {IMAGE_SIDE}x{IMAGE_SIDE}")
        if not 1 <= self.fusion_scales <= N_STAGES:
            raise ValueError("fusion scale count must lie in 1..5")
        if self.stem_channels <= 0 or self.width_multiplier <= 0:
            raise ValueError("channel widths must be positive")
        if self.attention_reduction < 1:
            raise ValueError("attention reduction must be at least 1")

    def scaled_stem(self) -> int:
        return max(2, int(round(self.stem_channels * self.width_multiplier)))

    def scaled_fc(self) -> tuple:
        # the final width is pinned by the image reshape
        head = [max(8, int(round(w * self.width_multiplier)))
                for w in self.fc_widths[:-1]]
        return (*head, self.fc_widths[-1])

    def stage_channels(self) -> tuple:
        stem = self.scaled_stem()
        return tuple(stem * 2 ** (i + 1) for i in range(N_STAGES))

    def stage_sizes(self) -> tuple:
        return tuple(IMAGE_SIDE // 2 ** (i + 1) for i in range(N_STAGES))


@dataclass(frozen=True)
class PhaseConfig:
    lr: float
    weight_decay: float
    epochs: int
    batch_size: int
    patience: int | None = None   # None disables early stopping

    def __post_init__(self):
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("learning rate must be positive, decay non-negative")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch size must be positive")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass(frozen=True)
class TrainConfig:
    """Two-phase schedule: 1-and-2-object warm-up, then the full set."""

    phase1: PhaseConfig = field(
        default_factory=lambda: PhaseConfig(lr=1e-3, weight_decay=1e-4,
                                            epochs=100, batch_size=200))
    phase2: PhaseConfig = field(
        default_factory=lambda: PhaseConfig(lr=5e-4, weight_decay=5e-5,
                                            epochs=100, batch_size=120,
                                            patience=10))
