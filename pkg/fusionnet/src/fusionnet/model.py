"""The dual-input fusion model.

The measurement frame climbs three fully connected layers to a 64x64
image, then a five-stage stride-2 backbone; the guidance mask runs a
second backbone of the same shape. Matching scales are fused with
attention, the fused pyramid is collapsed back up scale by scale, and a
final transposed convolution restores 64x64. A single-modal variant
drops the mask backbone and all same-scale fusion.
"""

import torch
from torch import nn

from .blocks import (SLOPE, ConvAct, Downsample, FeatureFusion, ResidualUnit,
                     ScaleFusion)
from .config import IMAGE_SIDE, N_MEASUREMENTS, N_STAGES, ModelConfig


class Backbone(nn.Module):
    """Stem convolution then five halving stages; returns all stage maps."""

    def __init__(self, stem_channels, stage_repeats):
        super().__init__()
        self.stem = ConvAct(1, stem_channels, 3, padding=1)
        stages = []
        ch = stem_channels
        for repeats in stage_repeats:
            stages.append(nn.Sequential(
                Downsample(ch, 2 * ch),
                *[ResidualUnit(2 * ch) for _ in range(int(repeats))]))
            ch *= 2
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        maps = []
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
            maps.append(x)
        return maps


class FusionNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        stem = config.scaled_stem()
        widths = config.scaled_fc()
        channels = config.stage_channels()
        sizes = config.stage_sizes()

        fc = []
        prev = N_MEASUREMENTS
        for w in widths:
            fc.append(nn.Linear(prev, w))
            fc.append(nn.LeakyReLU(SLOPE, inplace=True))
            prev = w
        self.measurement_fc = nn.Sequential(*fc)
        self.measurement_backbone = Backbone(stem, config.stage_repeats)

        if config.single_modal:
            self.mask_backbone = None
            self.fusions = nn.ModuleDict()
        else:
            self.mask_backbone = Backbone(stem, config.stage_repeats)
            first = N_STAGES - config.fusion_scales
            self.fusions = nn.ModuleDict({
                str(i): FeatureFusion(
                    channels[i], reduction=config.attention_reduction,
                    spatial=sizes[i] >= config.spatial_attention_min_size)
                for i in range(first, N_STAGES)})

        self.scale_fusions = nn.ModuleList([
            ScaleFusion(channels[i], channels[i + 1])
            for i in range(N_STAGES - 1)])
        self.head = nn.Sequential(
            nn.ConvTranspose2d(channels[0], stem, 2, stride=2),
            nn.LeakyReLU(SLOPE, inplace=True),
            nn.Conv2d(stem, 1, 1))   # regression output, no activation

    def forward(self, frames, masks=None):
        if frames.ndim != 2 or frames.shape[1] != N_MEASUREMENTS:
            raise ValueError(f"frames must be (B, {N_MEASUREMENTS})")
        x = self.measurement_fc(frames)
        x = x.view(-1, 1, IMAGE_SIDE, IMAGE_SIDE)
        feats = self.measurement_backbone(x)

        if self.mask_backbone is not None:
            if masks is None:
                raise ValueError("dual-modal model needs the mask input")
            if masks.shape != (frames.shape[0], 1, IMAGE_SIDE, IMAGE_SIDE):
                raise ValueError(
                    f"masks must be (B, 1, {IMAGE_SIDE}, {IMAGE_SIDE})")
            mask_feats = self.mask_backbone(masks)
            feats = [self.fusions[str(i)](feats[i], mask_feats[i])
                     if str(i) in self.fusions else feats[i]
                     for i in range(N_STAGES)]

        out = feats[-1]
        for i in range(N_STAGES - 2, -1, -1):
            out = self.scale_fusions[i](feats[i], out)
        return self.head(out)


def _init_weights(module):
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.kaiming_normal_(module.weight, a=SLOPE, mode="fan_in",
                                nonlinearity="leaky_relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    # Dozens of residual units are stacked end to end; leaving their
    # branches live at init roughly doubles the activation variance per
    # unit and the output scale explodes. Zeroing each branch's exit
    # convolution makes every unit start as the identity.
    if isinstance(module, ResidualUnit):
        exit_conv = module.body[-1][0]
        nn.init.zeros_(exit_conv.weight)
        nn.init.zeros_(exit_conv.bias)


def build_model(config: ModelConfig, seed: int = 0) -> FusionNet:
    """Construct and initialize; the same (config, seed) gives identical
    parameters."""
    torch.manual_seed(seed)
    model = FusionNet(config)
    model.apply(_init_weights)
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
