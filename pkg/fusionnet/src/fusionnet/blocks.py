"""Building blocks: downsampling stages, residual stacks, attention gates,
and the two fusion modules (same-scale mask fusion, cross-scale fusion)."""

import torch
from torch import nn

SLOPE = 0.1   # leaky-ReLU negative slope throughout


class ConvAct(nn.Sequential):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0):
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=padding),
            nn.LeakyReLU(SLOPE, inplace=True))


class Downsample(nn.Sequential):
    """Left-and-upper zero padding, then a 3x3 stride-2 convolution.

    The asymmetric pad keeps even sizes halving exactly: n -> n/2.
    """

    def __init__(self, in_ch, out_ch):
        super().__init__(
            nn.ZeroPad2d((1, 0, 1, 0)),
            nn.Conv2d(in_ch, out_ch, 3, stride=2),
            nn.LeakyReLU(SLOPE, inplace=True))


class ResidualUnit(nn.Module):
    """1x1 bottleneck, 3x3 expansion, added back onto the input."""

    def __init__(self, channels):
        super().__init__()
        mid = max(channels // 2, 1)
        self.body = nn.Sequential(
            ConvAct(channels, mid, 1),
            ConvAct(mid, channels, 3, padding=1))

    def forward(self, x):
        return x + self.body(x)


class ResidualStack(nn.Module):
    """Stride-1 entry projection followed by a run of residual units.

    Used inside the fusion modules, where the output must keep the input
    spatial size (the downsampling backbone stages are built separately).
    """

    def __init__(self, in_ch, out_ch, repeats=3):
        super().__init__()
        self.entry = ConvAct(in_ch, out_ch, 1)
        self.units = nn.Sequential(*[ResidualUnit(out_ch)
                                     for _ in range(repeats)])

    def forward(self, x):
        return self.units(self.entry(x))


class ChannelGate(nn.Module):
    """Sigmoid channel weights from avg- and max-pooled descriptors
    pushed through one shared bottleneck MLP."""

    def __init__(self, channels, reduction):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.mlp = nn.Sequential(
            nn.Linear(channels, hidden),
            nn.LeakyReLU(SLOPE, inplace=True),
            nn.Linear(hidden, channels))

    def weights(self, x):
        avg = self.mlp(x.mean(dim=(2, 3)))
        mx = self.mlp(x.amax(dim=(2, 3)))
        return torch.sigmoid(avg + mx)[:, :, None, None]

    def forward(self, x):
        return x * self.weights(x)


class SpatialGate(nn.Module):
    """Sigmoid spatial weights from a 7x7 convolution over the stacked
    channel-mean and channel-max maps."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, 7, padding=3)

    def weights(self, x):
        stat = torch.cat([x.mean(dim=1, keepdim=True),
                          x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(stat))

    def forward(self, x):
        return x * self.weights(x)


class _FusionBranch(nn.Module):
    # 1x1 -> 3x3 -> 1x1 refinement, then attention
    def __init__(self, channels, reduction, spatial):
        super().__init__()
        self.convs = nn.Sequential(
            ConvAct(channels, channels, 1),
            ConvAct(channels, channels, 3, padding=1),
            ConvAct(channels, channels, 1))
        self.channel_gate = ChannelGate(channels, reduction)
        self.spatial_gate = SpatialGate() if spatial else None

    def forward(self, x):
        x = self.channel_gate(self.convs(x))
        if self.spatial_gate is not None:
            x = self.spatial_gate(x)
        return x


class FeatureFusion(nn.Module):
    """Fuse same-shape measurement and mask feature maps.

    Each input runs through its own refinement branch and attention
    (channel-only, or channel then spatial for the larger map sizes);
    the branches are concatenated and merged by a channel-halving
    residual stack, so the output shape equals the input shape.
    """

    def __init__(self, channels, reduction=8, spatial=True):
        super().__init__()
        self.measurement = _FusionBranch(channels, reduction, spatial)
        self.mask = _FusionBranch(channels, reduction, spatial)
        self.merge = ResidualStack(2 * channels, channels, repeats=3)

    def forward(self, mv, mm):
        if mv.shape != mm.shape:
            raise ValueError("fusion inputs must share shape")
        return self.merge(torch.cat([self.measurement(mv),
                                     self.mask(mm)], dim=1))


class ScaleFusion(nn.Module):
    """Merge a feature map with the map one scale below it.

    The low map is enlarged by a 2x2 stride-2 transposed convolution,
    added to the high map, and refined; output shape equals the high
    map's shape (the refinement keeps its channel count).
    """

    def __init__(self, high_ch, low_ch):
        super().__init__()
        self.upsample = nn.Sequential(
            nn.ConvTranspose2d(low_ch, high_ch, 2, stride=2),
            nn.LeakyReLU(SLOPE, inplace=True))
        self.refine = ResidualStack(high_ch, high_ch, repeats=3)

    def forward(self, high, low):
        up = self.upsample(low)
        if up.shape != high.shape:
            raise ValueError(
                f"low map {tuple(low.shape)} does not upsample to "
                f"{tuple(high.shape)}")
        return self.refine(high + up)
