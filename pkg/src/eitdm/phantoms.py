"""Random circular-inclusion conductivity scenes and their rasterizations.

Scenes hold millimetre geometry plus conductivities; rasterization targets
either a mesh (element-centroid point sampling) or the 64x64 pixel grid
(pixel-center point sampling). The truth image stores the relative
conductivity drop (background - value) / background, so conductivity
decreases map to positive pixel values.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import SensorGeometry
from .grids import PixelGrid
from . import kernels

BACKGROUND_CONDUCTIVITY = 0.05      # S/m
DIAMETER_RANGE = (0.03, 0.3)        # fraction of sensing diameter
CONDUCTIVITY_RANGE = (1e-4, 0.05)   # S/m
CONTAINMENT_MARGIN = 0.02           # fraction of sensing diameter
SAMPLING_BUDGET = 10_000

_SE3 = np.array([(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)], dtype=np.int64)


class PhantomError(Exception):
    pass


@dataclass(frozen=True)
class CircleInclusion:
    center: tuple      # (x, y) mm
    radius: float      # mm
    conductivity: float  # S/m

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("inclusion radius must be positive")
        if self.conductivity <= 0:
            raise ValueError("inclusion conductivity must be positive")


@dataclass(frozen=True)
class PhantomScene:
    background_conductivity: float
    inclusions: tuple

    def __post_init__(self):
        if not 1 <= len(self.inclusions) <= 4:
            raise ValueError("a scene holds 1 to 4 inclusions")
        for i, a in enumerate(self.inclusions):
            for b in self.inclusions[i + 1:]:
                dx = a.center[0] - b.center[0]
                dy = a.center[1] - b.center[1]
                if np.hypot(dx, dy) <= a.radius + b.radius:
                    raise ValueError("inclusions must not overlap")


def sample_phantom(rng_seed: int, object_count: int,
                   geometry: SensorGeometry) -> PhantomScene:
    """Random non-overlapping scene; deterministic for a fixed seed.

    Diameters are uniform in [0.03 d, 0.3 d] of the sensing diameter,
    conductivities uniform in [0.0001, 0.05) S/m, centers uniform over the
    disk subject to containment (margin 0.02 d from the boundary) and
    non-overlap, drawn by rejection within a shared attempt budget.
    """
    if object_count not in (1, 2, 3, 4):
        raise ValueError("object_count must be 1..4")
    rng = np.random.default_rng(rng_seed)
    r_disk = geometry.radius
    d = geometry.diameter
    margin = CONTAINMENT_MARGIN * d
    attempts = 0
    placed = []
    for _ in range(object_count):
        radius = 0.5 * rng.uniform(DIAMETER_RANGE[0] * d, DIAMETER_RANGE[1] * d)
        sigma = rng.uniform(*CONDUCTIVITY_RANGE)
        while True:
            attempts += 1
            if attempts > SAMPLING_BUDGET:
                raise PhantomError(
                    f"phantom sampling exceeded {SAMPLING_BUDGET} attempts")
            x, y = rng.uniform(-r_disk, r_disk, size=2)
            if x * x + y * y >= r_disk * r_disk:
                continue
            if np.hypot(x, y) + radius > r_disk - margin:
                continue
            clear = all(np.hypot(x - p.center[0], y - p.center[1]) > radius + p.radius
                        for p in placed)
            if clear:
                placed.append(CircleInclusion((x, y), radius, sigma))
                break
    return PhantomScene(background_conductivity=BACKGROUND_CONDUCTIVITY,
                        inclusions=tuple(placed))


def rasterize_field(scene: PhantomScene, mesh) -> np.ndarray:
    """Per-element conductivity by centroid point sampling."""
    centroids = mesh.nodes[mesh.elements].mean(axis=1)
    values = np.full(mesh.n_elements, scene.background_conductivity)
    for inc in scene.inclusions:
        dx = centroids[:, 0] - inc.center[0]
        dy = centroids[:, 1] - inc.center[1]
        values[dx * dx + dy * dy < inc.radius ** 2] = inc.conductivity
    return values


def _pixel_hits(scene, grid):
    centers = grid.pixel_centers()
    hits = []
    for inc in scene.inclusions:
        dx = centers[..., 0] - inc.center[0]
        dy = centers[..., 1] - inc.center[1]
        hits.append(dx * dx + dy * dy < inc.radius ** 2)
    return hits


def truth_image(scene: PhantomScene, grid: PixelGrid | None = None) -> np.ndarray:
    """64x64 relative conductivity-drop image; background pixels are zero."""
    if grid is None:
        grid = PixelGrid(radius=7.0)
    sigma0 = scene.background_conductivity
    out = np.zeros((grid.size, grid.size))
    for inc, hit in zip(scene.inclusions, _pixel_hits(scene, grid)):
        out[hit] = (sigma0 - inc.conductivity) / sigma0
    out[~grid.in_circle] = 0.0
    return out


def mask_image(scene: PhantomScene, grid: PixelGrid | None = None) -> np.ndarray:
    """64x64 binary object-support image (objects = 1)."""
    if grid is None:
        grid = PixelGrid(radius=7.0)
    out = np.zeros((grid.size, grid.size), dtype=np.uint8)
    for hit in _pixel_hits(scene, grid):
        out[hit] = 1
    out[~grid.in_circle] = 0
    return out


def scaffold_scene(variant: int, centers=None) -> PhantomScene:
    """Cell-culture scaffold scenario as effective-conductivity disks.

    Variant 1 is a single 3 mm cluster at 0.025 S/m; variant 2 holds two
    3 mm clusters at 0.02 and 0.04 S/m. Defaults place the clusters
    symmetrically off-center; pass explicit (x, y) centers to override.
    """
    if variant == 1:
        pts = centers if centers is not None else ((-3.0, 0.0),)
        incs = (CircleInclusion(tuple(pts[0]), 1.5, 0.025),)
    elif variant == 2:
        pts = centers if centers is not None else ((-3.0, 0.0), (3.0, 0.0))
        incs = (CircleInclusion(tuple(pts[0]), 1.5, 0.02),
                CircleInclusion(tuple(pts[1]), 1.5, 0.04))
    else:
        raise ValueError("scaffold variant must be 1 or 2")
    return PhantomScene(background_conductivity=BACKGROUND_CONDUCTIVITY,
                        inclusions=incs)


def perturb_mask(mask: np.ndarray, rng_seed: int, strength: float,
                 grid: PixelGrid | None = None) -> np.ndarray:
    """Randomly erode object boundaries, then close to keep masks connected.

    Boundary pixels (object pixels with a zero 4-neighbour) flip to zero
    independently with probability ``strength``; a single 3x3 closing then
    repairs connectivity. With no pixels flipped the input is returned
    unchanged, so strength 0 is an exact identity.
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must lie in [0, 1]")
    if grid is None:
        grid = PixelGrid(radius=7.0)
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    interior = kernels.binary_erode(mask, np.array([(0, 0), (0, 1), (0, -1),
                                                    (1, 0), (-1, 0)], dtype=np.int64))
    boundary = (mask == 1) & (interior == 0)
    rng = np.random.default_rng(rng_seed)
    flips = boundary & (rng.random(mask.shape) < strength)
    if not flips.any():
        return mask.copy()
    out = mask.copy()
    out[flips] = 0
    out = kernels.binary_erode(kernels.binary_dilate(out, _SE3), _SE3)
    out[~grid.in_circle] = 0
    return out
