"""64x64 pixel grid over the square circumscribing the sensing disk.

Images are stored row-major with row 0 at the top (y = +radius side) and
column 0 at the left (x = -radius side). Reconstruction unknowns live only
on pixels whose centers fall inside the inscribed circle; the grid provides
the support bookkeeping to move between full images and support vectors.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import SensorGeometry

GRID_SIZE = 64


@dataclass(frozen=True)
class PixelGrid:
    radius: float
    size: int = GRID_SIZE
    in_circle: np.ndarray = field(init=False, repr=False)
    support_index: np.ndarray = field(init=False, repr=False)
    n_support: int = field(init=False)

    def __post_init__(self):
        n = self.size
        half = 0.5 * n
        rr, cc = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        # pixel (r, c) center in grid units relative to the disk center
        dy = rr + 0.5 - half
        dx = cc + 0.5 - half
        inside = dx * dx + dy * dy < half * half
        index = np.full((n, n), -1, dtype=np.int64)
        index[inside] = np.arange(int(inside.sum()))
        object.__setattr__(self, "in_circle", inside)
        object.__setattr__(self, "support_index", index)
        object.__setattr__(self, "n_support", int(inside.sum()))

    @classmethod
    def for_geometry(cls, geometry: SensorGeometry, size: int = GRID_SIZE):
        return cls(radius=geometry.radius, size=size)

    @property
    def pixel_size(self):
        """Pixel edge length in mm."""
        return 2.0 * self.radius / self.size

    def pixel_centers(self):
        """(size, size, 2) array of (x, y) pixel centers in mm."""
        n = self.size
        d = self.pixel_size
        cols = -self.radius + (np.arange(n) + 0.5) * d
        rows = self.radius - (np.arange(n) + 0.5) * d
        x = np.broadcast_to(cols[None, :], (n, n))
        y = np.broadcast_to(rows[:, None], (n, n))
        return np.stack([x, y], axis=-1)

    def restrict(self, image):
        """Full image -> support vector (length n_support, row-major order)."""
        image = np.asarray(image)
        if image.shape != (self.size, self.size):
            raise ValueError(f"expected {self.size}x{self.size} image, got {image.shape}")
        return image[self.in_circle]

    def embed(self, vec, fill=0.0, dtype=np.float64):
        """Support vector -> full image with out-of-circle pixels at ``fill``."""
        vec = np.asarray(vec)
        if vec.shape != (self.n_support,):
            raise ValueError(f"expected support vector of length {self.n_support}")
        out = np.full((self.size, self.size), fill, dtype=dtype)
        out[self.in_circle] = vec
        return out

    def points_to_pixels(self, xy):
        """Map (n, 2) mm points to support column indices (-1 if unsupported)."""
        xy = np.asarray(xy, dtype=np.float64)
        d = self.pixel_size
        col = np.floor((xy[:, 0] + self.radius) / d).astype(np.int64)
        row = np.floor((self.radius - xy[:, 1]) / d).astype(np.int64)
        ok = (row >= 0) & (row < self.size) & (col >= 0) & (col < self.size)
        out = np.full(xy.shape[0], -1, dtype=np.int64)
        out[ok] = self.support_index[row[ok], col[ok]]
        return out


def element_pixel_map(mesh, grid: PixelGrid):
    """Support column for each mesh element (by centroid), -1 outside."""
    centroids = mesh.nodes[mesh.elements].mean(axis=1)
    return grid.points_to_pixels(centroids)
