"""Deterministic triangular meshing of the circular 16-electrode sensor.

The disk is meshed as concentric rings of nodes joined by a zipper
triangulation, with the outer ring subdivided so that electrode arcs and
gaps land exactly on node boundaries. All ring node counts are multiples of
16 and the sector-0 triangulation is replicated by index shifts, so the
mesh is rotationally symmetric under 22.5 degree turns by construction.
That symmetry is what makes homogeneous-field measurement sequences agree
across injections to floating-point precision instead of a mesh-dependent
percent-level error.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import SensorGeometry
from . import kernels


class MeshError(Exception):
    pass


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray              # (n_nodes, 2) mm
    elements: np.ndarray           # (n_elem, 3) node indices, CCW
    electrode_edges: tuple         # 16 arrays of (k, 2) boundary node pairs
    element_areas: np.ndarray = field(repr=False)   # mm^2
    coeff_b: np.ndarray = field(repr=False)         # (n_elem, 3) shape-fn coefficients
    coeff_c: np.ndarray = field(repr=False)
    target_edge_length: float = 0.0

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]


def _ring_layout(geometry, h):
    """Ring radii and per-sector node counts for the target edge length."""
    r = geometry.radius
    n_rings = max(2, int(round(r / h)))
    radii = r * np.arange(1, n_rings + 1) / n_rings
    sector = 2.0 * np.pi / geometry.electrode_count
    arc_e = geometry.electrode_coverage * sector * r
    arc_g = (1.0 - geometry.electrode_coverage) * sector * r
    n_elec = max(1, int(round(arc_e / h)))
    n_gap = max(1, int(round(arc_g / h)))
    per_sector = []
    for k in range(n_rings - 1):
        circ_sector = sector * radii[k]
        per_sector.append(max(1, int(round(circ_sector / h))))
    per_sector.append(n_elec + n_gap)
    return radii, per_sector, n_elec, n_gap


def _boundary_sector_angles(geometry, n_elec, n_gap):
    """Node angles of boundary sector 0, starting at the electrode left edge."""
    sector = 2.0 * np.pi / geometry.electrode_count
    w_e = geometry.electrode_coverage * sector
    w_g = sector - w_e
    angles = np.empty(n_elec + n_gap)
    for j in range(n_elec):
        angles[j] = j * w_e / n_elec
    for j in range(n_gap):
        angles[n_elec + j] = w_e + j * w_g / n_gap
    return angles


def _zipper(inner_angles, outer_angles):
    """Triangulate one annulus sector between two angle-sorted node runs.

    Both runs include the first node of the next sector at the end; returns
    (ring_flag, local_index) triples where ring_flag 0 = inner, 1 = outer.
    """
    p = len(inner_angles) - 1
    q = len(outer_angles) - 1
    tris = []
    i = j = 0
    while i < p or j < q:
        if j == q or (i < p and inner_angles[i + 1] <= outer_angles[j + 1]):
            tris.append(((0, i), (1, j), (0, i + 1)))
            i += 1
        else:
            tris.append(((0, i), (1, j), (1, j + 1)))
            j += 1
    return tris


def build_mesh(geometry: SensorGeometry, target_edge_length: float) -> Mesh:
    """Conforming triangulation of the sensor disk.

    target_edge_length must lie in (0, radius/4]; electrode arcs are meshed
    with whole edges so each of the 16 electrodes owns an equal run of
    boundary edges. Deterministic: identical inputs give bit-identical
    meshes.
    """
    h = float(target_edge_length)
    if not h > 0:
        raise MeshError("target edge length must be positive")
    if h > geometry.radius / 4:
        raise MeshError("target edge length must not exceed radius/4")

    n_sect = geometry.electrode_count
    sector = 2.0 * np.pi / n_sect
    offset = -0.5 * geometry.electrode_coverage * sector

    radii, per_sector, n_elec, n_gap = _ring_layout(geometry, h)
    n_rings = len(radii)

    # node table: center first, then rings inside-out, each ring CCW from
    # the sector-0 start angle
    ring_start = []
    ring_count = []
    ring_angles = []
    nodes = [np.zeros((1, 2))]
    next_index = 1
    bnd_sector = _boundary_sector_angles(geometry, n_elec, n_gap)
    for k in range(n_rings):
        m = per_sector[k]
        n_k = n_sect * m
        if k < n_rings - 1:
            sector_angles = np.arange(m) * (sector / m)
        else:
            sector_angles = bnd_sector
        angles = np.concatenate([offset + s * sector + sector_angles for s in range(n_sect)])
        ring_start.append(next_index)
        ring_count.append(n_k)
        ring_angles.append(angles)
        nodes.append(radii[k] * np.stack([np.cos(angles), np.sin(angles)], axis=1))
        next_index += n_k
    nodes = np.concatenate(nodes, axis=0)

    # triangles: sector-0 patterns replicated by index shift for exact
    # 16-fold symmetry
    tris = []
    m1 = per_sector[0]
    for s in range(n_sect):
        for i in range(m1):
            a = ring_start[0] + (s * m1 + i)
            b = ring_start[0] + ((s * m1 + i + 1) % ring_count[0])
            tris.append((0, a, b))
    for k in range(n_rings - 1):
        mi, mo = per_sector[k], per_sector[k + 1]
        inner_angles = np.append(ring_angles[k][:mi], offset + sector)
        outer_angles = np.append(ring_angles[k + 1][:mo], offset + sector)
        pattern = _zipper(inner_angles, outer_angles)
        for s in range(n_sect):
            for tri in pattern:
                idx = []
                for ring_flag, local in tri:
                    kk = k + ring_flag
                    g = ring_start[kk] + ((s * per_sector[kk] + local) % ring_count[kk])
                    idx.append(g)
                tris.append(tuple(idx))
    elements = np.array(tris, dtype=np.int64)

    # electrode edge groups: first n_elec edges of each boundary sector
    bstart = ring_start[-1]
    per = per_sector[-1]
    groups = []
    for s in range(n_sect):
        base = bstart + s * per
        edges = np.empty((n_elec, 2), dtype=np.int64)
        for j in range(n_elec):
            edges[j, 0] = base + j
            edges[j, 1] = bstart + ((s * per + j + 1) % ring_count[-1])
        groups.append(edges)

    b, c, areas = kernels.triangle_coefficients(nodes, elements)
    if np.any(areas <= 1e-12):
        raise MeshError("mesh generation produced a degenerate triangle")

    return Mesh(
        nodes=nodes,
        elements=elements,
        electrode_edges=tuple(groups),
        element_areas=areas,
        coeff_b=b,
        coeff_c=c,
        target_edge_length=h,
    )


def electrode_arc_lengths(mesh: Mesh):
    """Summed chord length (mm) of each electrode's boundary edges."""
    out = np.empty(len(mesh.electrode_edges))
    for i, edges in enumerate(mesh.electrode_edges):
        seg = mesh.nodes[edges[:, 0]] - mesh.nodes[edges[:, 1]]
        out[i] = np.hypot(seg[:, 0], seg[:, 1]).sum()
    return out


def export_text(mesh: Mesh, path):
    """Debug dump: one record per line, 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"nodes {mesh.n_nodes}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for a, b, c in mesh.elements:
            fh.write(f"{a} {b} {c}\n")
        for i, edges in enumerate(mesh.electrode_edges):
            fh.write(f"electrode {i + 1} {len(edges)}\n")
            for a, b in edges:
                fh.write(f"{a} {b}\n")
