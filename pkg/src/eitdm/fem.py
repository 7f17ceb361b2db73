"""Complete-electrode-model forward solver and pixel-grid sensitivity matrix.

The weak form couples the interior potential u with the 16 electrode
potentials U through the contact impedance z:

    int sigma grad(u).grad(v) dx
      + sum_l (1/z) int_{e_l} (u - U_l)(v - V_l) dS  =  sum_l J_l V_l

discretized with linear triangles. A Lagrange multiplier row enforces the
zero-sum electrode-potential ground. Coordinates are millimetres; the 2D
stiffness term is scale invariant, while electrode arc lengths are
converted to metres (unit out-of-plane thickness) so that the contact
impedance keeps its ohm * m^2 units.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import SensorGeometry
from .grids import PixelGrid, element_pixel_map
from .mesh import Mesh
from . import kernels

MM_TO_M = 1e-3
N_MEASUREMENTS = 104
DEFAULT_CURRENT = 1e-3       # A
DEFAULT_BACKGROUND = 0.05    # S/m


class SolverError(Exception):
    pass


@dataclass(frozen=True)
class InjectionSolution:
    node_potentials: np.ndarray       # (n_nodes,) V
    electrode_potentials: np.ndarray  # (16,) V
    injected_current: float           # A
    injection_pair: tuple             # (l, l+1), 1-based, 17 wraps to 1


@dataclass(frozen=True)
class FullVoltageSet:
    """All 16 adjacent-pair injection solutions for one conductivity field."""
    node_potentials: np.ndarray       # (16, n_nodes)
    electrode_potentials: np.ndarray  # (16, 16) [injection, electrode]
    injected_current: float

    def solution(self, ell):
        return InjectionSolution(
            node_potentials=self.node_potentials[ell - 1],
            electrode_potentials=self.electrode_potentials[ell - 1],
            injected_current=self.injected_current,
            injection_pair=(ell, ell % 16 + 1),
        )


@dataclass(frozen=True)
class MeasurementFrame:
    values: np.ndarray   # (104,)
    kind: str            # "raw-voltage" | "normalized-difference"

    def __post_init__(self):
        if self.values.shape != (N_MEASUREMENTS,):
            raise ValueError(f"measurement frame must have {N_MEASUREMENTS} values")


@dataclass(frozen=True)
class SensitivityMatrix:
    matrix: np.ndarray        # (104, n_support)
    grid: PixelGrid
    reference_conductivity: float
    current: float


@lru_cache(maxsize=1)
def canonical_pairs():
    """Canonical (injection l, measurement pair g) order, 1-based.

    Skips measurement pairs touching the injecting electrodes and the
    reciprocal duplicates, giving per-injection counts 13, 13, 12, ..., 1
    (104 total).
    """
    pairs = []
    for ell in range(1, 15):
        top = 15 if ell == 1 else 16
        for g in range(ell + 2, top + 1):
            pairs.append((ell, g))
    assert len(pairs) == N_MEASUREMENTS
    return tuple(pairs)


def _validate_field(mesh, field):
    field = np.asarray(field, dtype=np.float64)
    if field.shape != (mesh.n_elements,):
        raise ValueError("conductivity field length must equal element count")
    if not np.all(field > 0):
        raise ValueError("conductivity must be positive everywhere")
    return field


def assemble_system(mesh: Mesh, geometry: SensorGeometry, field) -> sp.csc_matrix:
    """Sparse CEM system over (node potentials, 16 electrode potentials, multiplier)."""
    sigma = _validate_field(mesh, field)
    n = mesh.n_nodes
    n_e = geometry.electrode_count
    size = n + n_e + 1
    inv_z = 1.0 / geometry.contact_impedance

    vals = kernels.stiffness_values(mesh.coeff_b, mesh.coeff_c, mesh.element_areas, sigma)
    row_pat = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    col_pat = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
    rows = [mesh.elements[:, row_pat].ravel()]
    cols = [mesh.elements[:, col_pat].ravel()]
    data = [vals.reshape(-1)]

    for ell, edges in enumerate(mesh.electrode_edges):
        seg = mesh.nodes[edges[:, 0]] - mesh.nodes[edges[:, 1]]
        length = np.hypot(seg[:, 0], seg[:, 1]) * MM_TO_M
        i, j = edges[:, 0], edges[:, 1]
        # edge mass matrix (L/3 diagonal, L/6 off-diagonal) scaled by 1/z
        rows.append(np.concatenate([i, j, i, j]))
        cols.append(np.concatenate([i, j, j, i]))
        data.append(inv_z * np.concatenate([length / 3, length / 3, length / 6, length / 6]))
        # coupling to the electrode potential
        ecol = np.full(edges.shape[0], n + ell, dtype=np.int64)
        rows.append(np.concatenate([i, j, ecol, ecol]))
        cols.append(np.concatenate([ecol, ecol, i, j]))
        data.append(inv_z * np.concatenate([-length / 2] * 4))
        # electrode self term
        rows.append([n + ell])
        cols.append([n + ell])
        data.append([inv_z * length.sum()])

    # zero-sum electrode potential constraint
    e_idx = np.arange(n, n + n_e)
    mult = np.full(n_e, n + n_e)
    rows.append(np.concatenate([e_idx, mult]))
    cols.append(np.concatenate([mult, e_idx]))
    data.append(np.ones(2 * n_e))

    rows = np.concatenate([np.asarray(r, dtype=np.int64) for r in rows])
    cols = np.concatenate([np.asarray(c, dtype=np.int64) for c in cols])
    data = np.concatenate([np.asarray(d, dtype=np.float64) for d in data])
    return sp.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsc()


def _injection_rhs(n_nodes, n_e, pair, current):
    ell, nxt = pair
    b = np.zeros(n_nodes + n_e + 1)
    b[n_nodes + ell - 1] = current
    b[n_nodes + nxt - 1] = -current
    return b


def _factorize(matrix):
    try:
        return spla.splu(matrix)
    except RuntimeError as exc:
        raise SolverError(f"singular CEM system: {exc}") from exc


def solve_injection(mesh, field, geometry, injection_pair, current=DEFAULT_CURRENT):
    """Solve one adjacent-pair injection; pair is (l, l+1) with 17 -> 1."""
    ell = int(injection_pair[0])
    if not 1 <= ell <= 16:
        raise ValueError("injection electrode must be in 1..16")
    nxt = ell % 16 + 1
    if len(injection_pair) > 1 and int(injection_pair[1]) != nxt:
        raise ValueError(f"injection pair must be adjacent; expected ({ell}, {nxt})")
    if current == 0:
        raise ValueError("injection current must be nonzero")
    a = assemble_system(mesh, geometry, field)
    lu = _factorize(a)
    x = lu.solve(_injection_rhs(mesh.n_nodes, geometry.electrode_count, (ell, nxt), current))
    if not np.all(np.isfinite(x)):
        raise SolverError("CEM solve produced non-finite potentials")
    n = mesh.n_nodes
    return InjectionSolution(
        node_potentials=x[:n],
        electrode_potentials=x[n:n + geometry.electrode_count],
        injected_current=current,
        injection_pair=(ell, nxt),
    )


def full_forward(mesh, field, geometry, current=DEFAULT_CURRENT) -> FullVoltageSet:
    """All 16 adjacent injections with one factorization."""
    if current == 0:
        raise ValueError("injection current must be nonzero")
    a = assemble_system(mesh, geometry, field)
    lu = _factorize(a)
    n = mesh.n_nodes
    n_e = geometry.electrode_count
    rhs = np.zeros((n + n_e + 1, n_e))
    for ell in range(1, n_e + 1):
        rhs[:, ell - 1] = _injection_rhs(n, n_e, (ell, ell % 16 + 1), current)
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("CEM solve produced non-finite potentials")
    return FullVoltageSet(
        node_potentials=x[:n].T.copy(),
        electrode_potentials=x[n:n + n_e].T.copy(),
        injected_current=current,
    )


def electrode_currents(mesh, geometry, solution: InjectionSolution):
    """Current into the domain through each electrode, (1/z) int (U_l - u) dS."""
    inv_z = 1.0 / geometry.contact_impedance
    u = solution.node_potentials
    out = np.empty(geometry.electrode_count)
    for ell, edges in enumerate(mesh.electrode_edges):
        seg = mesh.nodes[edges[:, 0]] - mesh.nodes[edges[:, 1]]
        length = np.hypot(seg[:, 0], seg[:, 1]) * MM_TO_M
        u_int = 0.5 * (length * (u[edges[:, 0]] + u[edges[:, 1]])).sum()
        out[ell] = inv_z * (length.sum() * solution.electrode_potentials[ell] - u_int)
    return out


def extract_frame(full: FullVoltageSet) -> MeasurementFrame:
    """Canonical 104-value frame; entry (l, g) is U_g - U_{g+1} under injection l."""
    u = full.electrode_potentials
    values = np.empty(N_MEASUREMENTS)
    for m, (ell, g) in enumerate(canonical_pairs()):
        values[m] = u[ell - 1, g - 1] - u[ell - 1, g % 16]
    return MeasurementFrame(values=values, kind="raw-voltage")


def normalized_difference(v1: MeasurementFrame, v0: MeasurementFrame) -> MeasurementFrame:
    """Element-wise relative change (v1 - v0) / v0."""
    zero = np.flatnonzero(v0.values == 0)
    if zero.size:
        raise ValueError(f"reference frame has zero entry at measurement index {zero[0]}")
    return MeasurementFrame(values=(v1.values - v0.values) / v0.values,
                            kind="normalized-difference")


def forward_frame(mesh, field, geometry, current=DEFAULT_CURRENT) -> MeasurementFrame:
    return extract_frame(full_forward(mesh, field, geometry, current))


def jacobian(mesh, reference_field, geometry, current=DEFAULT_CURRENT,
             grid: PixelGrid | None = None) -> SensitivityMatrix:
    """Sensitivity of the normalized frame to the pixel image values.

    The derivative of measurement (l, g) with respect to element
    conductivity is -(1/J) * area_k * grad(u_l).grad(u_g), with both fields
    solved at the reference conductivity. Chaining through the relative
    voltage change and the sign convention of the conductivity-drop image
    gives S[m, p] = sigma0 / (J * V0_m) * sum over pixel-p elements.
    Elements are attached to the pixel containing their centroid.
    """
    sigma = _validate_field(mesh, reference_field)
    sigma0 = float(sigma[0])
    if not np.allclose(sigma, sigma0, rtol=1e-12, atol=0.0):
        raise ValueError("jacobian requires a homogeneous reference field")
    if grid is None:
        grid = PixelGrid.for_geometry(geometry)

    full = full_forward(mesh, sigma, geometry, current)
    v0 = extract_frame(full)
    if np.any(v0.values == 0):
        raise SolverError("reference frame contains zero voltages")

    grads = np.empty((geometry.electrode_count, mesh.n_elements, 2))
    for ell in range(geometry.electrode_count):
        grads[ell] = kernels.element_gradients(
            mesh.coeff_b, mesh.coeff_c, mesh.element_areas,
            mesh.elements, full.node_potentials[ell])

    pairs = np.array([(ell - 1, g - 1) for ell, g in canonical_pairs()], dtype=np.int64)
    elem_pix = element_pixel_map(mesh, grid)
    raw = kernels.pair_pixel_sensitivities(grads, mesh.element_areas, pairs,
                                           elem_pix, grid.n_support)
    scale = sigma0 / (current * v0.values)
    return SensitivityMatrix(matrix=raw * scale[:, None], grid=grid,
                             reference_conductivity=sigma0, current=current)
