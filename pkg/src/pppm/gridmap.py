"""Mapping kernels between atoms and the charge/field grids.

Three kernels share one structure: a loop over atoms, per-dimension stencil
rows (from the lookup table or evaluated exactly), and an accumulation over
the stencil footprint.  Grid arrays are dense, indexed ``[iz, iy, ix]`` so the
innermost stencil dimension is contiguous in memory, and the accumulation
consumes full zero-padded rows of length 8 by default; the padding entries
add exactly nothing, and a reference path that loops only the ``order`` real
entries is kept for equivalence checks.

Charge mapping may run over disjoint atom subsets accumulating into private
grid replicas that are reduced by summation in replica order, which is both
thread-safe and deterministic.  Force distribution is read-only on the grids
with disjoint per-atom outputs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import AtomSystem, ConfigurationError, DiffMode, PppmParams
from .stencil import PADDED_LEN, StencilTable, weight_rows


@dataclass(frozen=True)
class ChargeGrid:
    """Charge density on the mesh: values[iz, iy, ix], units charge/volume."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    values: np.ndarray

    def __post_init__(self):
        nx, ny, nz = self.dims
        if self.values.shape != (nz, ny, nx):
            raise ValueError("grid array must have shape (nz, ny, nx)")

    @property
    def cell_volume(self) -> float:
        hx, hy, hz = self.spacing
        return hx * hy * hz

    @property
    def total_charge(self) -> float:
        return float(self.values.sum()) * self.cell_volume


@dataclass(frozen=True)
class FieldGrids:
    """Solver output: three field grids for IK mode, one potential grid for AD."""

    mode: DiffMode
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    ex: np.ndarray | None = None
    ey: np.ndarray | None = None
    ez: np.ndarray | None = None
    phi: np.ndarray | None = None
    imag_residue: float = 0.0

    def __post_init__(self):
        nx, ny, nz = self.dims
        shape = (nz, ny, nx)
        if self.mode is DiffMode.IK:
            grids = (self.ex, self.ey, self.ez)
            if any(g is None for g in grids) or self.phi is not None:
                raise ValueError("IK fields need ex, ey, ez and no phi")
        elif self.mode is DiffMode.AD:
            if self.phi is None or self.ex is not None:
                raise ValueError("AD fields need phi only")
            grids = (self.phi,)
        else:
            raise ValueError("unknown differentiation mode")
        if any(g.shape != shape for g in grids):
            raise ValueError("field grid shape does not match dims")


def _grid_geometry(system: AtomSystem, params: PppmParams):
    dims = params.grid_dims
    lengths = system.box.lengths
    spacing = tuple(float(lengths[d]) / dims[d] for d in range(3))
    if any(dims[d] < params.order for d in range(3)):
        raise ConfigurationError("grid dimensions must be >= the stencil order")
    if np.any(system.positions < 0.0) or np.any(system.positions >= lengths):
        raise RuntimeError("positions must be wrapped into the box before mapping")
    return dims, spacing


def _stencil_rows(system, params, table: StencilTable | None):
    """Per-dimension node bases and weight rows for every atom.

    Returns (nodes, assign, deriv): three (N,) int arrays of nearest-node
    indices and three (N, 8) row pairs, ordered x, y, z.
    """
    if params.use_table:
        if table is None or table.order != params.order:
            raise ConfigurationError("a stencil table matching the order is required")
    dims, spacing = _grid_geometry(system, params)
    nodes, assigns, derivs = [], [], []
    for d in range(3):
        u = system.positions[:, d] / spacing[d]
        node = np.floor(u + 0.5)
        t = u - node
        # Rounding at the half-cell boundary can push t one ulp outside the
        # half-open domain; fold it back so table binning stays in range.
        t = np.clip(t, -0.5, np.nextafter(0.5, 0.0))
        if params.use_table:
            idx = table.bin_index(t)
            assign = table.assignment[idx]
            deriv = table.derivative[idx]
        else:
            assign, deriv = weight_rows(t, params.order)
        nodes.append(node.astype(np.intp))
        assigns.append(assign)
        derivs.append(deriv)
    return nodes, assigns, derivs


def _node_indices(nodes, dims, row_len, order):
    """Periodic grid indices for each atom's stencil rows, shape (N, row_len)."""
    half = (order - 1) // 2
    offsets = np.arange(row_len) - half
    out = []
    for d in range(3):
        out.append((nodes[d][:, None] + offsets[None, :]) % dims[d])
    return out


def _row_len(order, padded):
    return PADDED_LEN if padded else order


def _count_touch(counters, key, n_atoms, order):
    if counters is not None:
        counters[key] = counters.get(key, 0) + n_atoms * order**3


def _scatter_chunk(values, q, ix, iy, iz, wx, wy, wz):
    """Accumulate one atom subset onto ``values`` (atom-major, in order)."""
    contrib = (
        q[:, None, None, None]
        * wz[:, :, None, None]
        * wy[:, None, :, None]
        * wx[:, None, None, :]
    )
    np.add.at(
        values,
        (iz[:, :, None, None], iy[:, None, :, None], ix[:, None, None, :]),
        contrib,
    )


def map_charge(
    system: AtomSystem,
    params: PppmParams,
    table: StencilTable | None = None,
    *,
    workers: int = 1,
    padded_rows: bool = True,
    counters: dict | None = None,
) -> ChargeGrid:
    """Spread atom charges over the ``order``^3 nearest grid nodes as density.

    The weight of node (i, j, k) is the product of the per-dimension rows, so
    the mapped grid integrates to the total charge exactly (partition of
    unity) and the map is linear in the charges.  Periodic wrap-around is
    index arithmetic; there are no ghost layers.

    ``workers`` > 1 splits the atoms into that many contiguous subsets, each
    scattered onto a private grid replica concurrently, then reduces the
    replicas by summation in replica order.  ``padded_rows=False`` switches to
    the reference loop over only the ``order`` real entries; both paths give
    bitwise-identical grids.
    """
    dims, spacing = _grid_geometry(system, params)
    nodes, assigns, _ = _stencil_rows(system, params, table)
    row_len = _row_len(params.order, padded_rows)
    ix, iy, iz = _node_indices(nodes, dims, row_len, params.order)
    wx, wy, wz = (a[:, :row_len] for a in assigns)
    q = system.charges
    nx, ny, nz = dims

    workers = max(1, int(workers))
    n = system.n_atoms
    if workers == 1:
        accum = np.zeros((nz, ny, nx))
        _scatter_chunk(accum, q, ix, iy, iz, wx, wy, wz)
    else:
        chunks = np.array_split(np.arange(n), workers)

        def run(chunk):
            replica = np.zeros((nz, ny, nx))
            if chunk.size:
                _scatter_chunk(
                    replica, q[chunk], ix[chunk], iy[chunk], iz[chunk],
                    wx[chunk], wy[chunk], wz[chunk],
                )
            return replica

        with ThreadPoolExecutor(max_workers=workers) as pool:
            replicas = list(pool.map(run, chunks))
        accum = replicas[0]
        for replica in replicas[1:]:
            accum += replica

    cell_volume = spacing[0] * spacing[1] * spacing[2]
    accum /= cell_volume
    accum.flags.writeable = False
    _count_touch(counters, "cells_touched_map", n, params.order)
    return ChargeGrid(dims=dims, spacing=spacing, values=accum)


def _ordered_stencil_sum(contrib):
    """Reduce (N, R, R, R) stencil contributions, innermost axis first.

    Plain left-to-right adds per axis keep the floating-point evaluation
    order identical between the padded and order-length paths, so appended
    zero entries change nothing bitwise.
    """
    out = contrib
    for _ in range(3):
        acc = out[..., 0]
        for k in range(1, out.shape[-1]):
            acc = acc + out[..., k]
        out = acc
    return out


def _gather(grid, ix, iy, iz):
    return grid[iz[:, :, None, None], iy[:, None, :, None], ix[:, None, None, :]]


def distribute_force_ik(
    fields: FieldGrids,
    system: AtomSystem,
    params: PppmParams,
    table: StencilTable | None = None,
    *,
    workers: int = 1,
    padded_rows: bool = True,
    counters: dict | None = None,
) -> np.ndarray:
    """Interpolate the three field grids back to the atoms: F = q E(x).

    Uses the same assignment rows as the charge mapping, one weighted total
    per dimension, scaled by the Coulomb prefactor.  Returns (N, 3) forces.
    """
    if fields.mode is not DiffMode.IK:
        raise ValueError("distribute_force_ik needs IK-mode field grids")
    dims, _ = _grid_geometry(system, params)
    if fields.dims != dims:
        raise ValueError("field grid dims do not match the solver grid")
    nodes, assigns, _ = _stencil_rows(system, params, table)
    row_len = _row_len(params.order, padded_rows)
    ix, iy, iz = _node_indices(nodes, dims, row_len, params.order)
    wx, wy, wz = (a[:, :row_len] for a in assigns)
    weight = wz[:, :, None, None] * wy[:, None, :, None] * wx[:, None, None, :]

    scale = params.force_scale * system.charges
    forces = np.empty((system.n_atoms, 3))
    for d, grid in enumerate((fields.ex, fields.ey, fields.ez)):
        forces[:, d] = scale * _ordered_stencil_sum(weight * _gather(grid, ix, iy, iz))
    _count_touch(counters, "cells_touched_distribute", system.n_atoms, params.order)
    return forces


def distribute_force_ad(
    fields: FieldGrids,
    system: AtomSystem,
    params: PppmParams,
    table: StencilTable | None = None,
    *,
    workers: int = 1,
    padded_rows: bool = True,
    counters: dict | None = None,
) -> np.ndarray:
    """Differentiate the potential grid at each atom: F = -q grad(phi)(x).

    Two passes: the first accumulates, per atom, three weighted sums of the
    potential using the derivative row in one dimension and assignment rows
    in the other two, stored in three length-N arrays; the second converts
    the triples to force components with the grid-spacing and Coulomb
    scaling.
    """
    if fields.mode is not DiffMode.AD:
        raise ValueError("distribute_force_ad needs AD-mode field grids")
    dims, spacing = _grid_geometry(system, params)
    if fields.dims != dims:
        raise ValueError("field grid dims do not match the solver grid")
    nodes, assigns, derivs = _stencil_rows(system, params, table)
    row_len = _row_len(params.order, padded_rows)
    ix, iy, iz = _node_indices(nodes, dims, row_len, params.order)
    ax, ay, az = (a[:, :row_len] for a in assigns)
    dx, dy, dz = (d[:, :row_len] for d in derivs)

    phi = _gather(fields.phi, ix, iy, iz)
    # Pass 1: weighted potential sums (gradient stencil per dimension).
    sum_x = _ordered_stencil_sum(az[:, :, None, None] * ay[:, None, :, None] * dx[:, None, None, :] * phi)
    sum_y = _ordered_stencil_sum(az[:, :, None, None] * dy[:, None, :, None] * ax[:, None, None, :] * phi)
    sum_z = _ordered_stencil_sum(dz[:, :, None, None] * ay[:, None, :, None] * ax[:, None, None, :] * phi)

    # Pass 2: convert the stored triples into force components.
    scale = params.force_scale * system.charges
    forces = np.empty((system.n_atoms, 3))
    forces[:, 0] = -scale * sum_x / spacing[0]
    forces[:, 1] = -scale * sum_y / spacing[1]
    forces[:, 2] = -scale * sum_z / spacing[2]
    _count_touch(counters, "cells_touched_distribute", system.n_atoms, params.order)
    return forces
