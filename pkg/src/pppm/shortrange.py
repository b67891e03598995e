"""Real-space screened pair interactions inside the cutoff.

The screened Coulomb term is C q_i q_j erfc(alpha r) / r per pair; its force
magnitude is C q_i q_j (erfc(alpha r)/r^2 + 2 alpha/sqrt(pi) exp(-alpha^2 r^2)/r)
along the pair axis, applied equal and opposite.  Pairs at or beyond the
cutoff contribute nothing; the energy is left unshifted at the cutoff because
the screening makes the tail exponentially small.  An optional truncated,
unshifted Lennard-Jones term can be added to exercise the combined pair cost.

Neighbor search uses a periodic cell list with cells no smaller than the
cutoff, so every interacting pair lies in the same or an adjacent cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .model import AtomSystem, ConfigurationError, SingularityError, minimum_image

OVERLAP_DISTANCE = 1e-10

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class LjParams:
    """Truncated, unshifted Lennard-Jones parameters (disabled by default)."""

    epsilon: float = 1.0
    sigma: float = 1.0
    cutoff: float = 2.5
    enabled: bool = False

    def __post_init__(self):
        if self.enabled:
            if self.epsilon < 0.0:
                raise ValueError("LJ epsilon must be non-negative")
            if self.sigma <= 0.0:
                raise ValueError("LJ sigma must be positive")
            if self.cutoff <= 0.0:
                raise ValueError("LJ cutoff must be positive")


@dataclass(frozen=True)
class CellList:
    """Periodic binning of atoms into cells of size >= cutoff.

    Atom indices are stored sorted by linear cell index, compressed-row style:
    cell c (linear index (cz * ny + cy) * nx + cx) owns ``order[starts[c] :
    ends[c]]``.  Every atom appears in exactly one cell; any pair within the
    cutoff lies in the same or an adjacent cell of the periodic 27-stencil.
    """

    dims: tuple[int, int, int]
    cutoff: float
    order: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    cell_of_atom: np.ndarray

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def atoms_in(self, c) -> np.ndarray:
        return self.order[self.starts[c] : self.ends[c]]


def build_cell_list(system: AtomSystem, cutoff: float) -> CellList:
    """Bin atoms into periodic cells for pair search within ``cutoff``."""
    if cutoff <= 0.0:
        raise ConfigurationError("cutoff must be positive")
    if cutoff > 0.5 * system.box.min_edge:
        raise ConfigurationError(
            f"cutoff {cutoff} exceeds half the smallest box edge "
            f"({0.5 * system.box.min_edge})"
        )
    lengths = system.box.lengths
    dims = tuple(max(1, int(L // cutoff)) for L in lengths)
    sizes = lengths / np.array(dims, dtype=float)

    coords = np.floor(system.positions / sizes).astype(np.intp)
    coords = np.minimum(coords, np.array(dims, dtype=np.intp) - 1)  # guard pos/size == dims
    nx, ny, nz = dims
    linear = (coords[:, 2] * ny + coords[:, 1]) * nx + coords[:, 0]

    order = np.argsort(linear, kind="stable")
    sorted_linear = linear[order]
    ids = np.arange(nx * ny * nz)
    starts = np.searchsorted(sorted_linear, ids)
    ends = np.searchsorted(sorted_linear, ids, side="right")
    return CellList(
        dims=dims, cutoff=cutoff, order=order, starts=starts, ends=ends,
        cell_of_atom=linear,
    )


# Half of the 26 neighbor offsets; with >= 3 cells per dimension each
# adjacent cell pair is visited exactly once.
_HALF_OFFSETS = [
    (dx, dy, dz)
    for dz in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dz, dy, dx) > (0, 0, 0)
]


def _expand_ranges(starts, counts):
    """Concatenate ranges start[k] .. start[k]+count[k] without a Python loop."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.intp)
    base = np.repeat(starts, counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return base + offsets


def candidate_pairs(cells: CellList):
    """All unordered atom pairs from same or adjacent cells, each exactly once.

    Returns (i, j) index arrays with i < j within each pair.  Every pair whose
    minimum-image distance is below the cutoff is guaranteed to appear.
    """
    if min(cells.dims) >= 3:
        i, j = _candidate_pairs_half_stencil(cells)
    else:
        i, j = _candidate_pairs_general(cells)
    swap = i > j
    return np.where(swap, j, i), np.where(swap, i, j)


def _candidate_pairs_half_stencil(cells: CellList):
    """Vectorized enumeration; valid when every dimension has >= 3 cells."""
    nx, ny, nz = cells.dims
    cell = cells.cell_of_atom[cells.order]  # cell of each sorted slot
    n = cells.order.size
    slots = np.arange(n)

    # Same-cell pairs: each sorted slot pairs with the later slots of its cell.
    counts = cells.ends[cell] - (slots + 1)
    i_parts = [np.repeat(cells.order, counts)]
    j_parts = [cells.order[_expand_ranges(slots + 1, counts)]]

    cx = cell % nx
    cy = (cell // nx) % ny
    cz = cell // (nx * ny)
    for dx, dy, dz in _HALF_OFFSETS:
        neighbor = (((cz + dz) % nz) * ny + ((cy + dy) % ny)) * nx + ((cx + dx) % nx)
        counts = cells.ends[neighbor] - cells.starts[neighbor]
        i_parts.append(np.repeat(cells.order, counts))
        j_parts.append(cells.order[_expand_ranges(cells.starts[neighbor], counts)])
    return np.concatenate(i_parts), np.concatenate(j_parts)


def _candidate_pairs_general(cells: CellList):
    """Per-cell enumeration with wrap-around deduplication (tiny cell grids)."""
    nx, ny, nz = cells.dims
    pi, pj = [], []
    for c in range(cells.n_cells):
        atoms_c = cells.atoms_in(c)
        if atoms_c.size == 0:
            continue
        cx, cy, cz = c % nx, (c // nx) % ny, c // (nx * ny)
        neighbors = {
            (((cz + dz) % nz) * ny + ((cy + dy) % ny)) * nx + ((cx + dx) % nx)
            for dz in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dx in (-1, 0, 1)
        }
        for nb in sorted(neighbors):
            if nb < c:
                continue
            if nb == c:
                if atoms_c.size > 1:
                    a, b = np.triu_indices(atoms_c.size, k=1)
                    pi.append(atoms_c[a])
                    pj.append(atoms_c[b])
            else:
                atoms_n = cells.atoms_in(nb)
                if atoms_n.size:
                    a, b = np.meshgrid(atoms_c, atoms_n, indexing="ij")
                    pi.append(a.ravel())
                    pj.append(b.ravel())
    if not pi:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty
    return np.concatenate(pi), np.concatenate(pj)


def pair_forces(
    system: AtomSystem,
    cells: CellList,
    alpha: float,
    cutoff: float,
    lj: LjParams | None = None,
    *,
    coulomb_constant: float = 1.0,
    dielectric: float = 1.0,
    workers: int = 1,
    counters: dict | None = None,
):
    """Screened real-space forces and energy for all pairs within ``cutoff``.

    Returns ``(forces, pair_energy)`` with forces of shape (N, 3).  Each pair
    is evaluated once and its force applied equal and opposite, so the forces
    sum to zero up to rounding.  With ``workers`` > 1 the pair list is split
    into that many chunks accumulated separately and reduced in chunk order,
    which keeps the result deterministic for a fixed worker count.
    """
    if alpha <= 0.0:
        raise ConfigurationError("alpha must be positive")
    if cutoff > cells.cutoff * (1.0 + 1e-12):
        raise ConfigurationError("cell list was built for a smaller cutoff")
    scale = coulomb_constant / dielectric

    i, j = candidate_pairs(cells)
    disp = minimum_image(system.positions[i] - system.positions[j], system.box)
    r2 = np.sum(disp * disp, axis=1)
    mask = r2 < cutoff * cutoff
    i, j, disp, r2 = i[mask], j[mask], disp[mask], r2[mask]
    r = np.sqrt(r2)

    if r.size and float(r.min()) < OVERLAP_DISTANCE:
        k = int(np.argmin(r))
        raise SingularityError(i[k], j[k], r[k])

    if counters is not None:
        counters["pair_candidates"] = counters.get("pair_candidates", 0) + int(mask.size)
        counters["pairs_within_cutoff"] = counters.get("pairs_within_cutoff", 0) + int(r.size)

    n = system.n_atoms
    if r.size == 0:
        return np.zeros((n, 3)), 0.0

    qq = scale * system.charges[i] * system.charges[j]
    screened = erfc(alpha * r)
    energy_terms = qq * screened / r
    fmag = qq * (screened / r2 + _TWO_OVER_SQRT_PI * alpha * np.exp(-alpha * alpha * r2) / r)

    if lj is not None and lj.enabled:
        lj_mask = r < lj.cutoff
        sr6 = (lj.sigma / r[lj_mask]) ** 6
        energy_terms = energy_terms.copy()
        energy_terms[lj_mask] += 4.0 * lj.epsilon * (sr6 * sr6 - sr6)
        fadd = np.zeros_like(fmag)
        fadd[lj_mask] = 24.0 * lj.epsilon * (2.0 * sr6 * sr6 - sr6) / r[lj_mask]
        fmag = fmag + fadd

    fvec = (fmag / r)[:, None] * disp

    workers = max(1, int(workers))
    chunks = np.array_split(np.arange(r.size), workers)
    forces = np.zeros((n, 3))
    for chunk in chunks:
        if chunk.size == 0:
            continue
        part = np.zeros((n, 3))
        np.add.at(part, i[chunk], fvec[chunk])
        np.add.at(part, j[chunk], -fvec[chunk])
        forces += part
    return forces, float(energy_terms.sum())


def self_energy(system: AtomSystem, alpha: float, *, coulomb_constant: float = 1.0, dielectric: float = 1.0) -> float:
    """Constant correction removing each charge's interaction with its own screen.

    Equals -C alpha/sqrt(pi) sum(q_i^2), scaled by the dielectric.
    """
    if alpha <= 0.0:
        raise ConfigurationError("alpha must be positive")
    scale = coulomb_constant / dielectric
    return -scale * alpha / math.sqrt(math.pi) * system.charge_sq_sum
