"""Domain types, units convention, and periodic-geometry primitives.

Units are reduced Gaussian-style: the Coulomb prefactor defaults to 1 and the
dielectric constant to 1, so the energy of two unit charges at unit distance
is 1 energy unit and the force between them is 1 force unit.  Boltzmann's
constant is 1 for temperature bookkeeping.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

NEUTRALITY_RTOL = 1e-12

SUPPORTED_ORDERS = (3, 5, 7)


class ConfigurationError(ValueError):
    """Solver parameters are inconsistent with the system, box, or each other."""


class SingularityError(RuntimeError):
    """Two atoms (nearly) overlap and the pair potential diverges."""

    def __init__(self, i, j, distance):
        super().__init__(f"atoms {i} and {j} overlap (r = {distance:.3e})")
        self.pair = (int(i), int(j))
        self.distance = float(distance)


def _readonly(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


def _require_finite(arr, name):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


class DiffMode(enum.Enum):
    """How the long-range force is differentiated.

    IK multiplies by the wave vector in reciprocal space and transforms three
    field grids back; AD transforms only the scalar potential back and applies
    derivative stencil weights at each atom.
    """

    IK = "ik"
    AD = "ad"


@dataclass(frozen=True)
class SimulationBox:
    """Orthorhombic periodic box with its origin fixed at (0, 0, 0)."""

    lengths: np.ndarray

    def __post_init__(self):
        lengths = _readonly(np.asarray(self.lengths, dtype=float))
        if lengths.shape != (3,):
            raise ValueError("box lengths must be a 3-vector")
        _require_finite(lengths, "box lengths")
        if np.any(lengths <= 0.0):
            raise ValueError("box edge lengths must be strictly positive")
        object.__setattr__(self, "lengths", lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def min_edge(self) -> float:
        return float(self.lengths.min())


def wrap(position, box: SimulationBox):
    """Map positions into [0, L) per dimension.

    Accepts a single 3-vector or an (N, 3) array; returns the same shape.  The
    result differs from the input by an integer number of box lengths in each
    dimension, and wrapping an already-wrapped position is a bitwise no-op.
    """
    pos = np.asarray(position, dtype=float)
    _require_finite(pos, "position")
    lengths = box.lengths
    out = pos - np.floor(pos / lengths) * lengths
    # Rounding can land exactly on L (or just below 0); fold those back.
    out = np.where(out >= lengths, out - lengths, out)
    out = np.where(out < 0.0, out + lengths, out)
    return out


def minimum_image(displacement, box: SimulationBox):
    """Fold displacement components into [-L/2, L/2), the nearest periodic image.

    The half-box point maps to -L/2 (lower-inclusive convention).
    """
    d = np.asarray(displacement, dtype=float)
    _require_finite(d, "displacement")
    lengths = box.lengths
    out = d - np.round(d / lengths) * lengths
    half = 0.5 * lengths
    out = np.where(out >= half, out - lengths, out)
    out = np.where(out < -half, out + lengths, out)
    return out


@dataclass(frozen=True)
class AtomSystem:
    """Point charges in a periodic box.

    Positions are wrapped into the box at construction.  Masses default to 1;
    velocities are optional and only needed for time integration.  Unless
    ``allow_net_charge`` is set, the total charge must vanish to within
    ``NEUTRALITY_RTOL`` of the total absolute charge (the k-space solver drops
    the zero mode, which for a charged system silently implies a neutralizing
    background, so the flag must be explicit).
    """

    box: SimulationBox
    positions: np.ndarray
    charges: np.ndarray
    masses: np.ndarray | None = None
    velocities: np.ndarray | None = None
    allow_net_charge: bool = False

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float)
        charges = np.asarray(self.charges, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError("positions must have shape (N, 3)")
        n = positions.shape[0]
        if n < 1:
            raise ValueError("system must contain at least one atom")
        if charges.shape != (n,):
            raise ValueError("charges must have shape (N,)")
        _require_finite(positions, "positions")
        _require_finite(charges, "charges")

        masses = self.masses
        if masses is None:
            masses = np.ones(n)
        else:
            masses = np.asarray(masses, dtype=float)
            if masses.shape != (n,):
                raise ValueError("masses must have shape (N,)")
            _require_finite(masses, "masses")
            if np.any(masses <= 0.0):
                raise ValueError("masses must be strictly positive")

        velocities = self.velocities
        if velocities is not None:
            velocities = np.asarray(velocities, dtype=float)
            if velocities.shape != (n, 3):
                raise ValueError("velocities must have shape (N, 3)")
            _require_finite(velocities, "velocities")

        if not self.allow_net_charge:
            net = abs(float(charges.sum()))
            scale = float(np.abs(charges).sum())
            if net > NEUTRALITY_RTOL * scale:
                raise ValueError(
                    f"system is not charge neutral (net {charges.sum():+.3e}); "
                    "set allow_net_charge=True to accept a neutralizing background"
                )

        object.__setattr__(self, "positions", _readonly(wrap(positions, self.box)))
        object.__setattr__(self, "charges", _readonly(charges))
        object.__setattr__(self, "masses", _readonly(masses))
        object.__setattr__(
            self, "velocities", None if velocities is None else _readonly(velocities)
        )

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def net_charge(self) -> float:
        return float(self.charges.sum())

    @property
    def charge_sq_sum(self) -> float:
        return float(np.sum(self.charges**2))

    def with_positions(self, positions, velocities=None) -> "AtomSystem":
        """Copy of this system with replaced positions (and optionally velocities)."""
        return AtomSystem(
            box=self.box,
            positions=positions,
            charges=self.charges,
            masses=self.masses,
            velocities=self.velocities if velocities is None else velocities,
            allow_net_charge=self.allow_net_charge,
        )


@dataclass(frozen=True)
class PppmParams:
    """Resolved mesh-solver configuration.

    ``cutoff`` splits the interaction: pairs closer than it are summed
    directly, the rest is solved on the ``grid_dims`` mesh.  ``alpha`` is the
    Ewald splitting parameter (inverse length).  ``order`` is the number of
    grid points per dimension each charge is spread over.
    """

    cutoff: float
    accuracy: float
    order: int
    mode: DiffMode
    alpha: float
    grid_dims: tuple[int, int, int]
    table_points: int = 5000
    use_table: bool = True
    coulomb_constant: float = 1.0
    dielectric: float = 1.0

    def __post_init__(self):
        if not (self.cutoff > 0.0 and np.isfinite(self.cutoff)):
            raise ConfigurationError("cutoff must be positive and finite")
        if not (0.0 < self.accuracy < 1.0):
            raise ConfigurationError("target accuracy must lie in (0, 1)")
        if self.order not in SUPPORTED_ORDERS:
            raise ConfigurationError(f"stencil order must be one of {SUPPORTED_ORDERS}")
        if not isinstance(self.mode, DiffMode):
            raise ConfigurationError("mode must be a DiffMode")
        if not (self.alpha > 0.0 and np.isfinite(self.alpha)):
            raise ConfigurationError("alpha must be positive and finite")
        dims = tuple(int(d) for d in self.grid_dims)
        if len(dims) != 3 or any(d < self.order for d in dims):
            raise ConfigurationError("each grid dimension must be >= the stencil order")
        object.__setattr__(self, "grid_dims", dims)
        if self.use_table and self.table_points < 2:
            raise ConfigurationError("table_points must be >= 2 when the table is enabled")
        if self.dielectric <= 0.0:
            raise ConfigurationError("dielectric must be positive")

    @property
    def force_scale(self) -> float:
        """Prefactor applied to every electrostatic energy and force."""
        return self.coulomb_constant / self.dielectric

    def validate_for_box(self, box: SimulationBox) -> None:
        """Check the cutoff against the minimum-image limit of ``box``."""
        if self.cutoff > 0.5 * box.min_edge:
            raise ConfigurationError(
                f"cutoff {self.cutoff} exceeds half the smallest box edge "
                f"({0.5 * box.min_edge}); minimum-image convention would break"
            )


@dataclass(frozen=True)
class EnergyBreakdown:
    """Electrostatic energy components; ``total`` is their sum by definition."""

    pair: float
    kspace: float
    self_energy: float

    @property
    def total(self) -> float:
        return self.pair + self.kspace + self.self_energy


def load_atom_system(path, allow_net_charge=False) -> AtomSystem:
    """Read an atom system from the plain-text format.

    Line 1 holds the atom count N, line 2 the three box edge lengths, and the
    following N lines hold ``x y z q`` with optional trailing ``m`` or
    ``m vx vy vz`` columns.  ``#`` starts a comment.
    """
    rows = []
    with open(path) as handle:
        for raw in handle:
            line = raw.split("#", 1)[0].strip()
            if line:
                rows.append(line.split())
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a count line and a box line")
    try:
        n = int(rows[0][0])
    except ValueError as exc:
        raise ValueError(f"{path}: first entry must be the atom count") from exc
    if len(rows[1]) != 3:
        raise ValueError(f"{path}: second line must hold three box lengths")
    box = SimulationBox(np.array([float(v) for v in rows[1]]))
    body = rows[2:]
    if len(body) != n:
        raise ValueError(f"{path}: expected {n} atom lines, found {len(body)}")

    widths = {len(r) for r in body}
    if not widths.issubset({4, 5, 8}):
        raise ValueError(f"{path}: atom lines must have 4, 5, or 8 columns")
    if len(widths) != 1:
        raise ValueError(f"{path}: atom lines have inconsistent column counts")
    data = np.array([[float(v) for v in r] for r in body])

    positions = data[:, 0:3]
    charges = data[:, 3]
    masses = data[:, 4] if data.shape[1] >= 5 else None
    velocities = data[:, 5:8] if data.shape[1] == 8 else None
    return AtomSystem(
        box=box,
        positions=positions,
        charges=charges,
        masses=masses,
        velocities=velocities,
        allow_net_charge=allow_net_charge,
    )


def save_atom_system(path, system: AtomSystem) -> None:
    """Write a system in the format understood by :func:`load_atom_system`."""
    with open(path, "w") as handle:
        handle.write(f"{system.n_atoms}\n")
        handle.write("{:.17g} {:.17g} {:.17g}\n".format(*system.box.lengths))
        vel = system.velocities
        for i in range(system.n_atoms):
            fields = [*system.positions[i], system.charges[i], system.masses[i]]
            if vel is not None:
                fields.extend(vel[i])
            handle.write(" ".join(f"{v:.17g}" for v in fields) + "\n")
