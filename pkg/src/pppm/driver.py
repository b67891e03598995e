"""Scenario generation, the full-timestep force driver, NVE integration,
and timing reports.

A force evaluation is timed in three measured sections: "pair" wraps the cell
list and the screened pair loop, "pppm_fft" wraps the Poisson solve and the
reciprocal-space energy (transforms plus influence multiply), and
"pppm_non_fft" wraps the two mapping kernels.  "other" is whatever remains of
the wall total and is clipped at zero.  Counters ride along: stencil
footprint touches (atoms times order cubed per mapping call), pair counts,
and grid points.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .model import (
    AtomSystem,
    ConfigurationError,
    DiffMode,
    EnergyBreakdown,
    PppmParams,
    SimulationBox,
    wrap,
)
from .stencil import StencilTable, build_table
from .gridmap import map_charge, distribute_force_ik, distribute_force_ad
from .kspace import KSpacePlan, build_plan, kspace_energy, poisson_ad, poisson_ik
from .shortrange import LjParams, build_cell_list, pair_forces, self_energy

REPORT_SECTIONS = ("pppm_non_fft", "pppm_fft", "pair", "other")

SCENARIOS = ("random_gas", "rocksalt", "dipole_probe")

DEFAULT_GAS_DENSITY = 0.25


@dataclass
class RunConfig:
    """Everything a CLI subcommand needs to reproduce a run."""

    scenario: str = "random_gas"
    n: int = 512
    seed: int = 0
    box_hint: float | None = None
    cutoff: float = 3.0
    accuracy: float = 1e-4
    order: int = 7
    mode: str = "ik"
    table_points: int = 5000
    use_table: bool = True
    steps: int = 100
    dt: float = 1e-3
    workers: int = 1
    grid: tuple | None = None
    alpha: float | None = None
    grid_bump: bool = True
    jitter: float = 0.0
    input_path: str | None = None
    output: str | None = None
    fmt: str = "json"


def generate_scenario(
    name: str,
    n: int,
    seed: int = 0,
    box_hint: float | None = None,
    *,
    spacing: float = 2.0,
    separation: float = 1.0,
    jitter: float = 0.0,
    temperature: float = 0.0,
    min_separation: float = 0.0,
) -> AtomSystem:
    """Deterministic benchmark systems.

    random_gas
        ``n`` (even) uniform positions with alternating +1/-1 charges in a
        cubic box of edge ``box_hint`` (default: density 0.25).  A positive
        ``min_separation`` redraws any position closer than that to an
        already-placed atom (deterministic per seed); bare opposite point
        charges have no repulsive core, so time integration needs a floor on
        the initial pair distances to stay well-posed.
    rocksalt
        Alternating +1/-1 charges on a simple cubic lattice with ``spacing``
        between neighbors; ``n`` must factor into three even site counts
        (a cube like 64 or 512, or 2 m^3 with even m).  ``box_hint`` overrides
        the spacing via box_hint / sites_per_edge.  ``jitter`` displaces every
        ion uniformly within +/- jitter per component (seeded), which turns
        the zero-force perfect lattice into a system with well-defined
        relative force errors.
    dipole_probe
        Two opposite unit charges ``separation`` apart in a large cube
        (default edge 50).

    ``temperature`` > 0 draws Maxwell velocities at that temperature (k_B = 1)
    with the center-of-mass drift removed; otherwise velocities are zero.
    """
    rng = np.random.default_rng(seed)
    if name == "random_gas":
        if n < 2 or n % 2:
            raise ConfigurationError("random_gas needs an even atom count >= 2")
        edge = box_hint if box_hint is not None else (n / DEFAULT_GAS_DENSITY) ** (1.0 / 3.0)
        box = SimulationBox([edge, edge, edge])
        if min_separation > 0.0:
            positions = _poisson_gas(rng, n, edge, box, min_separation)
        else:
            positions = rng.uniform(0.0, edge, (n, 3))
        charges = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    elif name == "rocksalt":
        sites = _rocksalt_sites(n)
        if box_hint is not None:
            spacing = box_hint / sites[0]
        box = SimulationBox([s * spacing for s in sites])
        ix, iy, iz = np.meshgrid(*(np.arange(s) for s in sites), indexing="ij")
        idx = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)
        charges = np.where((idx.sum(axis=1) % 2) == 0, 1.0, -1.0)
        positions = idx * spacing
        if jitter:
            positions = positions + rng.uniform(-jitter, jitter, positions.shape)
    elif name == "dipole_probe":
        if n != 2:
            raise ConfigurationError("dipole_probe needs exactly 2 atoms")
        edge = box_hint if box_hint is not None else 50.0
        if separation <= 0 or separation >= edge / 2:
            raise ConfigurationError("separation must lie in (0, box/2)")
        box = SimulationBox([edge, edge, edge])
        center = edge / 2.0
        positions = np.array(
            [
                [center - separation / 2.0, center, center],
                [center + separation / 2.0, center, center],
            ]
        )
        charges = np.array([1.0, -1.0])
    else:
        raise ConfigurationError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")

    velocities = None
    if temperature > 0.0:
        velocities = rng.normal(0.0, np.sqrt(temperature), (len(charges), 3))
        velocities -= velocities.mean(axis=0)
    return AtomSystem(box=box, positions=positions, charges=charges, velocities=velocities)


def _poisson_gas(rng, n, edge, box, min_separation):
    """Sequential uniform draws, redrawing points that land too close."""
    from .model import minimum_image

    placed = np.empty((n, 3))
    count = 0
    attempts = 0
    while count < n:
        candidate = rng.uniform(0.0, edge, 3)
        if count:
            delta = minimum_image(placed[:count] - candidate, box)
            if float(np.min(np.sum(delta * delta, axis=1))) < min_separation**2:
                attempts += 1
                if attempts > 2000 * n:
                    raise ConfigurationError(
                        f"cannot place {n} atoms with min separation {min_separation} "
                        f"in a box of edge {edge}"
                    )
                continue
        placed[count] = candidate
        count += 1
    return placed


def _rocksalt_sites(n: int):
    """Factor ``n`` into even per-dimension site counts, as cubic as possible."""
    root = round(n ** (1.0 / 3.0))
    if root**3 == n and root % 2 == 0:
        return (root, root, root)
    half_root = round((n / 2.0) ** (1.0 / 3.0))
    if 2 * half_root**3 == n and half_root % 2 == 0:
        return (2 * half_root, half_root, half_root)
    raise ConfigurationError(
        f"rocksalt count {n} does not factor into even site counts "
        "(use an even cube like 64 or 512, or 2*m^3 with even m)"
    )


class SectionTimer:
    """Accumulates wall time per named section (monotonic clock)."""

    def __init__(self):
        self.seconds = {}

    def add(self, name, dt):
        self.seconds[name] = self.seconds.get(name, 0.0) + dt


class _section:
    def __init__(self, timer, name):
        self.timer = timer
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timer.add(self.name, time.perf_counter() - self.t0)
        return False


@dataclass
class SolverContext:
    """Reusable pieces that survive across force evaluations."""

    params: PppmParams
    table: StencilTable | None
    plan: KSpacePlan

    @classmethod
    def create(cls, system: AtomSystem, params: PppmParams, influence: str = "pme"):
        params.validate_for_box(system.box)
        table = build_table(params.order, params.table_points) if params.use_table else None
        plan = build_plan(
            params.grid_dims, system.box, params.alpha, params.order, influence=influence
        )
        return cls(params=params, table=table, plan=plan)


def compute_forces(
    system: AtomSystem,
    params: PppmParams,
    table: StencilTable | None = None,
    plan: KSpacePlan | None = None,
    lj: LjParams | None = None,
    *,
    workers: int = 1,
    timer: SectionTimer | None = None,
    counters: dict | None = None,
):
    """One full force evaluation: screened pair part plus mesh part.

    Returns ``(forces, EnergyBreakdown, sections)`` where sections maps the
    three measured section names to the wall seconds spent in them during
    this call.
    """
    params.validate_for_box(system.box)
    if table is None and params.use_table:
        table = build_table(params.order, params.table_points)
    if plan is None:
        plan = build_plan(params.grid_dims, system.box, params.alpha, params.order)
    local = SectionTimer()

    with _section(local, "pair"):
        cells = build_cell_list(system, params.cutoff)
        forces, pair_energy = pair_forces(
            system,
            cells,
            params.alpha,
            params.cutoff,
            lj,
            coulomb_constant=params.coulomb_constant,
            dielectric=params.dielectric,
            workers=workers,
            counters=counters,
        )

    with _section(local, "pppm_non_fft"):
        rho = map_charge(system, params, table, workers=workers, counters=counters)

    with _section(local, "pppm_fft"):
        if params.mode is DiffMode.IK:
            fields = poisson_ik(rho, plan)
        else:
            fields = poisson_ad(rho, plan)
        e_kspace = kspace_energy(
            rho, plan, coulomb_constant=params.coulomb_constant, dielectric=params.dielectric
        )

    with _section(local, "pppm_non_fft"):
        if params.mode is DiffMode.IK:
            forces = forces + distribute_force_ik(
                fields, system, params, table, workers=workers, counters=counters
            )
        else:
            forces = forces + distribute_force_ad(
                fields, system, params, table, workers=workers, counters=counters
            )

    energy = EnergyBreakdown(
        pair=pair_energy,
        kspace=e_kspace,
        self_energy=self_energy(
            system,
            params.alpha,
            coulomb_constant=params.coulomb_constant,
            dielectric=params.dielectric,
        ),
    )
    if counters is not None:
        nx, ny, nz = params.grid_dims
        counters["grid_points"] = nx * ny * nz
    if timer is not None:
        for name, dt in local.seconds.items():
            timer.add(name, dt)
    return forces, energy, dict(local.seconds)


def integrate_nve(
    system: AtomSystem,
    params: PppmParams,
    dt: float,
    steps: int,
    lj: LjParams | None = None,
    *,
    workers: int = 1,
    timer: SectionTimer | None = None,
    counters: dict | None = None,
):
    """Velocity-Verlet NVE trajectory with a force evaluation per step.

    The system must carry velocities.  Returns a summary dict with per-step
    series (total/kinetic/potential energy, temperature, net momentum) and
    the final :class:`AtomSystem`.  Temperature is sum(m v^2) / (3 N) with
    k_B = 1.
    """
    if system.velocities is None:
        raise ValueError("NVE integration needs initial velocities")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    ctx_table = build_table(params.order, params.table_points) if params.use_table else None
    plan = build_plan(params.grid_dims, system.box, params.alpha, params.order)

    pos = system.positions.copy()
    vel = system.velocities.copy()
    masses = system.masses[:, None]
    state = system.with_positions(pos, vel)

    def eval_forces(state):
        try:
            return compute_forces(
                state, params, ctx_table, plan, lj,
                workers=workers, timer=timer, counters=counters,
            )
        except Exception as exc:
            exc.args = (f"step {step}: {exc.args[0] if exc.args else exc}",)
            raise

    n = system.n_atoms
    series = {
        "total_energy": np.empty(steps + 1),
        "kinetic": np.empty(steps + 1),
        "potential": np.empty(steps + 1),
        "temperature": np.empty(steps + 1),
        "momentum": np.empty((steps + 1, 3)),
    }

    step = 0
    forces, energy, _ = eval_forces(state)
    for step in range(steps + 1):
        kinetic = 0.5 * float(np.sum(masses * vel**2))
        series["kinetic"][step] = kinetic
        series["potential"][step] = energy.total
        series["total_energy"][step] = kinetic + energy.total
        series["temperature"][step] = float(np.sum(masses * vel**2)) / (3.0 * n)
        series["momentum"][step] = (masses * vel).sum(axis=0)
        if step == steps:
            break
        vel = vel + 0.5 * dt / masses * forces
        pos = wrap(pos + dt * vel, system.box)
        state = system.with_positions(pos, vel)
        forces, energy, _ = eval_forces(state)
        vel = vel + 0.5 * dt / masses * forces

    return {"series": series, "final": system.with_positions(pos, vel), "steps": steps, "dt": dt}


# ---------------------------------------------------------------------------
# Reports


def make_report(
    *,
    sections: dict,
    wall_total: float,
    n_atoms: int,
    params: PppmParams,
    steps: int,
    workers: int,
    counters: dict | None = None,
    extra: dict | None = None,
) -> dict:
    """Assemble a timing record with the four fixed section keys.

    "other" is the wall total minus the three measured sections, clipped at
    zero.  ``extra`` entries are merged at the top level.
    """
    measured = {k: float(sections.get(k, 0.0)) for k in REPORT_SECTIONS if k != "other"}
    other = wall_total - sum(measured.values())
    record = {
        "sections": {**measured, "other": max(0.0, other)},
        "n_atoms": int(n_atoms),
        "steps": int(steps),
        "workers": int(workers),
        "params": {
            "cutoff": params.cutoff,
            "accuracy": params.accuracy,
            "order": params.order,
            "mode": params.mode.value,
            "alpha": params.alpha,
            "grid_dims": list(params.grid_dims),
            "table_points": params.table_points,
            "use_table": params.use_table,
        },
        "counters": dict(counters or {}),
        "build_id": f"pppm-{__version__}",
    }
    if extra:
        record.update(extra)
    return record


def validate_report(record: dict) -> None:
    """Raise ValueError unless ``record`` matches the report schema."""
    if not isinstance(record, dict):
        raise ValueError("report record must be a dict")
    sections = record.get("sections")
    if not isinstance(sections, dict) or set(sections) != set(REPORT_SECTIONS):
        raise ValueError(f"report sections must be exactly {REPORT_SECTIONS}")
    for key, value in sections.items():
        if not isinstance(value, (int, float)) or value < 0:
            raise ValueError(f"section {key} must be a non-negative number")
    for key in ("n_atoms", "steps", "workers", "params", "build_id"):
        if key not in record:
            raise ValueError(f"report record missing {key!r}")
    if not isinstance(record["params"], dict):
        raise ValueError("params echo must be a dict")


def write_records(records, path=None, fmt="json"):
    """Write report records as JSON lines or CSV; path None means stdout."""
    import csv
    import io
    import sys

    if fmt == "json":
        text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    elif fmt == "csv":
        rows = [_flatten(r) for r in records]
        fieldnames = sorted({k for row in rows for k in row})
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as handle:
            handle.write(text)


def _flatten(record, prefix=""):
    flat = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, prefix=f"{name}."))
        elif isinstance(value, (list, tuple)):
            flat[name] = "x".join(str(v) for v in value)
        else:
            flat[name] = value
    return flat
