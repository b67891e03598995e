"""Particle-particle particle-mesh electrostatics for periodic point charges.

Splits the Coulomb interaction into a screened real-space pair sum inside a
cutoff and a smooth long-range part solved on an FFT mesh, with reciprocal
(ik) and real-space derivative (ad) differentiation modes, a direct Ewald
summation oracle for verification, a parameter tuner, and a benchmarking CLI.
"""

__version__ = "0.1.0"

from .model import (
    AtomSystem,
    ConfigurationError,
    DiffMode,
    EnergyBreakdown,
    PppmParams,
    SimulationBox,
    SingularityError,
    load_atom_system,
    minimum_image,
    save_atom_system,
    wrap,
)
from .stencil import (
    PADDED_LEN,
    StencilTable,
    assignment_weights,
    build_table,
    derivative_weights,
    lookup_weights,
)
from .gridmap import ChargeGrid, FieldGrids, distribute_force_ad, distribute_force_ik, map_charge
from .kspace import (
    KSpacePlan,
    adjust_grid_dims,
    build_plan,
    kspace_energy,
    poisson_ad,
    poisson_ik,
    select_grid_dims,
)
from .shortrange import CellList, LjParams, build_cell_list, pair_forces, self_energy
from .ewald import ewald_reference, rms_force_error, suggest_reference_params
from .tuner import estimate_kspace_error, plan_params, select_alpha
from .driver import (
    RunConfig,
    SolverContext,
    compute_forces,
    generate_scenario,
    integrate_nve,
    make_report,
    validate_report,
)

__all__ = [name for name in dir() if not name.startswith("_")]
