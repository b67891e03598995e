"""FFT-based Poisson solver on the periodic charge grid.

Transform convention: the forward transform is unnormalized and the backward
transform carries the 1/(nx ny nz) factor (the numpy default).  With grids
storing charge *density*, that convention makes the solved potential grid
physical with no further volume factors: phi = backward(G * forward(rho)).

The influence function G converts the transformed density into the
transformed potential.  The default is the smooth-splitting form

    G(k) = (4 pi / k^2) * exp(-k^2 / (4 alpha^2)) / D(k)^2,

where D(k) is the triple product of per-dimension Fourier transforms of the
order-S assignment spline, sinc(m/n)^S per dimension; dividing by D^2 undoes
the smoothing applied by both mapping steps.  The zero mode is set to 0
(conducting-boundary convention for neutral systems), and any mode where
|D| falls below a floor gets G = 0.  An alias-summed "optimal" variant over
+/-2 Brillouin images is available behind a switch; it minimizes the
mean-square force error of reciprocal differentiation at the cost of a more
expensive setup, and tiny negative values from the truncated alias sum are
clamped to keep G non-negative.

Grid arrays are indexed ``[iz, iy, ix]`` (x fastest) throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigurationError, DiffMode, SimulationBox
from .gridmap import ChargeGrid, FieldGrids

DECONV_FLOOR = 1e-10
DEFAULT_MAX_DIM = 512


def adjust_grid_dims(dims, enabled=True):
    """Bump any grid dimension that is a multiple of 16 up by 1.

    Some FFT implementations hit pathological slow paths at those sizes; the
    odd size dodges them and costs a slightly finer (more accurate) grid.
    Idempotent: a bumped dimension is congruent to 1 mod 16.
    """
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise ConfigurationError("grid dimensions must be positive")
    if not enabled:
        return dims
    return tuple(d + 1 if d % 16 == 0 else d for d in dims)


def select_grid_dims(
    box: SimulationBox,
    alpha: float,
    accuracy: float,
    order: int,
    n_atoms: int,
    charge_sq_sum: float,
    *,
    coulomb_constant: float = 1.0,
    max_dim: int = DEFAULT_MAX_DIM,
    bump: bool = True,
):
    """Smallest per-dimension grid counts meeting the accuracy target.

    Each dimension independently takes the smallest count whose estimated
    error contribution keeps the combined mesh estimate at or below
    ``accuracy`` (per-dimension error balancing); the counts then pass
    through :func:`adjust_grid_dims`.  Raises if any dimension would exceed
    ``max_dim``.
    """
    from .tuner import mesh_error_one_dim, KSPACE_ERROR_CALIBRATION

    if not (0.0 < accuracy < 1.0):
        raise ConfigurationError("accuracy must lie in (0, 1)")
    if alpha <= 0.0:
        raise ConfigurationError("alpha must be positive")
    # Combined estimate is CAL * sqrt(sum of per-dim errors^2) / sqrt(3) over
    # the unit two-charge force; holding each dimension at `target` keeps it
    # at or below `accuracy`.
    target = accuracy * coulomb_constant / KSPACE_ERROR_CALIBRATION
    dims = []
    for length in box.lengths:
        n = order
        while mesh_error_one_dim(length / n, length, alpha, order, n_atoms, charge_sq_sum) > target:
            n += 1
            if n > max_dim:
                raise ConfigurationError(
                    f"accuracy {accuracy} needs more than {max_dim} grid points along "
                    f"an edge of length {length}; relax the target or override the grid"
                )
        dims.append(n)
    return adjust_grid_dims(tuple(dims), enabled=bump)


def spline_fourier(m, n, order):
    """Per-dimension spline transform sinc(m/n)^order at integer mode ``m``."""
    return np.sinc(np.asarray(m, dtype=float) / n) ** order


@dataclass(frozen=True)
class KSpacePlan:
    """Immutable solve plan: wave vectors, influence function, transforms.

    Mode indices follow the FFT layout (m in [-n/2, n/2) for even n).  The
    ``ik_*`` arrays are the reciprocal differentiation vectors with the
    Nyquist entry zeroed for even dimensions, where the derivative of a real
    field is ambiguous; the influence function is negligible there anyway.
    """

    dims: tuple[int, int, int]
    box_lengths: np.ndarray
    alpha: float
    order: int
    influence: np.ndarray  # (nz, ny, nx)
    ik_x: np.ndarray
    ik_y: np.ndarray
    ik_z: np.ndarray
    forward: callable
    backward: callable

    @property
    def volume(self) -> float:
        return float(np.prod(self.box_lengths))

    @property
    def cell_volume(self) -> float:
        nx, ny, nz = self.dims
        return self.volume / (nx * ny * nz)


def _mode_numbers(n):
    return np.fft.fftfreq(n, d=1.0 / n)


def _pme_influence(dims, box, alpha, order, floor):
    nx, ny, nz = dims
    lx, ly, lz = box.lengths
    mx, my, mz = _mode_numbers(nx), _mode_numbers(ny), _mode_numbers(nz)
    kx = 2.0 * math.pi * mx / lx
    ky = 2.0 * math.pi * my / ly
    kz = 2.0 * math.pi * mz / lz
    k2 = (
        kz[:, None, None] ** 2 + ky[None, :, None] ** 2 + kx[None, None, :] ** 2
    )
    deconv = (
        spline_fourier(mz, nz, order)[:, None, None]
        * spline_fourier(my, ny, order)[None, :, None]
        * spline_fourier(mx, nx, order)[None, None, :]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        green = 4.0 * math.pi * np.exp(-k2 / (4.0 * alpha * alpha)) / k2
        influence = green / deconv**2
    influence[0, 0, 0] = 0.0
    influence[np.abs(deconv) < floor] = 0.0
    return influence


def _optimal_influence(dims, box, alpha, order, floor, images=2):
    """Alias-summed optimal influence function for reciprocal differentiation."""
    nx, ny, nz = dims
    lx, ly, lz = box.lengths
    mx, my, mz = _mode_numbers(nx), _mode_numbers(ny), _mode_numbers(nz)
    kx = (2.0 * math.pi * mx / lx)[None, None, :]
    ky = (2.0 * math.pi * my / ly)[None, :, None]
    kz = (2.0 * math.pi * mz / lz)[:, None, None]
    k2 = kx**2 + ky**2 + kz**2

    numer = np.zeros(dims[::-1])
    denom = np.zeros(dims[::-1])
    shifts = range(-images, images + 1)
    # Only the unshifted zero mode has k2b == 0; its NaN is overwritten below.
    with np.errstate(divide="ignore", invalid="ignore"):
        for bz in shifts:
            wz = spline_fourier(mz + bz * nz, nz, order)[:, None, None]
            kzb = kz + 2.0 * math.pi * bz * nz / lz
            for by in shifts:
                wy = spline_fourier(my + by * ny, ny, order)[None, :, None]
                kyb = ky + 2.0 * math.pi * by * ny / ly
                for bx in shifts:
                    wx = spline_fourier(mx + bx * nx, nx, order)[None, None, :]
                    kxb = kx + 2.0 * math.pi * bx * nx / lx
                    w2 = (wx * wy * wz) ** 2
                    k2b = kxb**2 + kyb**2 + kzb**2
                    green = 4.0 * math.pi * np.exp(-k2b / (4.0 * alpha * alpha)) / k2b
                    numer += w2 * green * (kx * kxb + ky * kyb + kz * kzb)
                    denom += w2
    with np.errstate(divide="ignore", invalid="ignore"):
        influence = numer / (k2 * denom**2)
    influence[0, 0, 0] = 0.0
    influence[denom < floor] = 0.0
    np.maximum(influence, 0.0, out=influence)
    return influence


def build_plan(
    dims,
    box: SimulationBox,
    alpha: float,
    order: int,
    *,
    influence: str = "pme",
    deconv_floor: float = DECONV_FLOOR,
    fft=None,
) -> KSpacePlan:
    """Precompute the influence function and transforms for ``dims``.

    ``influence`` selects "pme" (default) or "optimal" (alias-summed).  ``fft``
    may supply a ``(forward, backward)`` pair to swap the transform backend;
    the forward must be unnormalized and the backward must carry the 1/N
    normalization.
    """
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise ConfigurationError("grid dimensions must be positive")
    if any(d < order for d in dims):
        raise ConfigurationError("grid dimensions must be >= the stencil order")
    if alpha <= 0.0:
        raise ConfigurationError("alpha must be positive")

    if influence == "pme":
        g = _pme_influence(dims, box, alpha, order, deconv_floor)
    elif influence == "optimal":
        g = _optimal_influence(dims, box, alpha, order, deconv_floor)
    else:
        raise ConfigurationError(f"unknown influence variant {influence!r}")
    g.flags.writeable = False

    nx, ny, nz = dims
    lx, ly, lz = box.lengths
    ik = []
    for n, length in ((nx, lx), (ny, ly), (nz, lz)):
        m = _mode_numbers(n)
        if n % 2 == 0:
            m = m.copy()
            m[n // 2] = 0.0  # Nyquist derivative of a real field is ambiguous
        vec = 2.0 * math.pi * m / length
        vec.flags.writeable = False
        ik.append(vec)

    forward, backward = fft if fft is not None else (np.fft.fftn, np.fft.ifftn)
    return KSpacePlan(
        dims=dims,
        box_lengths=box.lengths,
        alpha=float(alpha),
        order=int(order),
        influence=g,
        ik_x=ik[0],
        ik_y=ik[1],
        ik_z=ik[2],
        forward=forward,
        backward=backward,
    )


def _check_grid(grid, plan):
    if grid.dims != plan.dims:
        raise ValueError(f"grid dims {grid.dims} do not match plan dims {plan.dims}")


def _imag_residue(complex_grid, real_grid):
    scale = float(np.max(np.abs(real_grid)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(complex_grid.imag))) / scale


def poisson_ik(rho: ChargeGrid, plan: KSpacePlan) -> FieldGrids:
    """Solve for the field directly in reciprocal space (three back transforms).

    E_d(k) = -i k_d G(k) rho(k); the imaginary residue of the back transforms
    is recorded on the result and discarded.
    """
    _check_grid(rho, plan)
    rho_hat = plan.forward(rho.values)
    phi_hat = plan.influence * rho_hat
    fields = []
    residue = 0.0
    for axis_vec, axis in ((plan.ik_x, 2), (plan.ik_y, 1), (plan.ik_z, 0)):
        shape = [1, 1, 1]
        shape[axis] = axis_vec.size
        e_hat = -1j * axis_vec.reshape(shape) * phi_hat
        e = plan.backward(e_hat)
        real = np.ascontiguousarray(e.real)
        residue = max(residue, _imag_residue(e, real))
        real.flags.writeable = False
        fields.append(real)
    ex, ey, ez = fields
    return FieldGrids(
        mode=DiffMode.IK,
        dims=rho.dims,
        spacing=rho.spacing,
        ex=ex,
        ey=ey,
        ez=ez,
        imag_residue=residue,
    )


def poisson_ad(rho: ChargeGrid, plan: KSpacePlan) -> FieldGrids:
    """Solve for the scalar potential (one back transform)."""
    _check_grid(rho, plan)
    rho_hat = plan.forward(rho.values)
    phi_c = plan.backward(plan.influence * rho_hat)
    phi = np.ascontiguousarray(phi_c.real)
    residue = _imag_residue(phi_c, phi)
    phi.flags.writeable = False
    return FieldGrids(
        mode=DiffMode.AD,
        dims=rho.dims,
        spacing=rho.spacing,
        phi=phi,
        imag_residue=residue,
    )


def kspace_energy(
    rho: ChargeGrid,
    plan: KSpacePlan,
    *,
    coulomb_constant: float = 1.0,
    dielectric: float = 1.0,
) -> float:
    """Reciprocal-space energy of the density grid.

    Equals C/dielectric * Vcell^2/(2V) * sum_k G(k) |rho_hat(k)|^2 under the
    module's transform convention (the Vcell^2 factor converts the density
    DFT to the physical structure factor).  Non-negative because G >= 0.
    """
    _check_grid(rho, plan)
    rho_hat = plan.forward(rho.values)
    total = float(np.sum(plan.influence * (rho_hat.real**2 + rho_hat.imag**2)))
    scale = coulomb_constant / dielectric
    return scale * plan.cell_volume**2 / (2.0 * plan.volume) * total
