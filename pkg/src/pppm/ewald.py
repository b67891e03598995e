"""Direct Ewald summation: the ground-truth reference for the mesh solver.

The total electrostatic energy of a neutral periodic system is split into a
screened real-space sum over minimum-image pairs within a cutoff, a
reciprocal-space sum over integer wave vectors k = 2 pi (mx/Lx, my/Ly, mz/Lz)
with |m_d| <= kmax, and the constant self-energy term.  Forces come from the
analytic gradients of both sums.  Everything is evaluated directly (no mesh,
no FFT), so with a converged cutoff and kmax the result is exact up to
rounding and is independent of the splitting parameter.

Convergence test: the real-space tail is bounded by erfc(alpha * cutoff) and
the reciprocal tail by exp(-k^2 / (4 alpha^2)) at the largest retained |k|;
:func:`suggest_reference_params` picks (alpha, cutoff, kmax) so both factors
fall below a requested tolerance, and the alpha-independence of the total
energy is the end-to-end check that the truncation is converged.

Cost is O(N^2 + N kmax^3); intended for N up to about a thousand.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

from .model import (
    AtomSystem,
    ConfigurationError,
    EnergyBreakdown,
    SingularityError,
    minimum_image,
)
from .shortrange import OVERLAP_DISTANCE, self_energy

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def suggest_reference_params(system: AtomSystem, tail: float = 1e-12):
    """Converged (alpha, cutoff, kmax) for :func:`ewald_reference`.

    ``tail`` bounds both truncation factors: erfc(alpha * cutoff) ~ tail and
    exp(-kmax^2 / (4 alpha^2)) <= tail at the smallest box edge.
    """
    if not (0.0 < tail < 1.0):
        raise ValueError("tail must lie in (0, 1)")
    cutoff = 0.4999 * system.box.min_edge
    spread = math.sqrt(-math.log(tail))
    alpha = spread / cutoff
    kmax = int(math.ceil(alpha * spread * float(system.box.lengths.max()) / math.pi))
    return alpha, cutoff, max(1, kmax)


def _real_space(system, alpha, cutoff, scale, block=128):
    """Direct minimum-image pair sum (no cell list); O(N^2) in blocks."""
    pos = system.positions
    q = system.charges
    n = system.n_atoms
    forces = np.zeros((n, 3))
    energy = 0.0
    for start in range(0, n, block):
        stop = min(start + block, n)
        disp = minimum_image(pos[start:stop, None, :] - pos[None, :, :], system.box)
        r2 = np.sum(disp * disp, axis=2)
        idx = np.arange(start, stop)
        r2[idx - start, idx] = np.inf  # mask self pairs
        mask = r2 < cutoff * cutoff
        if not np.any(mask):
            continue
        r = np.sqrt(r2, where=mask, out=np.full_like(r2, np.inf))
        if float(r[mask].min()) < OVERLAP_DISTANCE:
            bi, bj = np.unravel_index(int(np.argmin(np.where(mask, r, np.inf))), r.shape)
            raise SingularityError(start + bi, bj, r[bi, bj])
        qq = scale * q[start:stop, None] * q[None, :]
        screened = erfc(alpha * r, where=mask, out=np.zeros_like(r))
        inv_r = np.where(mask, 1.0 / r, 0.0)
        energy += 0.5 * float(np.sum(qq * screened * inv_r, where=mask))
        gauss = np.where(mask, np.exp(-alpha * alpha * r2), 0.0)
        fmag = qq * (screened * inv_r * inv_r + _TWO_OVER_SQRT_PI * alpha * gauss * inv_r)
        forces[start:stop] = np.sum((fmag * inv_r)[:, :, None] * disp, axis=1)
    return forces, energy


def _half_space_modes(box, kmax):
    """Integer mode triples covering half of k-space (conjugate half implied)."""
    rng = np.arange(-kmax, kmax + 1)
    mx, my, mz = np.meshgrid(rng, rng, rng, indexing="ij")
    m = np.stack([mx.ravel(), my.ravel(), mz.ravel()], axis=1)
    keep = (m[:, 2] > 0) | ((m[:, 2] == 0) & (m[:, 1] > 0)) | (
        (m[:, 2] == 0) & (m[:, 1] == 0) & (m[:, 0] > 0)
    )
    return m[keep]


def _reciprocal_space(system, alpha, kmax, scale, mode_block=4096):
    """Direct reciprocal sum over +/- modes; returns (forces, energy)."""
    pos = system.positions
    q = system.charges
    volume = system.box.volume
    modes = _half_space_modes(system.box, kmax)
    kvecs = 2.0 * math.pi * modes / system.box.lengths[None, :]

    forces = np.zeros((system.n_atoms, 3))
    energy = 0.0
    for start in range(0, kvecs.shape[0], mode_block):
        k = kvecs[start : start + mode_block]
        k2 = np.sum(k * k, axis=1)
        coef = 4.0 * math.pi * np.exp(-k2 / (4.0 * alpha * alpha)) / k2
        phases = np.exp(1j * (pos @ k.T))  # (N, M)
        structure = q @ phases  # S(k), shape (M,)
        # Full-space sums double the half-space contributions.
        energy += float(np.sum(coef * np.abs(structure) ** 2)) / volume
        im = np.imag(np.conj(structure)[None, :] * phases)  # (N, M)
        forces += (2.0 / volume) * q[:, None] * (im @ (coef[:, None] * k))
    return scale * forces, scale * energy


def ewald_reference(
    system: AtomSystem,
    alpha: float,
    cutoff: float,
    kmax: int,
    *,
    coulomb_constant: float = 1.0,
    dielectric: float = 1.0,
):
    """Reference forces and energy breakdown by direct Ewald summation.

    ``cutoff`` must respect the minimum-image limit (at most half the smallest
    box edge); ``kmax`` truncates the reciprocal sum at |m_d| <= kmax.  The
    caller owns convergence: see the module docstring and
    :func:`suggest_reference_params`.

    Returns ``(forces, EnergyBreakdown)``.
    """
    if abs(system.net_charge) > 1e-10 * max(1.0, float(np.abs(system.charges).sum())):
        raise ConfigurationError("Ewald reference requires a charge-neutral system")
    if alpha <= 0.0:
        raise ConfigurationError("alpha must be positive")
    if cutoff <= 0.0 or cutoff > 0.5 * system.box.min_edge:
        raise ConfigurationError("cutoff must lie in (0, min box edge / 2]")
    if kmax < 1:
        raise ConfigurationError("kmax must be >= 1")
    scale = coulomb_constant / dielectric

    real_forces, real_energy = _real_space(system, alpha, cutoff, scale)
    recip_forces, recip_energy = _reciprocal_space(system, alpha, kmax, scale)
    self_term = self_energy(
        system, alpha, coulomb_constant=coulomb_constant, dielectric=dielectric
    )
    breakdown = EnergyBreakdown(pair=real_energy, kspace=recip_energy, self_energy=self_term)
    return real_forces + recip_forces, breakdown


def rms_force_error(test, reference):
    """Absolute and relative RMS force error of ``test`` against ``reference``.

    absolute = sqrt(mean_j |F_j - F_j_ref|^2) and relative = absolute divided
    by sqrt(mean_j |F_j_ref|^2).  Raises on shape mismatch or a zero reference
    norm (the relative error would be undefined).
    """
    test = np.asarray(test, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if test.shape != reference.shape:
        raise ValueError(f"force sets differ in shape: {test.shape} vs {reference.shape}")
    n = reference.shape[0]
    absolute = math.sqrt(float(np.sum((test - reference) ** 2)) / n)
    ref_norm = math.sqrt(float(np.sum(reference**2)) / n)
    if ref_norm == 0.0:
        raise ValueError("reference forces are identically zero; relative error undefined")
    return absolute, absolute / ref_norm
