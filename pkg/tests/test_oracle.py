import numpy as np
import pytest

from pppm import (
    AtomSystem,
    ConfigurationError,
    SimulationBox,
    ewald_reference,
    generate_scenario,
    rms_force_error,
    suggest_reference_params,
)

MADELUNG = 1.747565  # classical rock-salt lattice constant


@pytest.fixture(scope="module")
def dipole():
    return generate_scenario("dipole_probe", 2, separation=1.0)


class TestEwaldReference:
    def test_dipole_vacuum_coulomb_limit(self, dipole):
        """Two opposite unit charges 1 apart in a 50-box: |F| = 1 within 1e-4."""
        alpha, cutoff, kmax = suggest_reference_params(dipole)
        forces, energy = ewald_reference(dipole, alpha, cutoff, kmax)
        magnitude = np.linalg.norm(forces[0])
        assert abs(magnitude - 1.0) <= 1e-4
        # attractive: forces point toward each other
        assert forces[0][0] > 0 > forces[1][0]
        assert energy.total == pytest.approx(-1.0, abs=1e-3)

    def test_dipole_documented_truncation(self, dipole):
        # A deliberately under-converged kmax (reciprocal tail ~3e-2) still
        # lands within 1e-3 of the vacuum value; convergence is the caller's
        # job, checked via suggest_reference_params elsewhere.
        forces, _ = ewald_reference(dipole, alpha=0.4, cutoff=24.9, kmax=12)
        assert abs(np.linalg.norm(forces[0]) - 1.0) <= 1e-3

    def test_madelung_energy(self):
        lattice = generate_scenario("rocksalt", 64, spacing=1.0)
        alpha, cutoff, kmax = suggest_reference_params(lattice)
        _, energy = ewald_reference(lattice, alpha, cutoff, kmax)
        per_pair = energy.total / (lattice.n_atoms / 2)
        assert per_pair == pytest.approx(-MADELUNG, abs=1e-3 * MADELUNG)

    def test_madelung_scales_with_spacing(self):
        lattice = generate_scenario("rocksalt", 64, spacing=2.0)
        alpha, cutoff, kmax = suggest_reference_params(lattice)
        _, energy = ewald_reference(lattice, alpha, cutoff, kmax)
        per_pair = energy.total / (lattice.n_atoms / 2)
        assert per_pair == pytest.approx(-MADELUNG / 2.0, abs=1e-3 * MADELUNG)

    def test_alpha_independence_five_systems(self):
        """The converged sum does not depend on the splitting parameter."""
        rng = np.random.default_rng(0)
        for seed in range(5):
            n = 16
            edge = 30.0
            positions = rng.uniform(0, edge, (n, 3))
            charges = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
            s = AtomSystem(box=SimulationBox([edge] * 3), positions=positions,
                           charges=charges)
            cutoff = 14.9
            results = []
            for alpha in (0.35, 0.5):
                kmax = int(np.ceil(alpha * np.sqrt(-np.log(1e-13)) * edge / np.pi))
                _, energy = ewald_reference(s, alpha, cutoff, kmax)
                results.append(energy.total)
            assert abs(results[0] - results[1]) <= 1e-8 * abs(results[1])

    def test_momentum(self):
        s = generate_scenario("random_gas", 64, seed=1)
        alpha, cutoff, kmax = suggest_reference_params(s)
        forces, _ = ewald_reference(s, alpha, cutoff, kmax)
        assert np.abs(forces.sum(axis=0)).max() <= 1e-10 * np.abs(forces).sum()

    def test_rejects_charged_system(self):
        s = AtomSystem(box=SimulationBox([10.0] * 3), positions=[[1.0] * 3],
                       charges=[1.0], allow_net_charge=True)
        with pytest.raises(ConfigurationError, match="neutral"):
            ewald_reference(s, 1.0, 4.0, 8)

    def test_rejects_bad_cutoff(self, dipole):
        with pytest.raises(ConfigurationError):
            ewald_reference(dipole, 1.0, 30.0, 8)


class TestRmsForceError:
    def test_identical_sets(self):
        f = np.arange(12.0).reshape(4, 3)
        assert rms_force_error(f, f) == (0.0, 0.0)

    def test_worked_arithmetic_example(self):
        reference = np.zeros((4, 3))
        reference[2] = [0.0, 2.0, 0.0]
        test = reference.copy()
        test[2] += [1.0, 0.0, 0.0]
        absolute, relative = rms_force_error(test, reference)
        assert absolute == pytest.approx(0.5)
        assert relative == pytest.approx(0.5)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            rms_force_error(np.zeros((3, 3)), np.zeros((4, 3)))

    def test_zero_reference_norm(self):
        with pytest.raises(ValueError, match="zero"):
            rms_force_error(np.ones((2, 3)), np.zeros((2, 3)))
