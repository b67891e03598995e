import numpy as np
import pytest

from pppm import (
    ConfigurationError,
    DiffMode,
    compute_forces,
    generate_scenario,
    integrate_nve,
    make_report,
    plan_params,
    validate_report,
)
from pppm.driver import REPORT_SECTIONS, SectionTimer, write_records


class TestScenarios:
    def test_rocksalt_16_two_atom_basis(self):
        s = generate_scenario("rocksalt", 16, spacing=1.0)
        assert s.n_atoms == 16
        assert s.net_charge == 0.0
        # 4 x 2 x 2 even site grid, one charge flip per step along each axis
        assert np.array_equal(s.box.lengths, [4.0, 2.0, 2.0])
        lattice = {tuple(p) for p in s.positions}
        assert lattice == {(float(i), float(j), float(k))
                           for i in range(4) for j in range(2) for k in range(2)}

    def test_rocksalt_cube(self):
        s = generate_scenario("rocksalt", 64, spacing=1.5)
        assert np.array_equal(s.box.lengths, [6.0, 6.0, 6.0])
        assert s.net_charge == 0.0

    def test_rocksalt_bad_count(self):
        with pytest.raises(ConfigurationError):
            generate_scenario("rocksalt", 100)

    def test_random_gas_deterministic(self):
        a = generate_scenario("random_gas", 64, seed=9)
        b = generate_scenario("random_gas", 64, seed=9)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.charges, b.charges)

    def test_random_gas_needs_even_count(self):
        with pytest.raises(ConfigurationError):
            generate_scenario("random_gas", 63)

    def test_random_gas_min_separation(self):
        from pppm import minimum_image

        s = generate_scenario("random_gas", 64, seed=3, min_separation=0.8)
        d = minimum_image(s.positions[:, None, :] - s.positions[None, :, :], s.box)
        r = np.sqrt((d**2).sum(axis=2))
        np.fill_diagonal(r, np.inf)
        assert r.min() >= 0.8

    def test_dipole_probe(self):
        s = generate_scenario("dipole_probe", 2, separation=2.0)
        assert s.n_atoms == 2
        assert np.linalg.norm(s.positions[0] - s.positions[1]) == pytest.approx(2.0)
        with pytest.raises(ConfigurationError):
            generate_scenario("dipole_probe", 3)

    def test_unknown_scenario(self):
        with pytest.raises(ConfigurationError):
            generate_scenario("bcc", 16)

    def test_jitter_stays_deterministic(self):
        a = generate_scenario("rocksalt", 64, seed=4, jitter=0.3)
        b = generate_scenario("rocksalt", 64, seed=4, jitter=0.3)
        assert np.array_equal(a.positions, b.positions)

    def test_temperature_draws_velocities(self):
        s = generate_scenario("random_gas", 64, seed=5, temperature=0.5)
        assert s.velocities is not None
        assert np.abs(s.velocities.mean(axis=0)).max() <= 1e-12


class TestComputeForces:
    def test_sections_and_counters(self, gas_512):
        params = plan_params(gas_512.box, 512, 512.0, cutoff=3.0, accuracy=1e-3,
                             order=7, mode=DiffMode.IK)
        timer = SectionTimer()
        counters = {}
        forces, energy, sections = compute_forces(
            gas_512, params, timer=timer, counters=counters
        )
        assert forces.shape == (512, 3)
        assert set(sections) == {"pair", "pppm_fft", "pppm_non_fft"}
        assert all(v >= 0 for v in sections.values())
        assert counters["cells_touched_map"] == 512 * 343
        assert counters["grid_points"] == int(np.prod(params.grid_dims))
        assert energy.total == energy.pair + energy.kspace + energy.self_energy

    def test_deterministic_single_worker(self, gas_512):
        params = plan_params(gas_512.box, 512, 512.0, cutoff=3.0, accuracy=1e-3,
                             order=7, mode=DiffMode.AD)
        f1, e1, _ = compute_forces(gas_512, params)
        f2, e2, _ = compute_forces(gas_512, params)
        assert np.array_equal(f1, f2)
        assert e1 == e2

    def test_net_force_small_ik(self, gas_512):
        params = plan_params(gas_512.box, 512, 512.0, cutoff=3.0, accuracy=1e-4,
                             order=7, mode=DiffMode.IK)
        forces, _, _ = compute_forces(gas_512, params)
        mean_force = np.mean(np.linalg.norm(forces, axis=1))
        assert np.abs(forces.sum(axis=0)).max() <= 1e-9 * mean_force


class TestIntegrateNve:
    def test_nothing_moves_without_charges_or_velocities(self):
        from pppm import AtomSystem, SimulationBox

        s = AtomSystem(
            box=SimulationBox([6.0] * 3),
            positions=[[1.0, 1.0, 1.0], [3.0, 3.0, 3.0]],
            charges=[0.0, 0.0],
            velocities=np.zeros((2, 3)),
        )
        params = plan_params(s.box, 2, 2.0, cutoff=2.0, accuracy=1e-3, order=5,
                             mode=DiffMode.IK)
        out = integrate_nve(s, params, dt=1e-2, steps=20)
        assert np.array_equal(out["final"].positions, s.positions)
        energy = out["series"]["total_energy"]
        assert np.all(energy == energy[0])

    def test_requires_velocities(self, gas_512):
        params = plan_params(gas_512.box, 512, 512.0, cutoff=3.0, accuracy=1e-3,
                             order=7, mode=DiffMode.IK)
        with pytest.raises(ValueError, match="velocities"):
            integrate_nve(gas_512, params, dt=1e-3, steps=1)

    def test_short_stable_run(self):
        s = generate_scenario("random_gas", 32, seed=6, temperature=1e-6,
                              min_separation=0.8)
        params = plan_params(s.box, 32, 32.0, cutoff=2.0, accuracy=1e-3, order=5,
                             mode=DiffMode.IK)
        out = integrate_nve(s, params, dt=1e-3, steps=20)
        energy = out["series"]["total_energy"]
        assert np.abs(energy - energy[0]).max() <= 1e-3 * abs(energy[0])
        assert out["series"]["temperature"].shape == (21,)


class TestReports:
    def test_make_and_validate(self, gas_512):
        params = plan_params(gas_512.box, 512, 512.0, cutoff=3.0, accuracy=1e-3,
                             order=7, mode=DiffMode.IK)
        record = make_report(
            sections={"pair": 0.1, "pppm_fft": 0.2, "pppm_non_fft": 0.3},
            wall_total=0.7,
            n_atoms=512,
            params=params,
            steps=1,
            workers=1,
            counters={"grid_points": 1000},
        )
        validate_report(record)
        assert set(record["sections"]) == set(REPORT_SECTIONS)
        assert record["sections"]["other"] == pytest.approx(0.1)

    def test_other_clipped_at_zero(self, gas_512):
        params = plan_params(gas_512.box, 512, 512.0, cutoff=3.0, accuracy=1e-3,
                             order=7, mode=DiffMode.IK)
        record = make_report(
            sections={"pair": 1.0, "pppm_fft": 1.0, "pppm_non_fft": 1.0},
            wall_total=0.5, n_atoms=512, params=params, steps=1, workers=1,
        )
        assert record["sections"]["other"] == 0.0

    def test_validate_rejects_bad_records(self):
        with pytest.raises(ValueError):
            validate_report({"sections": {"pair": 0.0}})
        with pytest.raises(ValueError):
            validate_report({"sections": {k: -1.0 for k in REPORT_SECTIONS},
                             "n_atoms": 1, "steps": 1, "workers": 1,
                             "params": {}, "build_id": "x"})

    def test_write_json_and_csv(self, tmp_path, gas_512):
        params = plan_params(gas_512.box, 512, 512.0, cutoff=3.0, accuracy=1e-3,
                             order=7, mode=DiffMode.IK)
        record = make_report(sections={"pair": 0.1, "pppm_fft": 0.2, "pppm_non_fft": 0.3},
                             wall_total=0.7, n_atoms=512, params=params, steps=1,
                             workers=1)
        import json

        json_path = tmp_path / "r.jsonl"
        write_records([record, record], json_path, "json")
        lines = json_path.read_text().strip().splitlines()
        assert len(lines) == 2
        parsed = json.loads(lines[0])
        validate_report(parsed)

        csv_path = tmp_path / "r.csv"
        write_records([record], csv_path, "csv")
        header = csv_path.read_text().splitlines()[0]
        assert "sections.pair" in header and "params.order" in header
