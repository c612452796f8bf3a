import csv
import json

import numpy as np
import pytest

from rydosc.model import (
    BasisIndex,
    ConfigError,
    DensityOperator,
    StateVector,
    SystemConfig,
    initial_state,
)
from rydosc.trajectories import (
    EnsembleResult,
    TrajectoryOps,
    detect_pattern,
    lindblad_solve,
    post_select,
    run_ensemble,
    run_trajectory,
    summary_record,
    trajectory_seed,
    write_ensemble_csv,
    write_summary_json,
)


def cfg(**kw):
    defaults = dict(n_atoms=2, n_max=2, interaction_v=10.0)
    defaults.update(kw)
    return SystemConfig(**defaults)


class TestSeeds:
    def test_counter_based_and_reproducible(self):
        a = np.random.default_rng(trajectory_seed(7, 3)).random(4)
        b = np.random.default_rng(trajectory_seed(7, 3)).random(4)
        c = np.random.default_rng(trajectory_seed(7, 4)).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestPatternDetection:
    def test_spin_manifold(self):
        config = cfg()
        assert detect_pattern(initial_state("psi1", config)) == ("spin", "spin")

    def test_ground_atom(self):
        config = cfg()
        state = initial_state("custom", config, {BasisIndex(1, ("g", "up"), 0): 1.0})
        assert detect_pattern(state) == ("g", "spin")

    def test_mixed_support(self):
        config = cfg()
        spec = {
            BasisIndex(1, ("g", "up"), 0): 1 / np.sqrt(2),
            BasisIndex(1, ("down", "up"), 0): 1 / np.sqrt(2),
        }
        assert detect_pattern(initial_state("custom", config, spec)) == ("full", "spin")


class TestSingleTrajectory:
    def test_zero_rates_runs_coherently_to_horizon(self):
        config = cfg(t_max=5.0)
        rec = run_trajectory(config, initial_state("psi1", config), trajectory_seed(0, 0))
        assert rec.events == ()
        assert rec.terminated_by == "t_max"
        assert rec.completion_time is None

    def test_no_rates_and_no_horizon_rejected(self):
        config = cfg()
        with pytest.raises(ConfigError, match="t_max"):
            run_trajectory(config, initial_state("psi1", config), trajectory_seed(0, 0))

    def test_deterministic_in_seed(self):
        config = cfg(gamma_down=0.2, kappa=0.1)
        state = initial_state("psi2", config)
        a = run_trajectory(config, state, trajectory_seed(42, 1))
        b = run_trajectory(config, state, trajectory_seed(42, 1))
        assert a.final_negativity == b.final_negativity
        assert a.completion_time == b.completion_time
        assert [(e.time, e.channel) for e in a.events] == [
            (e.time, e.channel) for e in b.events
        ]

    def test_down_decays_convert_every_excitation(self):
        # With only the lower-level decay open, the conserved excitation
        # count forces each atom through one photon emission before it can
        # reach g: exactly n_atoms down jumps, chain dead at the end.
        config = SystemConfig(n_atoms=3, n_max=3, interaction_v=2.0, gamma_down=0.2)
        state = initial_state("all_up", config)
        ops = TrajectoryOps(config)
        for i in range(8):
            rec = run_trajectory(config, state, trajectory_seed(11, i), ops=ops)
            counts = rec.jump_counts()
            assert rec.terminated_by == "chain_dead"
            assert counts["down_decay"] == 3
            assert counts["up_decay"] == 0
            assert counts["osc"] == 0

    def test_event_times_increase_and_norms_in_unit_interval(self):
        config = cfg(gamma_down=0.3, gamma_up=0.1, kappa=0.05)
        rec = run_trajectory(config, initial_state("psi2", config), trajectory_seed(5, 0))
        times = [e.time for e in rec.events]
        assert times == sorted(times)
        for e in rec.events:
            assert 0.0 < e.pre_jump_norm_sq < 1.0

    def test_negativity_frozen_after_chain_death_without_photon_loss(self):
        config = cfg(gamma_down=0.25)
        found = False
        ops = TrajectoryOps(config)
        for i in range(10):
            rec = run_trajectory(
                config, initial_state("psi1", config), trajectory_seed(3, i),
                ops=ops, record_series=True, sample_points=50,
            )
            if rec.terminated_by != "chain_dead":
                continue
            found = True
            assert rec.series.values["negativity"][-1] == pytest.approx(
                rec.final_negativity, abs=1e-9
            )
        assert found

    def test_dead_chain_negativity_constant_under_further_evolution(self):
        # with every atom in g the chain decouples and the oscillators only
        # pick up local phases, which cannot change the negativity
        from rydosc.entanglement import negativity, reduce_to_oscillators
        from rydosc.operators import build_h_total
        from rydosc.propagator import evolve

        config = cfg(rotating_frame=False, detuning=1.3)
        spec = {
            BasisIndex(1, ("g", "g"), 0): 0.6,
            BasisIndex(0, ("g", "g"), 1): 0.8j,
        }
        state = initial_state("custom", config, spec)
        base = negativity(reduce_to_oscillators(state))
        assert base > 0
        for t in (3.0, 17.0):
            later = evolve(state, build_h_total(config), t)
            assert negativity(reduce_to_oscillators(later)) == pytest.approx(
                base, abs=1e-10
            )

    def test_series_samples_cover_grid_while_alive(self):
        config = cfg(t_max=4.0)
        rec = run_trajectory(
            config, initial_state("psi1", config), trajectory_seed(0, 0),
            record_series=True, sample_points=9,
        )
        assert np.allclose(rec.series.times, np.linspace(0, 4.0, 9))

    def test_unnormalized_input_rejected(self):
        config = cfg(t_max=1.0)
        state = initial_state("psi1", config)
        bad = StateVector(0.7 * state.amplitudes, config)
        from rydosc.trajectories import TrajectoryError

        with pytest.raises(TrajectoryError):
            run_trajectory(config, bad, trajectory_seed(0, 0))


class TestEnsemble:
    def test_bitwise_reproducible(self):
        config = cfg(gamma_down=0.2)
        state = initial_state("psi2", config)
        a = run_ensemble(config, state, 12, master_seed=9)
        b = run_ensemble(config, state, 12, master_seed=9)
        assert np.array_equal(a.final_negativities, b.final_negativities)
        assert np.array_equal(a.completion_times, b.completion_times, equal_nan=True)
        assert a.terminated_by == b.terminated_by

    def test_worker_count_does_not_change_results(self):
        config = cfg(gamma_down=0.3)
        state = initial_state("psi1", config)
        serial = run_ensemble(config, state, 8, master_seed=4, workers=1)
        parallel = run_ensemble(config, state, 8, master_seed=4, workers=2)
        assert np.array_equal(serial.final_negativities, parallel.final_negativities)
        assert np.array_equal(
            serial.completion_times, parallel.completion_times, equal_nan=True
        )

    def test_stderr_definition(self):
        config = cfg(gamma_down=0.2)
        res = run_ensemble(config, initial_state("psi2", config), 16, master_seed=1)
        vals = res.final_negativities
        assert res.avg_negativity == pytest.approx(vals.mean())
        assert res.negativity_stderr == pytest.approx(
            vals.std(ddof=1) / np.sqrt(len(vals))
        )

    def test_single_trajectory_has_no_stderr(self):
        config = cfg(gamma_down=0.2)
        res = run_ensemble(config, initial_state("psi2", config), 1, master_seed=0)
        assert res.negativity_stderr is None


class TestPostSelection:
    def _ensemble(self):
        config = cfg(gamma_down=0.25, kappa=0.02)
        return run_ensemble(config, initial_state("psi2", config), 24, master_seed=2)

    def test_infinite_cutoff_keeps_all_completed(self):
        res = self._ensemble()
        completed = int(np.isfinite(res.completion_times).sum())
        sel = post_select(res, np.inf)
        assert sel.n_trajectories == completed
        assert sel.acceptance_fraction == pytest.approx(completed / 24)
        assert sel.selected_total == 24

    def test_zero_cutoff_keeps_none(self):
        sel = post_select(self._ensemble(), 0.0)
        assert sel.n_trajectories == 0
        assert sel.avg_negativity is None
        assert sel.acceptance_fraction == 0.0

    def test_cutoff_filters_by_completion_time(self):
        res = self._ensemble()
        cutoff = float(np.nanmedian(res.completion_times))
        sel = post_select(res, cutoff)
        assert np.all(sel.completion_times <= cutoff)
        expected = int((res.completion_times[np.isfinite(res.completion_times)] <= cutoff).sum())
        assert sel.n_trajectories == expected


class TestLindbladOracle:
    def test_trajectory_average_matches_master_equation(self):
        # Average the unraveling over many trajectories and compare the
        # photon population in cavity a with the dense master-equation
        # solution; agreement within three Monte Carlo standard errors.
        config = cfg(gamma_down=0.15, t_max=20.0, interaction_v=2.0)
        state = initial_state("psi1", config)
        t_grid = np.linspace(0.0, 20.0, 21)

        n_traj = 300
        ops = TrajectoryOps(config)
        samples = np.empty((n_traj, len(t_grid)))
        for i in range(n_traj):
            rec = run_trajectory(
                config, state, trajectory_seed(123, i), ops=ops,
                record_series=True, sample_points=len(t_grid),
            )
            times = rec.series.times
            vals = rec.series.values["n_a"]
            # after the chain dies with kappa = 0 the state is frozen, so
            # holding the last recorded value is exact
            idx = np.searchsorted(times, t_grid + 1e-9) - 1
            samples[i] = vals[np.clip(idx, 0, len(vals) - 1)]

        mean = samples.mean(axis=0)
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(n_traj)

        rho0 = DensityOperator(
            np.outer(state.amplitudes, state.amplitudes.conj()), config
        )
        series, _ = lindblad_solve(config, rho0, t_grid)
        exact = series.values["n_a"]
        assert np.all(np.abs(mean - exact) <= 3.0 * stderr + 1e-4)

    def test_lindblad_preserves_trace_and_excitation_flow(self):
        config = cfg(gamma_down=0.2, kappa=0.1)
        state = initial_state("psi1", config)
        rho0 = DensityOperator(
            np.outer(state.amplitudes, state.amplitudes.conj()), config
        )
        t_grid = np.linspace(0.0, 8.0, 9)
        series, snaps = lindblad_solve(config, rho0, t_grid)
        for snap in snaps:
            assert np.trace(snap.matrix).real == pytest.approx(1.0, abs=1e-7)
        # photon loss only removes excitations
        total = series.values["n_a"] + series.values["n_b"]
        for name, vals in series.values.items():
            if name.startswith("p_up_"):
                total = total + vals
        assert np.all(np.diff(total) <= 1e-8)


class TestSerialization:
    def _result(self):
        config = cfg(gamma_down=0.2, kappa=0.05)
        return run_ensemble(config, initial_state("psi2", config), 10, master_seed=6)

    def test_csv_layout(self, tmp_path):
        res = self._result()
        path = tmp_path / "ensemble.csv"
        write_ensemble_csv(res, path)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        assert [int(r["seed"]) for r in rows] == list(range(10))
        for i, row in enumerate(rows):
            assert float(row["final_negativity"]) == pytest.approx(
                res.final_negativities[i]
            )
            assert row["terminated_by"] in ("chain_dead", "t_max")
            if row["terminated_by"] == "t_max":
                assert row["completion_time"] == ""

    def test_summary_json(self, tmp_path):
        res = self._result()
        path = tmp_path / "summary.json"
        write_summary_json(res, path)
        data = json.loads(path.read_text())
        assert data["n_trajectories"] == 10
        assert data["master_seed"] == 6
        assert data["config"]["gamma_down"] == 0.2
        hist = data["histogram"]
        assert sum(hist["counts"]) == 10
        assert sum(hist["probabilities"]) == pytest.approx(1.0)
        assert len(hist["edges"]) == len(hist["counts"]) + 1

    def test_summary_of_empty_selection(self):
        res = post_select(self._result(), 0.0)
        record = summary_record(res)
        assert record["avg_negativity"] is None
        assert "histogram" not in record
