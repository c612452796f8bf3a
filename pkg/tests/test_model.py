import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydosc.model import (
    BasisIndex,
    ConfigError,
    StateVector,
    SystemConfig,
    build_config,
    decode_index,
    encode_index,
    excitation_diagonal,
    initial_state,
    read_config_file,
    total_excitation,
)


def small_config(n_atoms=2, n_max=2, **kw):
    return SystemConfig(n_atoms=n_atoms, n_max=n_max, **kw)


class TestConfig:
    def test_build_config_fig1_parameters(self):
        cfg = build_config({"n_atoms": 2, "interaction_v": 10, "initial_state": "psi1"})
        assert cfg.interaction_v == 10.0
        assert cfg.n_atoms == 2

    def test_n_atoms_zero_rejected(self):
        with pytest.raises(ConfigError, match="n_atoms"):
            build_config({"n_atoms": 0})

    def test_n_max_defaults_to_initial_excitations(self):
        cfg = build_config({"n_atoms": 5, "initial_state": "all_up"})
        assert cfg.n_max == 5
        cfg = build_config({"n_atoms": 2, "initial_state": "psi1"})
        assert cfg.n_max == 2

    def test_negative_rate_names_key(self):
        with pytest.raises(ConfigError, match="gamma_down"):
            build_config({"n_atoms": 2, "gamma_down": -0.1})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="bogus"):
            build_config({"n_atoms": 2, "bogus": 1})

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="n_atoms"):
            build_config({"n_max": 3})

    def test_resonance_is_enforced(self):
        cfg = small_config(detuning=3.5)
        assert cfg.omega == cfg.detuning

    def test_default_t_max_from_rates(self):
        cfg = small_config(gamma_down=0.2, gamma_up=0.5)
        assert cfg.resolved_t_max() == pytest.approx(10.0 / 0.2)

    def test_t_max_unresolvable_without_rates(self):
        with pytest.raises(ConfigError, match="t_max"):
            small_config().resolved_t_max()

    def test_config_file_round_trip(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "n_atoms = 3\ninteraction_v = 2.0  # chain coupling\n"
            "gamma_down = 0.2\nrotating_frame = true\n"
        )
        cfg = build_config(read_config_file(path))
        assert cfg.n_atoms == 3
        assert cfg.gamma_down == 0.2
        assert cfg.rotating_frame is True


class TestBasisIndexing:
    def test_exhaustive_round_trip(self):
        cfg = small_config(n_atoms=3, n_max=2)
        for idx in range(cfg.dim):
            assert encode_index(decode_index(idx, cfg), cfg) == idx

    @given(st.integers(min_value=0), st.data())
    @settings(max_examples=60, deadline=None)
    def test_sampled_round_trip_large_space(self, raw, data):
        cfg = small_config(n_atoms=7, n_max=3)
        idx = raw % cfg.dim
        assert encode_index(decode_index(idx, cfg), cfg) == idx

    def test_index_formula(self):
        cfg = small_config(n_atoms=2, n_max=2)
        basis = BasisIndex(1, ("up", "down"), 2)
        chain = 2 * 3 + 1
        assert encode_index(basis, cfg) == (1 * 9 + chain) * 3 + 2

    def test_basis_excitations_are_integers(self):
        cfg = small_config(n_atoms=3, n_max=2)
        diag = excitation_diagonal(cfg)
        for idx in range(cfg.dim):
            b = decode_index(idx, cfg)
            expected = b.fock_a + b.fock_b + sum(1 for l in b.atom_levels if l == "up")
            assert diag[idx] == expected


class TestInitialStates:
    def test_psi1_amplitudes(self):
        cfg = small_config()
        state = initial_state("psi1", cfg)
        nz = np.flatnonzero(state.amplitudes)
        assert len(nz) == 2
        vals = sorted(state.amplitudes[nz].real)
        assert vals == pytest.approx([-1 / np.sqrt(2), 1 / np.sqrt(2)])
        for idx in nz:
            b = decode_index(int(idx), cfg)
            assert (b.fock_a, b.fock_b) == (1, 0)
            assert set(b.atom_levels) == {"up", "down"}

    def test_all_up_single_component(self):
        cfg = small_config(n_atoms=5, n_max=5)
        state = initial_state("all_up", cfg)
        nz = np.flatnonzero(state.amplitudes)
        assert len(nz) == 1
        b = decode_index(int(nz[0]), cfg)
        assert b.atom_levels == ("up",) * 5
        assert (b.fock_a, b.fock_b) == (0, 0)

    def test_psi2_normalized(self):
        state = initial_state("psi2", small_config())
        assert state.norm_sq == pytest.approx(1.0)

    def test_psi1_requires_two_atoms(self):
        with pytest.raises(ValueError):
            initial_state("psi1", small_config(n_atoms=3))

    def test_custom_zero_norm_rejected(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            initial_state("custom", cfg, {BasisIndex(0, ("g", "g"), 0): 0.0})


class TestTotalExcitation:
    def test_psi1_carries_two(self):
        assert total_excitation(initial_state("psi1", small_config())) == pytest.approx(2.0)

    def test_all_up_counts_atoms(self):
        cfg = small_config(n_atoms=5, n_max=5)
        assert total_excitation(initial_state("all_up", cfg)) == pytest.approx(5.0)

    def test_vacuum_is_zero(self):
        cfg = small_config()
        state = initial_state("custom", cfg, {BasisIndex(0, ("g", "g"), 0): 1.0})
        assert total_excitation(state) == 0.0

    def test_zero_state_rejected(self):
        cfg = small_config()
        state = StateVector(np.zeros(cfg.dim), cfg)
        with pytest.raises(ValueError):
            total_excitation(state)

    def test_initial_states_are_exact_m_eigenstates(self):
        from rydosc.operators import build_m

        for kind, cfg, mu in (
            ("psi1", small_config(), 2),
            ("psi2", small_config(), 2),
            ("all_up", small_config(n_atoms=4, n_max=4), 4),
        ):
            state = initial_state(kind, cfg)
            m = build_m(cfg)
            resid = m.matrix @ state.amplitudes - mu * state.amplitudes
            assert np.linalg.norm(resid) <= 1e-12
