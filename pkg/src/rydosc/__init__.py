"""Simulator for two truncated oscillators coupled through a dissipative
chain of three-level atoms: coherent entanglement dynamics, quantum-jump
trajectories, negativity statistics and decay-rate scans."""

from .model import (
    BasisIndex,
    ConfigError,
    DensityOperator,
    StateVector,
    SystemConfig,
    build_config,
    initial_state,
    total_excitation,
)
from .operators import (
    JumpSet,
    SparseOperator,
    build_h_chain,
    build_h_couple,
    build_h_nonhermitian,
    build_h_osc,
    build_h_total,
    build_jump_set,
    build_m,
)
from .propagator import TimeSeries, evolve, observable_series
from .entanglement import (
    OscillatorState,
    negativity,
    negativity_bound_excitations,
    negativity_bound_mu,
    partial_transpose_a,
    reduce_to_oscillators,
)
from .effective import analytic_observables, build_h_eff, compare_effective_full
from .trajectories import (
    EnsembleResult,
    JumpEvent,
    TrajectoryRecord,
    lindblad_solve,
    post_select,
    run_ensemble,
    run_trajectory,
)
from .analysis import FitResult, UnitMap, convert_units, fit_lognormal, histogram

__version__ = "0.1.0"
