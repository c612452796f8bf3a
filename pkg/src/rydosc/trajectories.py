"""Quantum-jump unraveling, ensemble sampling, a dense Lindblad oracle and
the completion-time post-selection protocol.

Between jumps the state evolves under the non-Hermitian generator; a jump
fires when the squared norm crosses a uniform draw, with the crossing time
located by bisection inside the accepted Krylov step (the orthonormal basis
makes intermediate norms available in the small subspace for free).

Decayed atoms are exact ``g`` occupants forever after, and atoms that start
in the spin manifold never acquire ``g`` amplitude coherently.  Each
trajectory therefore lives in a product subspace of the full basis that
shrinks with every atomic decay; all operators acting there are row/column
slices of the full sparse operators, so the fast path shares one assembly
with the rest of the code base.
"""

from __future__ import annotations

import json
import csv as csv_mod
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .entanglement import negativity, reduce_amplitudes, reduce_to_oscillators
from .model import (
    DensityOperator,
    StateVector,
    SystemConfig,
    chain_digits,
    excitation_diagonal,
    fock_numbers,
    initial_state,
)
from .operators import (
    JumpSet,
    build_h_nonhermitian,
    build_h_total,
    build_jump_set,
    jump_weight_diagonal,
)
from .propagator import KrylovStepper, TimeSeries, format_float

RYDBERG_DEAD_THRESHOLD = 1e-9
JUMP_TIME_REL_TOL = 1e-6
DEFAULT_SAMPLE_POINTS = 200
LINDBLAD_DIM_LIMIT = 4000


class TrajectoryError(RuntimeError):
    pass


class StalledTrajectoryError(TrajectoryError):
    """Jump triggered but every channel weight vanished."""


@dataclass(frozen=True)
class JumpEvent:
    time: float
    channel: str
    pre_jump_norm_sq: float


@dataclass(frozen=True)
class TrajectoryRecord:
    events: tuple[JumpEvent, ...]
    series: TimeSeries | None
    final_negativity: float
    completion_time: float | None
    terminated_by: str  # chain_dead | t_max
    seed_index: int | None = None

    def jump_counts(self) -> dict[str, int]:
        counts = {"up_decay": 0, "down_decay": 0, "osc": 0}
        for ev in self.events:
            if ev.channel.startswith("up_decay"):
                counts["up_decay"] += 1
            elif ev.channel.startswith("down_decay"):
                counts["down_decay"] += 1
            else:
                counts["osc"] += 1
        return counts


@dataclass(frozen=True)
class EnsembleResult:
    n_trajectories: int
    final_negativities: np.ndarray
    completion_times: np.ndarray  # nan where the chain never fully decayed
    n_up_decays: np.ndarray
    n_down_decays: np.ndarray
    n_osc_decays: np.ndarray
    terminated_by: tuple[str, ...]
    config: SystemConfig
    master_seed: int
    acceptance_fraction: float | None = None
    selected_total: int | None = None  # pre-selection size when post-selected

    @property
    def avg_negativity(self) -> float | None:
        if len(self.final_negativities) == 0:
            return None
        return float(self.final_negativities.mean())

    @property
    def negativity_stderr(self) -> float | None:
        n = len(self.final_negativities)
        if n < 2:
            return None
        return float(self.final_negativities.std(ddof=1) / np.sqrt(n))


# ---------------------------------------------------------------------------
# support-pattern machinery


def detect_pattern(state: StateVector, threshold: float = 1e-14) -> tuple[str, ...]:
    """Per-atom support class of a state: spin manifold, pure g, or mixed."""
    config = state.config
    digits = chain_digits(config)
    occupied = np.abs(state.amplitudes) > threshold
    flags = []
    for site in range(config.n_atoms):
        g_pop = bool(np.any(occupied & (digits[:, site] == 0)))
        spin_pop = bool(np.any(occupied & (digits[:, site] != 0)))
        if spin_pop and not g_pop:
            flags.append("spin")
        elif g_pop and not spin_pop:
            flags.append("g")
        else:
            flags.append("full")
    return tuple(flags)


_ALLOWED = {"spin": (1, 2), "g": (0,), "full": (0, 1, 2)}


class _PatternOps:
    """Operators and samplers restricted to one support pattern."""

    def __init__(self, parent: "TrajectoryOps", pattern: tuple[str, ...]):
        config = parent.config
        digits = parent.digits
        mask = np.ones(config.dim, dtype=bool)
        for site, flag in enumerate(pattern):
            mask &= np.isin(digits[:, site], _ALLOWED[flag])
        self.pattern = pattern
        self.indices = np.flatnonzero(mask)
        self.dim = len(self.indices)
        self.chain_sub_dim = int(np.prod([len(_ALLOWED[f]) for f in pattern]))
        sub = parent.h_nh.matrix[self.indices, :][:, self.indices]
        self.stepper = KrylovStepper(sub, tol=config.integrator_tol)
        self.weights = parent.weight_diag[:, self.indices]
        self.n_a = parent.n_a_diag[self.indices]
        self.n_b = parent.n_b_diag[self.indices]
        self.p_up = parent.p_up_diag[:, self.indices]
        self.ryd = parent.ryd_diag[self.indices]
        self.m_diag = parent.m_diag[self.indices]
        self._jump_cache: dict[int, tuple[sp.csr_matrix, tuple[str, ...]]] = {}
        self._parent = parent

    def jump(self, channel_index: int):
        """Sliced jump operator and the pattern it maps into."""
        if channel_index not in self._jump_cache:
            channel = self._parent.jumps.channels[channel_index]
            if channel.site is not None:
                new_pattern = list(self.pattern)
                new_pattern[channel.site - 1] = "g"
                new_pattern = tuple(new_pattern)
            else:
                new_pattern = self.pattern
            target = self._parent.pattern_ops(new_pattern)
            mat = channel.operator.matrix[target.indices, :][:, self.indices]
            self._jump_cache[channel_index] = (mat, new_pattern)
        return self._jump_cache[channel_index]

    def negativity_of(self, amps: np.ndarray) -> float:
        config = self._parent.config
        rho = reduce_amplitudes(
            amps.reshape(config.osc_dim, self.chain_sub_dim, config.osc_dim).reshape(-1),
            config.osc_dim,
            self.chain_sub_dim,
        )
        return negativity(rho)


class TrajectoryOps:
    """Shared read-only operator bundle for one configuration."""

    def __init__(self, config: SystemConfig):
        self.config = config
        self.jumps: JumpSet = build_jump_set(config)
        self.h_nh = build_h_nonhermitian(config, self.jumps)
        self.weight_diag = jump_weight_diagonal(self.jumps, config)
        self.digits = chain_digits(config)
        fa, fb = fock_numbers(config)
        self.n_a_diag, self.n_b_diag = fa, fb
        self.p_up_diag = (self.digits.T == 2).astype(float)
        self.ryd_diag = (self.digits != 0).sum(axis=1).astype(float)
        self.m_diag = excitation_diagonal(config)
        self._patterns: dict[tuple[str, ...], _PatternOps] = {}

    def pattern_ops(self, pattern: tuple[str, ...]) -> _PatternOps:
        if pattern not in self._patterns:
            self._patterns[pattern] = _PatternOps(self, pattern)
        return self._patterns[pattern]


# ---------------------------------------------------------------------------
# single trajectory


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Counter-based per-trajectory seed; independent of scheduling order."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))


def _draw_unit(rng: np.random.Generator) -> float:
    r = rng.random()
    while r == 0.0:
        r = rng.random()
    return r


def run_trajectory(
    config: SystemConfig,
    state0: StateVector,
    seed,
    ops: TrajectoryOps | None = None,
    record_series: bool = False,
    sample_points: int = DEFAULT_SAMPLE_POINTS,
) -> TrajectoryRecord:
    """One quantum-jump trajectory, deterministic in (config, seed).

    Terminates when the total Rydberg population drops below the dead-chain
    threshold (completion) or at the time horizon.  The final negativity is
    evaluated at whichever of the two came first.
    """
    if abs(state0.norm_sq - 1.0) > 1e-9:
        raise TrajectoryError("initial state must be normalized")
    ops = ops if ops is not None else TrajectoryOps(config)
    t_max = config.resolved_t_max()
    rng = np.random.default_rng(seed)
    seed_index = seed.spawn_key[0] if isinstance(seed, np.random.SeedSequence) and seed.spawn_key else None

    pat = ops.pattern_ops(detect_pattern(state0))
    psi = state0.amplitudes[pat.indices].copy()
    psi /= np.linalg.norm(psi)

    sample_times = (
        np.linspace(0.0, t_max, sample_points) if record_series else np.array([t_max])
    )
    s_times: list[float] = []
    s_values: dict[str, list[float]] = {}
    if record_series:
        labels = ["n_a", "n_b"] + [f"p_up_{i}" for i in range(1, config.n_atoms + 1)]
        s_values = {label: [] for label in labels + ["negativity"]}

    def record_sample(t: float, amps: np.ndarray, pat_ops: _PatternOps):
        if not record_series:
            return
        if s_times and t <= s_times[-1]:
            return
        nrm = float(np.vdot(amps, amps).real)
        prob = np.abs(amps) ** 2 / nrm
        s_times.append(t)
        s_values["n_a"].append(float(pat_ops.n_a @ prob))
        s_values["n_b"].append(float(pat_ops.n_b @ prob))
        for i in range(config.n_atoms):
            s_values[f"p_up_{i + 1}"].append(float(pat_ops.p_up[i] @ prob))
        s_values["negativity"].append(pat_ops.negativity_of(amps / np.sqrt(nrm)))

    events: list[JumpEvent] = []
    t = 0.0
    r = _draw_unit(rng)
    completion_time: float | None = None
    record_sample(0.0, psi, pat)

    def chain_dead(amps: np.ndarray, pat_ops: _PatternOps) -> bool:
        nrm = float(np.vdot(amps, amps).real)
        return float(pat_ops.ryd @ (np.abs(amps) ** 2)) <= RYDBERG_DEAD_THRESHOLD * nrm

    if chain_dead(psi, pat):
        completion_time = 0.0

    sample_iter = iter(sample_times[1:] if record_series else sample_times)
    next_sample = next(sample_iter, None)
    while completion_time is None and t < t_max * (1 - 1e-12):
        boundary = t_max if next_sample is None else next_sample
        step = pat.stepper.step(psi, boundary - t)
        if step.norm_sq(step.dt) > r:
            psi = step.eval(step.dt)
            t += step.dt
            if next_sample is not None and t >= next_sample * (1 - 1e-12):
                record_sample(next_sample, psi, pat)
                next_sample = next(sample_iter, None)
            continue
        # norm crossed the draw inside this step: bisect for the jump time
        lo, hi = 0.0, step.dt
        while hi - lo > JUMP_TIME_REL_TOL * max(1.0, t + hi):
            mid = 0.5 * (lo + hi)
            if step.norm_sq(mid) > r:
                lo = mid
            else:
                hi = mid
        tau = 0.5 * (lo + hi)
        psi_pre = step.eval(tau)
        t += tau
        pre_norm_sq = float(np.vdot(psi_pre, psi_pre).real)
        weights = pat.weights @ (np.abs(psi_pre) ** 2)
        total = weights.sum()
        if total <= 0:
            raise StalledTrajectoryError(
                f"no jump channel has weight at t={t:.6g} although the norm "
                "target was reached"
            )
        pick = np.searchsorted(np.cumsum(weights) / total, rng.random())
        pick = min(int(pick), len(weights) - 1)
        mat, new_pattern = pat.jump(pick)
        pat = ops.pattern_ops(new_pattern)
        psi = mat @ psi_pre
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            raise StalledTrajectoryError("selected jump annihilated the state")
        psi = psi / nrm
        events.append(JumpEvent(t, ops.jumps.channels[pick].label, pre_norm_sq))
        record_sample(t, psi, pat)
        if chain_dead(psi, pat):
            completion_time = t
            break
        r = _draw_unit(rng)

    if completion_time is not None:
        terminated_by = "chain_dead"
        final_neg = pat.negativity_of(psi / np.linalg.norm(psi))
    else:
        terminated_by = "t_max"
        if record_series and (not s_times or s_times[-1] < t_max):
            record_sample(t_max, psi, pat)
        final_neg = pat.negativity_of(psi / np.linalg.norm(psi))

    series = None
    if record_series:
        series = TimeSeries(
            np.array(s_times), {k: np.array(v) for k, v in s_values.items()}
        )
    return TrajectoryRecord(
        events=tuple(events),
        series=series,
        final_negativity=final_neg,
        completion_time=completion_time,
        terminated_by=terminated_by,
        seed_index=seed_index,
    )


# ---------------------------------------------------------------------------
# ensembles


def _summarize(rec: TrajectoryRecord):
    counts = rec.jump_counts()
    return (
        rec.final_negativity,
        np.nan if rec.completion_time is None else rec.completion_time,
        counts["up_decay"],
        counts["down_decay"],
        counts["osc"],
        rec.terminated_by,
    )


def _run_batch(config: SystemConfig, amps: np.ndarray, indices, master_seed: int):
    state0 = StateVector(amps, config)
    ops = TrajectoryOps(config)
    out = []
    for i in indices:
        try:
            rec = run_trajectory(config, state0, trajectory_seed(master_seed, i), ops=ops)
        except TrajectoryError as exc:
            raise TrajectoryError(f"trajectory {i}: {exc}") from exc
        out.append(_summarize(rec))
    return out


def run_ensemble(
    config: SystemConfig,
    state0: StateVector,
    n_traj: int,
    master_seed: int | None = None,
    workers: int = 1,
) -> EnsembleResult:
    """n_traj independent trajectories with index-derived seeds."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    master_seed = config.master_seed if master_seed is None else master_seed
    indices = np.arange(n_traj)
    if workers <= 1:
        rows = _run_batch(config, state0.amplitudes, indices, master_seed)
    else:
        chunks = np.array_split(indices, workers * 4)
        chunks = [c for c in chunks if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_batch, config, state0.amplitudes, chunk, master_seed)
                for chunk in chunks
            ]
            rows = [row for fut in futures for row in fut.result()]
    negs, times, ups, downs, oscs, term = zip(*rows)
    return EnsembleResult(
        n_trajectories=n_traj,
        final_negativities=np.array(negs),
        completion_times=np.array(times),
        n_up_decays=np.array(ups, dtype=int),
        n_down_decays=np.array(downs, dtype=int),
        n_osc_decays=np.array(oscs, dtype=int),
        terminated_by=tuple(term),
        config=config,
        master_seed=master_seed,
    )


def post_select(ensemble: EnsembleResult, cutoff_time: float) -> EnsembleResult:
    """Keep trajectories whose chain fully decayed by the cutoff."""
    keep = np.isfinite(ensemble.completion_times) & (
        ensemble.completion_times <= cutoff_time
    )
    total = ensemble.n_trajectories
    kept = int(keep.sum())
    return replace(
        ensemble,
        n_trajectories=kept,
        final_negativities=ensemble.final_negativities[keep],
        completion_times=ensemble.completion_times[keep],
        n_up_decays=ensemble.n_up_decays[keep],
        n_down_decays=ensemble.n_down_decays[keep],
        n_osc_decays=ensemble.n_osc_decays[keep],
        terminated_by=tuple(
            t for t, k in zip(ensemble.terminated_by, keep) if k
        ),
        acceptance_fraction=kept / total,
        selected_total=total,
    )


# ---------------------------------------------------------------------------
# dense Lindblad oracle


def lindblad_solve(
    config: SystemConfig,
    rho0: DensityOperator,
    t_grid: np.ndarray,
    observables=None,
) -> tuple[TimeSeries, list[DensityOperator]]:
    """Dense master-equation integration; oracle for the unraveling."""
    if config.dim > LINDBLAD_DIM_LIMIT:
        raise ValueError(f"dimension {config.dim} too large for the dense solver")
    t_grid = np.asarray(t_grid, dtype=float)
    h = build_h_total(config).matrix.toarray()
    jump_ops = [c.operator.matrix.toarray() for c in build_jump_set(config) if c.rate > 0]
    anticomm = sum((l.conj().T @ l for l in jump_ops), np.zeros_like(h))
    dim = config.dim

    def rhs(_t, flat):
        rho = flat.reshape(dim, dim)
        drho = -1j * (h @ rho - rho @ h)
        for l in jump_ops:
            drho += l @ rho @ l.conj().T
        drho -= 0.5 * (anticomm @ rho + rho @ anticomm)
        return drho.reshape(-1)

    sol = solve_ivp(
        rhs,
        (t_grid[0], t_grid[-1]) if len(t_grid) > 1 else (0.0, float(t_grid[0])),
        rho0.matrix.reshape(-1).astype(complex),
        t_eval=t_grid,
        method="DOP853",
        rtol=1e-9,
        atol=1e-11,
    )
    if not sol.success:
        raise TrajectoryError(f"Lindblad integration failed: {sol.message}")

    if observables is None:
        from .propagator import standard_observables

        observables = standard_observables(config)
    snapshots = []
    values = {label: np.empty(len(t_grid)) for label in observables}
    values["negativity"] = np.empty(len(t_grid))
    for i in range(len(t_grid)):
        rho = sol.y[:, i].reshape(dim, dim)
        trace = np.trace(rho).real
        if abs(trace - 1.0) > 1e-8:
            raise TrajectoryError(f"trace drifted to {trace} at t={t_grid[i]}")
        snap = DensityOperator(rho, config)
        snapshots.append(snap)
        for label, op in observables.items():
            values[label][i] = float(np.trace(op.matrix.toarray() @ rho).real)
        values["negativity"][i] = negativity(reduce_to_oscillators(snap))
    return TimeSeries(t_grid, values), snapshots


# ---------------------------------------------------------------------------
# serialization


def write_ensemble_csv(result: EnsembleResult, path) -> None:
    """One row per trajectory in index order."""
    with Path(path).open("w", newline="") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(
            [
                "seed",
                "final_negativity",
                "completion_time",
                "n_up_decays",
                "n_down_decays",
                "n_osc_decays",
                "terminated_by",
            ]
        )
        for i in range(result.n_trajectories):
            ct = result.completion_times[i]
            writer.writerow(
                [
                    i,
                    format_float(result.final_negativities[i]),
                    "" if np.isnan(ct) else format_float(ct),
                    int(result.n_up_decays[i]),
                    int(result.n_down_decays[i]),
                    int(result.n_osc_decays[i]),
                    result.terminated_by[i],
                ]
            )


def summary_record(result: EnsembleResult, bin_edges=None) -> dict:
    from .analysis import histogram, negativity_bin_edges

    if bin_edges is None:
        mu_init = float(np.max(result.n_up_decays + result.n_osc_decays, initial=0))
        mu_init = max(mu_init, result.config.n_atoms)
        bin_edges = negativity_bin_edges(mu_init)
    record = {
        "n_trajectories": result.n_trajectories,
        "master_seed": result.master_seed,
        "avg_negativity": result.avg_negativity,
        "negativity_stderr": result.negativity_stderr,
        "acceptance_fraction": result.acceptance_fraction,
        "config": {
            k: getattr(result.config, k)
            for k in (
                "n_atoms",
                "n_max",
                "coupling_j",
                "interaction_v",
                "detuning",
                "gamma_up",
                "gamma_down",
                "kappa",
                "rotating_frame",
                "integrator_tol",
                "t_max",
                "master_seed",
            )
        },
    }
    if result.n_trajectories > 0:
        counts, probs = histogram(result.final_negativities, bin_edges)
        record["histogram"] = {
            "edges": [float(e) for e in bin_edges],
            "counts": [int(c) for c in counts],
            "probabilities": [float(p) for p in probs],
        }
    return record


def write_summary_json(result: EnsembleResult, path, bin_edges=None) -> None:
    Path(path).write_text(json.dumps(summary_record(result, bin_edges), indent=2) + "\n")
