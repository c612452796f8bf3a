"""Time evolution under sparse Hermitian and non-Hermitian generators.

The workhorse is an adaptive Arnoldi (Krylov) stepper applying
exp(-i G dt) to a vector; small systems (dim <= 64) go through a dense
path that serves as an in-repo oracle.  The Krylov basis is kept
orthonormal, so norms and intermediate times inside an accepted step can
be evaluated in the small subspace at negligible cost -- the trajectory
sampler leans on this for jump-time bisection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .model import StateVector, SystemConfig
from .operators import SparseOperator

DENSE_DIM_LIMIT = 64
DEFAULT_TOL = 1e-8


class IntegrationError(RuntimeError):
    """Raised when the requested tolerance cannot be met."""


@dataclass(frozen=True)
class TimeSeries:
    """Sampled observable traces on a strictly increasing time grid."""

    times: np.ndarray
    values: dict[str, np.ndarray]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or (len(times) > 1 and np.any(np.diff(times) <= 0)):
            raise ValueError("times must be strictly increasing")
        for label, arr in self.values.items():
            if len(np.asarray(arr)) != len(times):
                raise ValueError(f"series '{label}' length does not match times")
        object.__setattr__(self, "times", times)
        object.__setattr__(
            self, "values", {k: np.asarray(v) for k, v in self.values.items()}
        )

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            labels = list(self.values)
            writer.writerow(["time"] + labels)
            for i, t in enumerate(self.times):
                row = [format_float(t)]
                for label in labels:
                    v = self.values[label][i]
                    row.append(format_float(v.real if np.iscomplexobj(v) else v))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            cols = {name: [] for name in header}
            for row in reader:
                for name, cell in zip(header, row):
                    cols[name].append(float(cell))
        times = np.array(cols.pop("time"))
        return cls(times, {k: np.array(v) for k, v in cols.items()})


def format_float(x: float) -> str:
    """Locale-independent, 17 significant digits (round-trip exact)."""
    return format(float(x), ".17g")


class StepResult:
    """One accepted Krylov step; evaluable anywhere inside [0, dt]."""

    def __init__(self, basis, hess, beta, dt, exact=None):
        self._basis = basis  # dim x k, orthonormal columns
        self._hess = hess  # k x k projection of -iG (or None when exact)
        self._beta = beta
        self.dt = dt
        self._exact = exact  # (eigvals, modes) pair for tiny dims

    def _small(self, tau: float) -> np.ndarray:
        return la.expm(self._hess * tau)[:, 0] * self._beta

    def eval(self, tau: float) -> np.ndarray:
        """State at elapsed time tau in [0, dt]."""
        if self._exact is not None:
            lam, modes, coeff = self._exact
            return modes @ (np.exp(lam * tau) * coeff)
        return self._basis @ self._small(tau)

    def norm_sq(self, tau: float) -> float:
        if self._exact is not None:
            vec = self.eval(tau)
            return float(np.vdot(vec, vec).real)
        u = self._small(tau)
        return float(np.vdot(u, u).real)


class KrylovStepper:
    """Adaptive application of exp(-i G t) for one fixed sparse generator."""

    def __init__(self, generator, tol: float = DEFAULT_TOL, max_krylov: int = 30):
        if isinstance(generator, SparseOperator):
            generator = generator.matrix
        self.matrix = sp.csr_matrix(generator, dtype=complex)
        self.dim = self.matrix.shape[0]
        self.tol = tol
        self.m = min(max_krylov, self.dim)
        self.dt_hint = None
        self._norm_scale = _one_norm(self.matrix)

    def _arnoldi(self, vec: np.ndarray):
        m = self.m
        beta = np.linalg.norm(vec)
        basis = np.empty((self.dim, m + 1), dtype=complex)
        hess = np.zeros((m + 1, m), dtype=complex)
        basis[:, 0] = vec / beta
        for j in range(m):
            w = -1j * (self.matrix @ basis[:, j])
            # modified Gram-Schmidt with one reorthogonalization pass
            for _ in range(2):
                coeffs = basis[:, : j + 1].conj().T @ w
                hess[: j + 1, j] += coeffs
                w -= basis[:, : j + 1] @ coeffs
            h_next = np.linalg.norm(w)
            hess[j + 1, j] = h_next
            if h_next < 1e-14 * max(beta, 1.0):
                return beta, basis[:, : j + 1], hess[: j + 1, : j + 1], 0.0, True
            basis[:, j + 1] = w / h_next
        return beta, basis[:, :m], hess, abs(hess[m, m - 1]), False

    def step(self, vec: np.ndarray, dt_max: float) -> StepResult:
        """Advance by at most dt_max; the accepted span is in the result."""
        if dt_max < 0:
            raise ValueError("dt must be >= 0")
        beta, basis, hess, h_tail, happy = self._arnoldi(vec)
        k = hess.shape[1]
        small = hess[:k, :k]
        if happy:
            return StepResult(basis, small, beta, dt_max)
        # augmented matrix whose exponential carries the residual weight
        aug = np.zeros((k + 1, k + 1), dtype=complex)
        aug[:k, :k] = small
        aug[k, k - 1] = h_tail
        dt = dt_max if self.dt_hint is None else min(dt_max, self.dt_hint)
        floor = dt_max * 1e-12 + 1e-300
        while True:
            err = beta * abs(la.expm(aug * dt)[k, 0])
            if err <= self.tol * beta * max(dt / dt_max, 1e-2) or dt <= floor:
                break
            dt *= max(0.1, 0.7 * (self.tol * beta / err) ** (1.0 / k))
            if dt < floor:
                raise IntegrationError(
                    f"step size underflow: dim={self.dim}, dt={dt:.3e}, "
                    f"err={err:.3e}, tol={self.tol:.3e}"
                )
        self.dt_hint = dt * 1.4
        return StepResult(basis, small, beta, dt)

    def advance(self, vec: np.ndarray, dt: float) -> np.ndarray:
        """exp(-i G dt) vec, substepping as needed."""
        t = 0.0
        out = vec
        while t < dt * (1 - 1e-14):
            res = self.step(out, dt - t)
            out = res.eval(res.dt)
            t += res.dt
        return out


def _one_norm(mat) -> float:
    return float(abs(mat).sum(axis=0).max()) if mat.nnz else 0.0


def _dense_propagator(generator: SparseOperator, dt: float):
    dense = generator.matrix.toarray()
    if generator.hermitian_hint:
        evals, vecs = np.linalg.eigh(dense)
        return (vecs * np.exp(-1j * evals * dt)) @ vecs.conj().T
    return la.expm(-1j * dense * dt)


def evolve(
    state: StateVector,
    generator: SparseOperator,
    dt: float,
    tol: float | None = None,
) -> StateVector:
    """Approximate exp(-i.generator.dt)|psi> with relative error <= tol.

    Hermitian generators preserve the norm to tol; non-Hermitian generators
    never increase it.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if generator.dim != state.config.dim:
        raise ValueError("generator dimension does not match state")
    if dt == 0:
        return state
    tol = state.config.integrator_tol if tol is None else tol
    if generator.dim <= DENSE_DIM_LIMIT:
        amps = _dense_propagator(generator, dt) @ state.amplitudes
    else:
        amps = KrylovStepper(generator, tol=tol).advance(state.amplitudes, dt)
    return StateVector(amps, state.config)


def observable_series(
    state0: StateVector,
    generator: SparseOperator,
    observables: Mapping[str, SparseOperator],
    t_grid: np.ndarray,
    tol: float | None = None,
) -> TimeSeries:
    """Normalized expectation values along an increasing grid from 0."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] < 0 or (len(t_grid) > 1 and np.any(np.diff(t_grid) <= 0)):
        raise ValueError("t_grid must be increasing and start at t >= 0")
    tol = state0.config.integrator_tol if tol is None else tol
    use_dense = generator.dim <= DENSE_DIM_LIMIT
    stepper = None if use_dense else KrylovStepper(generator, tol=tol)
    amps = state0.amplitudes
    t_prev = 0.0
    out = {label: np.empty(len(t_grid), dtype=complex) for label in observables}
    for i, t in enumerate(t_grid):
        dt = t - t_prev
        if dt > 0:
            if use_dense:
                amps = _dense_propagator(generator, dt) @ amps
            else:
                amps = stepper.advance(amps, dt)
            t_prev = t
        norm_sq = float(np.vdot(amps, amps).real)
        for label, op in observables.items():
            out[label][i] = op.expectation(amps) / norm_sq
    values = {}
    for label, arr in out.items():
        values[label] = arr.real if np.abs(arr.imag).max() < 1e-9 else arr
    return TimeSeries(t_grid, values)


def standard_observables(config: SystemConfig) -> dict[str, SparseOperator]:
    """a†a, b†b and the per-site up-state populations."""
    from . import operators as ops  # local import avoids a cycle at module load

    eye = sp.identity(config.osc_dim, format="csr", dtype=complex)
    a = ops._annihilation(config.osc_dim)
    num = (a.conj().T @ a).tocsr()
    out = {
        "n_a": SparseOperator(config.dim, ops._embed(config, num, {}, eye), True),
        "n_b": SparseOperator(config.dim, ops._embed(config, eye, {}, num), True),
    }
    p_up = ops._atom_matrix("up", "up")
    for site in range(1, config.n_atoms + 1):
        mat = ops._embed(config, eye, {site: p_up}, eye)
        out[f"p_up_{site}"] = SparseOperator(config.dim, mat, True)
    return out
