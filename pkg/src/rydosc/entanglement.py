"""Oscillator-oscillator entanglement: partial trace over the chain,
partial transpose, negativity and the two analytic ceilings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DensityOperator, StateVector

# eigenvalues below this magnitude are treated as numerical zeros so the
# histogram bins near N = 0 are not polluted by round-off
EIGENVALUE_CLIP = 1e-12
NEGATIVITY_SLACK = 1e-9


@dataclass(frozen=True)
class OscillatorState:
    """Reduced density matrix over Fock(a) x Fock(b), a outer, b inner."""

    matrix: np.ndarray
    osc_dim: int

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.osc_dim**2
        if mat.shape != (d, d):
            raise ValueError("reduced matrix shape does not match osc_dim")
        object.__setattr__(self, "matrix", mat)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def mean_excitations(self) -> float:
        """<a†a + b†b> / trace."""
        n = np.arange(self.osc_dim)
        total = (n[:, None] + n[None, :]).reshape(-1)
        return float((total * np.diag(self.matrix).real).sum() / self.trace)


def reduce_amplitudes(amps: np.ndarray, osc_dim: int, chain_dim: int) -> OscillatorState:
    """tr_chain(|psi><psi|) for a pure state given as a raw amplitude array."""
    psi = amps.reshape(osc_dim, chain_dim, osc_dim)
    rho = np.einsum("acb,dce->abde", psi, psi.conj())
    return OscillatorState(rho.reshape(osc_dim**2, osc_dim**2), osc_dim)


def reduce_to_oscillators(state: StateVector | DensityOperator) -> OscillatorState:
    """Reduced oscillator state; pure inputs never form the full matrix."""
    config = state.config
    if isinstance(state, StateVector):
        return reduce_amplitudes(state.amplitudes, config.osc_dim, config.chain_dim)
    d, c = config.osc_dim, config.chain_dim
    rho = state.matrix.reshape(d, c, d, d, c, d)
    reduced = np.einsum("acbdce->abde", rho)
    return OscillatorState(reduced.reshape(d * d, d * d), d)


def partial_transpose_a(rho: OscillatorState) -> np.ndarray:
    """Transpose of the oscillator-a indices; an involution."""
    d = rho.osc_dim
    mat = rho.matrix.reshape(d, d, d, d)
    return np.transpose(mat, (2, 1, 0, 3)).reshape(d * d, d * d)


def negativity(rho: OscillatorState) -> float:
    """(||rho^{T_a}||_1 - 1) / 2 via the Hermitian eigenvalues.

    The partial transpose of a Hermitian matrix stays Hermitian, so the trace
    norm is the sum of absolute eigenvalues; tiny eigenvalues are clipped.
    """
    pt = partial_transpose_a(rho)
    if np.abs(pt - pt.conj().T).max() > 1e-8:
        raise ValueError("input density matrix is not Hermitian")
    evals = np.linalg.eigvalsh(pt)
    evals[np.abs(evals) < EIGENVALUE_CLIP] = 0.0
    value = 0.5 * (np.abs(evals).sum() - 1.0)
    if value < 0:
        if value < -NEGATIVITY_SLACK:
            raise ValueError(f"negativity {value} below the numerical floor")
        value = 0.0
    return float(value)


def negativity_bound_excitations(rho: OscillatorState) -> float:
    """Ceiling bound ceil(<a†a + b†b>) / 2."""
    return float(np.ceil(rho.mean_excitations() - 1e-9) / 2.0)


def negativity_bound_mu(mu: float) -> float:
    """Ceiling bound ceil(mu) / 2 from the conserved excitation count."""
    return float(np.ceil(mu - 1e-9) / 2.0)


def maximally_entangled_oscillators(n: int, osc_dim: int) -> OscillatorState:
    """|phi> = sum_i |i,i> / sqrt(n+1); its negativity equals n / 2."""
    if n >= osc_dim:
        raise ValueError("n must be below the Fock cutoff")
    amps = np.zeros((osc_dim, osc_dim), dtype=complex)
    for i in range(n + 1):
        amps[i, i] = 1.0 / np.sqrt(n + 1)
    vec = amps.reshape(-1)
    return OscillatorState(np.outer(vec, vec.conj()), osc_dim)
