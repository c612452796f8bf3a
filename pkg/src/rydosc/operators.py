"""Sparse operators on the composite space: the three Hamiltonian pieces,
the conserved excitation counter, the jump-operator set and the non-Hermitian
generator that drives evolution between jumps.

Assembly goes through Kronecker products of local (oscillator / single-atom)
matrices in the (a, chain, b) ordering; results are stored compressed-row for
fast matvec.  The raising operator truncates at the Fock cutoff: a† acting on
the top level maps to zero, which is unreachable anyway when the cutoff equals
the initial excitation number.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .model import LEVEL_CODE, SystemConfig, excitation_diagonal

HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class SparseOperator:
    """Immutable complex sparse matrix with a hermiticity hint."""

    dim: int
    matrix: sp.csr_matrix
    hermitian_hint: bool = False

    def __post_init__(self):
        mat = sp.csr_matrix(self.matrix, dtype=complex)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        if mat.shape != (self.dim, self.dim):
            raise ValueError("matrix shape does not match dim")
        if self.hermitian_hint:
            dev = abs(mat - mat.conj().T)
            if dev.nnz and dev.max() > HERMITICITY_TOL:
                raise ValueError("hermitian_hint set but operator is not Hermitian")
        object.__setattr__(self, "matrix", mat)

    def to_coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def expectation(self, amplitudes: np.ndarray) -> complex:
        return complex(np.vdot(amplitudes, self.matrix @ amplitudes))

    def __matmul__(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec


@dataclass(frozen=True)
class JumpChannel:
    """One decay channel with the rate already folded into the operator."""

    kind: str  # up_decay | down_decay | osc_a | osc_b
    site: int | None
    rate: float
    operator: SparseOperator

    @property
    def label(self) -> str:
        if self.site is None:
            return self.kind
        return f"{self.kind}({self.site})"


@dataclass(frozen=True)
class JumpSet:
    """The 2N+2 channels in fixed order: up decays, down decays, a, b."""

    channels: tuple[JumpChannel, ...]

    def __post_init__(self):
        kinds = [c.kind for c in self.channels]
        n = (len(kinds) - 2) // 2
        expected = ["up_decay"] * n + ["down_decay"] * n + ["osc_a", "osc_b"]
        if kinds != expected:
            raise ValueError("jump channels out of canonical order")

    def __iter__(self):
        return iter(self.channels)

    def __len__(self):
        return len(self.channels)


def _annihilation(osc_dim: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, osc_dim)), 1, format="csr").astype(complex)


def _atom_matrix(row: str, col: str) -> sp.csr_matrix:
    mat = np.zeros((3, 3), dtype=complex)
    mat[LEVEL_CODE[row], LEVEL_CODE[col]] = 1.0
    return sp.csr_matrix(mat)


def _embed(config: SystemConfig, osc_a, atom_ops: dict[int, sp.spmatrix], osc_b) -> sp.csr_matrix:
    """Kronecker-embed local operators at the given atom sites (1-based)."""
    eye3 = sp.identity(3, format="csr", dtype=complex)
    out = osc_a
    for site in range(1, config.n_atoms + 1):
        out = sp.kron(out, atom_ops.get(site, eye3), format="csr")
    return sp.kron(out, osc_b, format="csr")


def build_h_osc(config: SystemConfig) -> SparseOperator:
    """omega (a†a + b†b), diagonal in the composite basis."""
    a = _annihilation(config.osc_dim)
    num = (a.conj().T @ a).tocsr()
    eye = sp.identity(config.osc_dim, format="csr", dtype=complex)
    mat = config.omega * (_embed(config, num, {}, eye) + _embed(config, eye, {}, num))
    return SparseOperator(config.dim, mat, hermitian_hint=True)


def build_h_chain(config: SystemConfig) -> SparseOperator:
    """Nearest-neighbour flip-flop of strength V plus the detuning term.

    Atoms in g sit outside the spin manifold and are left untouched.
    """
    eye = sp.identity(config.osc_dim, format="csr", dtype=complex)
    down_up = _atom_matrix("down", "up")
    p_up = _atom_matrix("up", "up")
    mat = sp.csr_matrix((config.dim, config.dim), dtype=complex)
    for site in range(1, config.n_atoms):
        hop = _embed(config, eye, {site: down_up, site + 1: down_up.conj().T}, eye)
        mat = mat + config.interaction_v * (hop + hop.conj().T)
    for site in range(1, config.n_atoms + 1):
        mat = mat + config.detuning * _embed(config, eye, {site: p_up}, eye)
    return SparseOperator(config.dim, mat, hermitian_hint=True)


def build_h_couple(config: SystemConfig) -> SparseOperator:
    """J (|down><up|_1 a† + |down><up|_N b† + h.c.)."""
    a = _annihilation(config.osc_dim)
    eye = sp.identity(config.osc_dim, format="csr", dtype=complex)
    down_up = _atom_matrix("down", "up")
    term_a = _embed(config, a.conj().T, {1: down_up}, eye)
    term_b = _embed(config, eye, {config.n_atoms: down_up}, a.conj().T)
    mat = config.coupling_j * (term_a + term_b)
    mat = mat + mat.conj().T
    return SparseOperator(config.dim, mat, hermitian_hint=True)


def build_h_total(config: SystemConfig) -> SparseOperator:
    """Full Hamiltonian; in the rotating frame the term omega*M is dropped.

    With resonant coupling the oscillator term plus the detuning term equal
    omega*M, which generates local phase rotations only, so populations, jump
    statistics and negativity are frame independent.
    """
    mat = build_h_chain(config).matrix + build_h_couple(config).matrix
    if config.rotating_frame:
        p_up = _atom_matrix("up", "up")
        eye = sp.identity(config.osc_dim, format="csr", dtype=complex)
        for site in range(1, config.n_atoms + 1):
            mat = mat - config.detuning * _embed(config, eye, {site: p_up}, eye)
    else:
        mat = mat + build_h_osc(config).matrix
    return SparseOperator(config.dim, mat, hermitian_hint=True)


def build_m(config: SystemConfig) -> SparseOperator:
    """Conserved excitation counter M = a†a + b†b + sum_i P_up(i)."""
    mat = sp.diags(excitation_diagonal(config), format="csr").astype(complex)
    return SparseOperator(config.dim, mat, hermitian_hint=True)


def build_jump_set(config: SystemConfig) -> JumpSet:
    """All 2N+2 decay channels; zero-rate channels keep a zero operator."""
    eye = sp.identity(config.osc_dim, format="csr", dtype=complex)
    a = _annihilation(config.osc_dim)
    g_up = _atom_matrix("g", "up")
    g_down = _atom_matrix("g", "down")
    channels: list[JumpChannel] = []
    for kind, local, rate in (
        ("up_decay", g_up, config.gamma_up),
        ("down_decay", g_down, config.gamma_down),
    ):
        for site in range(1, config.n_atoms + 1):
            mat = np.sqrt(rate) * _embed(config, eye, {site: local}, eye)
            channels.append(
                JumpChannel(kind, site, rate, SparseOperator(config.dim, mat))
            )
    for kind, osc in (("osc_a", "a"), ("osc_b", "b")):
        if osc == "a":
            mat = np.sqrt(config.kappa) * _embed(config, a, {}, eye)
        else:
            mat = np.sqrt(config.kappa) * _embed(config, eye, {}, a)
        channels.append(
            JumpChannel(kind, None, config.kappa, SparseOperator(config.dim, mat))
        )
    return JumpSet(tuple(channels))


def jump_weight_diagonal(jumps: JumpSet, config: SystemConfig) -> np.ndarray:
    """(n_channels, dim) diagonals of L†L; every L†L here is diagonal."""
    out = np.empty((len(jumps), config.dim))
    for k, channel in enumerate(jumps):
        ldl = (channel.operator.matrix.conj().T @ channel.operator.matrix).tocsr()
        off_diag = ldl - sp.diags(ldl.diagonal())
        if off_diag.nnz and abs(off_diag).max() > 1e-14:
            raise AssertionError("jump weight operator is unexpectedly non-diagonal")
        out[k] = ldl.diagonal().real
    return out


def build_h_nonhermitian(config: SystemConfig, jumps: JumpSet | None = None) -> SparseOperator:
    """H - (i/2) sum_alpha L_alpha† L_alpha."""
    if jumps is None:
        jumps = build_jump_set(config)
    decay = jump_weight_diagonal(jumps, config).sum(axis=0)
    mat = build_h_total(config).matrix - 0.5j * sp.diags(decay).astype(complex)
    return SparseOperator(config.dim, mat, hermitian_hint=False)


def dump_operator(op: SparseOperator, path) -> None:
    """Debug dump, one ``row col re im`` line per stored entry."""
    rows, cols, vals = op.to_coo()
    with Path(path).open("w") as fh:
        fh.write(f"# dim {op.dim} nnz {len(vals)}\n")
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
