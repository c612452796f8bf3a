"""Composite Hilbert space: two truncated oscillators bridged by a chain of
three-level atoms (ground sink ``g`` plus the spin states ``down``/``up``).

Basis ordering puts oscillator ``a`` outermost and oscillator ``b`` innermost,
so the linear index is

    idx = fock_a * (3**N * (n_max+1)) + chain_index * (n_max+1) + fock_b

with the chain encoded base-3 (g=0, down=1, up=2, atom 1 most significant).
This makes the partial trace over the chain a contiguous-stride reduction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

LEVELS = ("g", "down", "up")
LEVEL_CODE = {name: i for i, name in enumerate(LEVELS)}


class ConfigError(ValueError):
    """Raised for invalid or missing configuration values."""


@dataclass(frozen=True)
class SystemConfig:
    """All physical and numerical parameters of one simulation, in units of J.

    Rates are in units of J, times in units of 1/J.  Resonance is enforced:
    the oscillator frequency always equals the spin detuning.
    """

    n_atoms: int
    n_max: int
    coupling_j: float = 1.0
    interaction_v: float = 2.0
    detuning: float = 0.0
    gamma_up: float = 0.0
    gamma_down: float = 0.0
    kappa: float = 0.0
    rotating_frame: bool = True
    integrator_tol: float = 1e-8
    t_max: float | None = None
    master_seed: int = 0

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ConfigError("n_atoms must be >= 1")
        if self.n_max < 0:
            raise ConfigError("n_max must be >= 0")
        if self.coupling_j <= 0:
            raise ConfigError("coupling_j must be > 0")
        for key in ("gamma_up", "gamma_down", "kappa"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0")
        if self.integrator_tol <= 0:
            raise ConfigError("integrator_tol must be > 0")
        if self.t_max is not None and self.t_max < 0:
            raise ConfigError("t_max must be >= 0")

    @property
    def omega(self) -> float:
        """Oscillator frequency; pinned to the detuning (resonant coupling)."""
        return self.detuning

    @property
    def osc_dim(self) -> int:
        return self.n_max + 1

    @property
    def chain_dim(self) -> int:
        return 3**self.n_atoms

    @property
    def dim(self) -> int:
        return self.osc_dim**2 * self.chain_dim

    def resolved_t_max(self) -> float:
        """Explicit t_max, or 10 / (smallest positive rate) when unset."""
        if self.t_max is not None:
            return self.t_max
        rates = [r for r in (self.gamma_up, self.gamma_down, self.kappa) if r > 0]
        if not rates:
            raise ConfigError(
                "t_max is unset and all rates are zero; no default horizon exists"
            )
        return 10.0 / min(rates)


_REQUIRED_KEYS = ("n_atoms",)
_KNOWN_KEYS = {
    "n_atoms": int,
    "n_max": int,
    "coupling_j": float,
    "interaction_v": float,
    "detuning": float,
    "gamma_up": float,
    "gamma_down": float,
    "kappa": float,
    "rotating_frame": bool,
    "integrator_tol": float,
    "t_max": float,
    "master_seed": int,
    "initial_state": str,
}


def initial_excitations(kind: str, n_atoms: int) -> int:
    """Total excitation count mu of a named initial state."""
    if kind == "all_up":
        return n_atoms
    if kind in ("psi1", "psi2"):
        return 2
    raise ConfigError(f"unknown initial state kind '{kind}'")


def build_config(raw: Mapping[str, object]) -> SystemConfig:
    """Validate a flat key-value map and produce a SystemConfig.

    ``n_max`` defaults to the excitation count of the (optional) initial_state
    key, default ``all_up``: the total excitation number is conserved or
    lowered by every process, so that cutoff is exact rather than approximate.
    """
    for key in raw:
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown configuration key '{key}'")
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"missing required configuration key '{key}'")
    kwargs = {}
    for key, caster in _KNOWN_KEYS.items():
        if key in ("initial_state",) or key not in raw:
            continue
        try:
            kwargs[key] = caster(raw[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for '{key}': {raw[key]!r}") from exc
    if "n_max" not in kwargs:
        kind = str(raw.get("initial_state", "all_up"))
        kwargs["n_max"] = initial_excitations(kind, kwargs["n_atoms"])
    return SystemConfig(**kwargs)


def _parse_scalar(text: str):
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text.strip()


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` text file ('#' starts a comment)."""
    raw: dict[str, object] = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line: {line!r}")
        key, value = line.split("=", 1)
        raw[key.strip()] = _parse_scalar(value)
    return raw


@dataclass(frozen=True)
class BasisIndex:
    """One composite basis state: (fock_a, atom level labels, fock_b)."""

    fock_a: int
    atom_levels: tuple[str, ...]
    fock_b: int


def encode_index(basis: BasisIndex, config: SystemConfig) -> int:
    """Linear index of a basis state under the (a, chain, b) ordering."""
    if not (0 <= basis.fock_a <= config.n_max and 0 <= basis.fock_b <= config.n_max):
        raise ValueError("Fock index outside cutoff")
    if len(basis.atom_levels) != config.n_atoms:
        raise ValueError("wrong chain length")
    chain = 0
    for label in basis.atom_levels:
        chain = 3 * chain + LEVEL_CODE[label]
    return (basis.fock_a * config.chain_dim + chain) * config.osc_dim + basis.fock_b


def decode_index(idx: int, config: SystemConfig) -> BasisIndex:
    """Inverse of :func:`encode_index` on [0, dim)."""
    if not 0 <= idx < config.dim:
        raise ValueError("index out of range")
    fock_b = idx % config.osc_dim
    rest = idx // config.osc_dim
    chain = rest % config.chain_dim
    fock_a = rest // config.chain_dim
    labels = []
    for _ in range(config.n_atoms):
        labels.append(LEVELS[chain % 3])
        chain //= 3
    return BasisIndex(fock_a, tuple(reversed(labels)), fock_b)


def chain_digits(config: SystemConfig) -> np.ndarray:
    """(dim, N) array of atom level codes per full-space basis index."""
    idx = np.arange(config.dim)
    chain = (idx // config.osc_dim) % config.chain_dim
    digits = np.empty((config.dim, config.n_atoms), dtype=np.int8)
    for site in range(config.n_atoms - 1, -1, -1):
        digits[:, site] = chain % 3
        chain //= 3
    return digits


def fock_numbers(config: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of a†a and b†b over the full basis."""
    idx = np.arange(config.dim)
    fock_b = idx % config.osc_dim
    fock_a = idx // (config.osc_dim * config.chain_dim)
    return fock_a.astype(float), fock_b.astype(float)


def excitation_diagonal(config: SystemConfig) -> np.ndarray:
    """Diagonal of the conserved operator M = a†a + b†b + sum_i P_up(i)."""
    fock_a, fock_b = fock_numbers(config)
    n_up = (chain_digits(config) == LEVEL_CODE["up"]).sum(axis=1)
    return fock_a + fock_b + n_up


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over the composite basis.

    The norm is tracked explicitly: non-Hermitian propagation keeps states
    with squared norm below one and nothing here renormalizes silently.
    """

    amplitudes: np.ndarray
    config: SystemConfig = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.config.dim,):
            raise ValueError(
                f"amplitude length {amps.shape} does not match dim {self.config.dim}"
            )
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "StateVector":
        n = np.sqrt(self.norm_sq)
        if n == 0:
            raise ValueError("cannot normalize the zero state")
        return StateVector(self.amplitudes / n, self.config)


@dataclass(frozen=True)
class DensityOperator:
    """Dense density matrix with subsystem-dimension metadata."""

    matrix: np.ndarray
    config: SystemConfig = field(repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.config.dim, self.config.dim):
            raise ValueError("density matrix shape does not match config dim")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    def validate(self, tol: float = 1e-10) -> None:
        mat = self.matrix
        if np.abs(mat - mat.conj().T).max() > tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(mat).real - 1.0) > tol:
            raise ValueError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(mat).min() < -tol:
            raise ValueError("density matrix has a negative eigenvalue")


def initial_state(
    kind: str,
    config: SystemConfig,
    custom_spec: Mapping[BasisIndex, complex] | None = None,
) -> StateVector:
    """Prepare one of the named initial states (or a custom superposition).

    psi1 and psi2 are the two-atom benchmark states: one oscillator quantum
    with the chain in the singlet, and the doubly spin-excited vacuum.
    all_up puts every atom in the upper spin state with both oscillators empty.
    """
    amps = np.zeros(config.dim, dtype=complex)
    if kind == "custom":
        if not custom_spec:
            raise ValueError("custom initial state needs explicit amplitudes")
        for basis, value in custom_spec.items():
            amps[encode_index(basis, config)] = value
    elif kind in ("psi1", "psi2"):
        if config.n_atoms != 2:
            raise ValueError(f"{kind} is defined for exactly two atoms")
        if kind == "psi1":
            if config.n_max < 1:
                raise ValueError("psi1 needs n_max >= 1")
            up_down = BasisIndex(1, ("up", "down"), 0)
            down_up = BasisIndex(1, ("down", "up"), 0)
            amps[encode_index(up_down, config)] = 1 / np.sqrt(2)
            amps[encode_index(down_up, config)] = -1 / np.sqrt(2)
        else:
            amps[encode_index(BasisIndex(0, ("up", "up"), 0), config)] = 1.0
    elif kind == "all_up":
        basis = BasisIndex(0, ("up",) * config.n_atoms, 0)
        amps[encode_index(basis, config)] = 1.0
    else:
        raise ValueError(f"unknown initial state kind '{kind}'")
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise ValueError("initial state has zero norm")
    return StateVector(amps / norm, config)


def total_excitation(state: StateVector) -> float:
    """Norm-weighted expectation of the conserved excitation count M."""
    norm_sq = state.norm_sq
    if norm_sq == 0:
        raise ValueError("total excitation of the zero state is undefined")
    diag = excitation_diagonal(state.config)
    weighted = float(np.sum(diag * np.abs(state.amplitudes) ** 2))
    return weighted / norm_sq


def with_n_max(config: SystemConfig, n_max: int) -> SystemConfig:
    """Copy of the config with a different Fock cutoff."""
    return replace(config, n_max=n_max)
