"""Ensemble statistics: histograms, the log-normal decay-rate fit and the
dimensionless-unit mapping (reference coupling J expressed in MHz)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


def histogram(values, bin_edges) -> tuple[np.ndarray, np.ndarray]:
    """Counts and probabilities per bin (left-closed, last bin closed)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot histogram an empty value list")
    edges = np.asarray(bin_edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    counts, _ = np.histogram(values, bins=edges)
    return counts, counts / values.size


def negativity_bin_edges(mu_init: float, n_bins: int = 40) -> np.ndarray:
    """Uniform bins over the reachable range [0, ceil(mu)/2]."""
    top = max(np.ceil(mu_init - 1e-9) / 2.0, 1e-12)
    return np.linspace(0.0, top, n_bins + 1)


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    location: float
    width: float
    rss: float
    converged: bool
    iterations: int

    @property
    def peak_gamma(self) -> float:
        """Decay rate maximizing the fitted curve: exp(location - width^2)."""
        return float(np.exp(self.location - self.width**2))

    def predict(self, gammas) -> np.ndarray:
        return lognormal_model(np.asarray(gammas, dtype=float),
                               self.amplitude, self.location, self.width)


def lognormal_model(gamma: np.ndarray, amplitude: float, location: float,
                    width: float) -> np.ndarray:
    """(A / gamma) exp(-(ln gamma - nu)^2 / (2 sigma^2))."""
    log_g = np.log(gamma)
    return amplitude / gamma * np.exp(-((log_g - location) ** 2) / (2.0 * width**2))


def _best_amplitude(gammas, targets, location, width):
    shape = lognormal_model(gammas, 1.0, location, width)
    denom = float(shape @ shape)
    if denom == 0:
        return 0.0
    return float(shape @ targets) / denom


def fit_lognormal(gammas, n_avgs) -> FitResult:
    """Deterministic three-parameter least-squares fit of the scan curve.

    A coarse grid over (location, width) with the amplitude solved linearly
    seeds a Nelder-Mead refinement; the refined point is only accepted if it
    does not regress past the best grid candidate.
    """
    gammas = np.asarray(gammas, dtype=float)
    targets = np.asarray(n_avgs, dtype=float)
    if gammas.size < 4:
        raise ValueError("need at least 4 scan points to fit")
    if np.any(gammas <= 0):
        raise ValueError("decay rates must be positive")

    def objective(params):
        amp, loc, wid = params
        if wid <= 0:
            return np.inf
        resid = lognormal_model(gammas, amp, loc, wid) - targets
        return float(resid @ resid)

    best = None
    for loc in np.linspace(np.log(gammas.min()), np.log(gammas.max()), 9):
        for wid in (0.3, 1.0, 3.0):
            amp = _best_amplitude(gammas, targets, loc, wid)
            cand = (amp, loc, wid)
            score = objective(cand)
            if best is None or score < best[1]:
                best = (cand, score)
    start, start_score = best
    result = minimize(
        objective,
        np.array(start),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000},
    )
    params, score = result.x, float(result.fun)
    if score > start_score:
        params, score = np.array(start), start_score
    amp, loc, wid = params
    converged = bool(result.success) and wid > 0
    return FitResult(
        amplitude=float(amp),
        location=float(loc),
        width=float(abs(wid)),
        rss=score,
        converged=converged,
        iterations=int(result.nit),
    )


@dataclass(frozen=True)
class UnitMap:
    """Linear mapping between units of J and laboratory units.

    With the reference coupling at 1 MHz, a rate of 0.001 J is 1 kHz and a
    time of 1 (in 1/J) is 1 microsecond.
    """

    j_in_mhz: float = 1.0

    def __post_init__(self):
        if self.j_in_mhz <= 0:
            raise ValueError("reference coupling must be positive")

    def to_physical(self, value: float, kind: str) -> float:
        """J-units -> MHz for rates/energies, 1/J -> microseconds for times."""
        if kind in ("rate", "energy"):
            return value * self.j_in_mhz
        if kind == "time":
            return value / self.j_in_mhz
        raise ValueError(f"unknown quantity kind '{kind}'")

    def to_dimensionless(self, value: float, kind: str) -> float:
        if kind in ("rate", "energy"):
            return value / self.j_in_mhz
        if kind == "time":
            return value * self.j_in_mhz
        raise ValueError(f"unknown quantity kind '{kind}'")


def convert_units(value: float, kind: str, direction: str,
                  units: UnitMap | None = None) -> float:
    units = units or UnitMap()
    if direction == "to_physical":
        return units.to_physical(value, kind)
    if direction == "to_dimensionless":
        return units.to_dimensionless(value, kind)
    raise ValueError(f"unknown conversion direction '{direction}'")
