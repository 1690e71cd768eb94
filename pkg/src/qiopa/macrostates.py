"""Closed-form macro-qubits of the quantum-injected amplifier and the micro-macro state."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .fock import (
    DEFAULT_CUTOFF,
    BipartiteState,
    GainParams,
    ModeTensor,
    _check_deficit,
    as_gain,
    check_cutoff,
    fock_state,
    number_expectations,
)

TAIL_TOL = 1e-12


class MacroBranch(enum.Enum):
    PHI_PARALLEL = "phi"
    PHI_PERP = "phi_perp"

    @property
    def other(self) -> "MacroBranch":
        return MacroBranch.PHI_PERP if self is MacroBranch.PHI_PARALLEL else MacroBranch.PHI_PARALLEL


def _log_odd(i: np.ndarray, gain: GainParams) -> np.ndarray:
    # log |(Gamma/2)^i sqrt((2i+1)!) / i!|
    return i * math.log(gain.Gamma / 2) + 0.5 * gammaln(2 * i + 2) - gammaln(i + 1)


def _log_even(j: np.ndarray, gain: GainParams) -> np.ndarray:
    return j * math.log(gain.Gamma / 2) + 0.5 * gammaln(2 * j + 1) - gammaln(j + 1)


def gamma_coeff(i: int, j: int, gain: GainParams | float) -> float:
    """``gamma_ij = C^-2 (-Gamma/2)^i (Gamma/2)^j sqrt((2i+1)! (2j)!) / (i! j!)``.

    Evaluated in the log domain so that indices in the hundreds stay finite.
    """
    gain = as_gain(gain)
    if i < 0 or j < 0:
        raise ValueError("indices must be non-negative")
    if gain.Gamma / 2 == 0.0:
        return 1.0 if i == j == 0 else 0.0
    logmag = -2 * math.log(gain.C) + _log_odd(np.float64(i), gain) + _log_even(np.float64(j), gain)
    return float((-1) ** i * math.exp(logmag))


def gamma_grid(gain: GainParams | float, i_max: int, j_max: int) -> np.ndarray:
    """Dense ``gamma_ij`` for ``0 <= i <= i_max``, ``0 <= j <= j_max``."""
    gain = as_gain(gain)
    out = np.zeros((i_max + 1, j_max + 1))
    if gain.Gamma / 2 == 0.0:
        out[0, 0] = 1.0
        return out
    i = np.arange(i_max + 1, dtype=float)
    j = np.arange(j_max + 1, dtype=float)
    odd = np.exp(_log_odd(i, gain) - 1.5 * math.log(gain.C)) * (-1.0) ** i
    even = np.exp(_log_even(j, gain) - 0.5 * math.log(gain.C))
    return np.outer(odd, even)


def _row_masses(gain: GainParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized marginal masses of the odd (injected) and even factors, indices ``0..n``."""
    if gain.Gamma / 2 == 0.0:
        e = np.zeros(n + 1)
        e[0] = 1.0
        return e, e.copy()
    k = np.arange(n + 1, dtype=float)
    odd = np.exp(2 * _log_odd(k, gain) - 3 * math.log(gain.C))
    even = np.exp(2 * _log_even(k, gain) - math.log(gain.C))
    return odd, even


@dataclass(frozen=True, eq=False)
class GammaTable:
    gain: GainParams
    values: np.ndarray

    @property
    def i_max(self) -> int:
        return self.values.shape[0] - 1

    @property
    def j_max(self) -> int:
        return self.values.shape[1] - 1

    def total(self) -> float:
        return float(np.sum(self.values**2))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "gamma_value"])
            for (i, j), v in np.ndenumerate(self.values):
                w.writerow([i, j, repr(float(v))])


def gamma_table(gain: GainParams | float, tol: float = TAIL_TOL) -> GammaTable:
    """Grow ``(i_max, j_max)`` until the last row and column each carry < ``tol`` of the mass."""
    gain = as_gain(gain)
    n = 16
    while True:
        odd, even = _row_masses(gain, n)
        i_ok = np.nonzero(odd * even.sum() < tol)[0]
        j_ok = np.nonzero(even * odd.sum() < tol)[0]
        # rows decay monotonically past the peak; take the first index past the maximum
        i_ok = i_ok[i_ok > np.argmax(odd)] if gain.g > 0 else i_ok
        j_ok = j_ok[j_ok > np.argmax(even)] if gain.g > 0 else j_ok
        if len(i_ok) and len(j_ok):
            return GammaTable(gain, gamma_grid(gain, int(i_ok[0]), int(j_ok[0])))
        n *= 2
        if n > 1 << 22:
            raise RuntimeError(f"gamma table did not converge for g = {gain.g}")


def predicted_deficit(gain: GainParams | float, cutoff: int) -> float:
    """Mass of the macro-state lost when both polarization modes are cut at ``cutoff``."""
    gain = as_gain(gain)
    cutoff = check_cutoff(cutoff)
    odd, even = _row_masses(gain, cutoff // 2 + 1)
    kept_odd = odd[: (cutoff - 1) // 2 + 1].sum()
    kept_even = even[: cutoff // 2 + 1].sum()
    return max(0.0, 1.0 - kept_odd * kept_even)


def suggested_cutoff(gain: GainParams | float, target: float = 1e-9, limit: int = 1 << 22) -> int:
    """Smallest per-mode cutoff whose predicted deficit is below ``target``."""
    gain = as_gain(gain)
    if gain.g == 0:
        return 1
    n = 64
    while n <= limit:
        odd, even = _row_masses(gain, n // 2 + 1)
        k = np.arange(1, n + 1)
        co = np.cumsum(odd)[(k - 1) // 2]
        ce = np.cumsum(even)[k // 2]
        ok = np.nonzero(1.0 - co * ce < target)[0]
        if len(ok):
            return int(k[ok[0]])
        n *= 4
    return limit


def build_macro_state(
    gain: GainParams | float,
    phase: float = 0.0,
    branch: MacroBranch = MacroBranch.PHI_PARALLEL,
    cutoff: int = DEFAULT_CUTOFF,
    strict: bool = False,
) -> ModeTensor:
    """Macro-qubit ``|Phi^phi>`` or ``|Phi^phi_perp>`` tagged with basis ``phase``.

    ``PHI_PARALLEL`` puts ``gamma_ij`` on ``|2i+1, 2j>``. ``PHI_PERP`` is the
    amplified image of a photon in the orthogonal mode: ``(-1)^(i+j) gamma_ij``
    on ``|2j, 2i+1>`` (the mode-2 squeezer has the opposite sign, so the odd
    mode carries ``(+Gamma/2)^i`` and the even one ``(-Gamma/2)^j``).
    """
    gain = as_gain(gain)
    cutoff = check_cutoff(cutoff)
    grid = gamma_grid(gain, (cutoff - 1) // 2, cutoff // 2)
    amps = np.zeros((cutoff + 1, cutoff + 1))
    odd_idx = 2 * np.arange(grid.shape[0]) + 1
    even_idx = 2 * np.arange(grid.shape[1])
    if branch is MacroBranch.PHI_PARALLEL:
        amps[np.ix_(odd_idx, even_idx)] = grid
    else:
        sign = (-1.0) ** np.add.outer(np.arange(grid.shape[0]), np.arange(grid.shape[1]))
        amps[np.ix_(even_idx, odd_idx)] = (grid * sign).T
    deficit = predicted_deficit(gain, cutoff)
    _check_deficit(deficit, strict, "build_macro_state")
    return ModeTensor(amps, phase, deficit)


def build_micro_macro(
    gain: GainParams | float,
    phase: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
    micro_cutoff: int | None = None,
    strict: bool = False,
) -> BipartiteState:
    """``2^-1/2 (|1 phi_perp>_A |Phi^phi>_B - |1 phi>_A |Phi^phi_perp>_B)``; site a is the micro side."""
    mc = micro_cutoff if micro_cutoff is not None else cutoff
    phi = build_macro_state(gain, phase, MacroBranch.PHI_PARALLEL, cutoff, strict)
    perp = build_macro_state(gain, phase, MacroBranch.PHI_PERP, cutoff, strict)
    r = 2**-0.5
    return BipartiteState(
        (
            (r, fock_state(0, 1, mc, phase), phi),
            (-r, fock_state(1, 0, mc, phase), perp),
        )
    )


def mean_photon_numbers(state: ModeTensor) -> tuple[float, float]:
    """Per-mode photon-number expectations of a normalized tensor, in its own basis."""
    n1, n2 = number_expectations(state)
    norm = state.norm_squared()
    return n1 / norm, n2 / norm


def branch_distinguishability(gain: GainParams | float, phase: float = 0.0, cutoff: int = DEFAULT_CUTOFF) -> float:
    """Difference of ``<n_phi - n_phi_perp>`` between the two macro branches."""
    a = mean_photon_numbers(build_macro_state(gain, phase, MacroBranch.PHI_PARALLEL, cutoff))
    b = mean_photon_numbers(build_macro_state(gain, phase, MacroBranch.PHI_PERP, cutoff))
    return (a[0] - a[1]) - (b[0] - b[1])
