"""Wigner functions of amplified states.

Two evaluators are provided and kept independent:

* :func:`wigner_closed_form`, the closed expression ``-Wbar(alpha) Wbar(beta) F(X)``
  with the squeezing variables evaluated literally;
* :func:`wigner_oracle`, the displaced-parity expectation
  ``(2/pi)^2 <D(a)D(b) P D+(b)D+(a)>`` of a Fock tensor.

Mode 1 of the tensor pairs with ``alpha`` and mode 2 with ``beta``. For the
``+``/``-`` modes this means the tensor must be in the ``phase = 0`` basis; its
mode 2 is ``-pi_-``, which only flips ``beta -> -beta`` and is invisible for
states with even photon number in mode 2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .errors import CutoffOverflow, EmptyGrid, UnsupportedInjection
from .fock import (
    STRICT_DEFICIT,
    GainParams,
    Mixture,
    ModeTensor,
    as_gain,
    fock_state,
    qiopa_unitary,
    rotate_basis,
)

PREFACTOR = (2.0 / math.pi) ** 2
AXES = ("a_re", "a_im", "b_re", "b_im")


@dataclass(frozen=True)
class PhaseSpacePoint:
    alpha: complex
    beta: complex

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ValueError("phase-space coordinates must be finite")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


@dataclass(frozen=True)
class SqueezedCoords:
    gamma_a_plus: complex
    gamma_a_minus: complex
    gamma_b_plus: complex
    gamma_b_minus: complex
    delta_a: complex
    delta_b: complex
    x: float


def _squeezed(alpha, beta, g):
    e = np.exp(-g)
    ga_p = (alpha + np.conj(beta)) * e
    ga_m = (alpha - np.conj(beta)) * e
    gb_p = (np.conj(alpha) + beta) * e
    gb_m = (np.conj(alpha) - beta) * e
    da = (ga_p - 1j * ga_m) / math.sqrt(2.0)
    db = (gb_p - 1j * gb_m) / math.sqrt(2.0)
    return ga_p, ga_m, gb_p, gb_m, da, db, np.abs(da + db)


def squeezed_coords(point: PhaseSpacePoint, gain: GainParams | float) -> SqueezedCoords:
    gain = as_gain(gain)
    vals = _squeezed(point.alpha, point.beta, gain.g)
    return SqueezedCoords(*(complex(v) for v in vals[:6]), float(vals[6]))


def interference_term(x, injected_photons: int):
    """``F(X) = 1 - X^2`` for one injected photon, ``1 - 2X^2 + X^4/4`` for two."""
    x = np.asarray(x, dtype=float)
    if injected_photons == 1:
        out = 1.0 - x**2
    elif injected_photons == 2:
        out = 1.0 - 2.0 * x**2 + 0.25 * x**4
    else:
        raise UnsupportedInjection(f"closed form known for 1 or 2 injected photons, got {injected_photons}")
    return out if out.ndim else float(out)


def wigner_closed_form(point: PhaseSpacePoint | tuple, gain: GainParams | float, injected_photons: int = 1):
    """Closed-form ``W(alpha, beta)``; ``point`` may also be an ``(alpha, beta)`` pair of arrays."""
    gain = as_gain(gain)
    alpha, beta = (point.alpha, point.beta) if isinstance(point, PhaseSpacePoint) else point
    *_, da, db, x = _squeezed(np.asarray(alpha, complex), np.asarray(beta, complex), gain.g)
    w = -PREFACTOR * np.exp(-np.abs(da) ** 2 - np.abs(db) ** 2) * interference_term(x, injected_photons)
    return w if np.ndim(w) else float(w)


# -- Fock-space oracle --------------------------------------------------------


def displacement_matrix(alpha: complex, rows: int, cols: int) -> np.ndarray:
    """``<m|D(alpha)|n>`` for ``m < rows``, ``n < cols`` from the Laguerre closed form."""
    alpha = complex(alpha)
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    x = abs(alpha) ** 2
    if x == 0.0:
        return np.eye(rows, cols, dtype=complex)
    lo = np.minimum(m, n)
    k = np.abs(m - n)
    logpre = 0.5 * (gammaln(lo + 1) - gammaln(lo + k + 1)) + k * math.log(abs(alpha)) - 0.5 * x
    lag = eval_genlaguerre(lo, k, x)
    unit = alpha / abs(alpha)
    ph = np.where(m >= n, unit ** (m - n).clip(0), (-np.conj(unit)) ** (n - m).clip(0))
    return np.exp(logpre) * lag * ph


def _out_dim(alpha: complex, cutoff: int) -> int:
    r = abs(alpha)
    return int(math.ceil(cutoff + r * r + 6 * r * math.sqrt(cutoff + 1) + 25))


def displaced_parity(alpha: complex, cutoff: int, strict: bool = True) -> tuple[np.ndarray, float]:
    """Box-restricted matrix of ``D(alpha) P D(alpha)+`` and the padding deficit.

    Computed as ``Dm+ P Dm`` with a rectangular ``Dm = D(-alpha)`` whose row
    count grows with ``|alpha|`` so that no displaced column leaks out.
    """
    rows = _out_dim(alpha, cutoff)
    Dm = displacement_matrix(-alpha, rows, cutoff + 1)
    deficit = float(1.0 - np.min(np.sum(np.abs(Dm) ** 2, axis=0)))
    if strict and deficit > STRICT_DEFICIT:
        raise CutoffOverflow(f"displacement |alpha| = {abs(alpha):.3g}: padding deficit {deficit:.3g}")
    parity = (-1.0) ** np.arange(rows)
    return (Dm.conj().T * parity) @ Dm, deficit


def characteristic_fn_oracle(state: ModeTensor, eta: complex, xi: complex, strict: bool = True) -> complex:
    """``<psi| D(eta) (x) D(xi) |psi>`` on the tensor's two modes."""
    n = state.cutoff
    d1 = displacement_matrix(eta, n + 1, n + 1)
    d2 = displacement_matrix(xi, n + 1, n + 1)
    if strict:
        # the box-restricted D must keep every occupied column
        for d in (d1, d2):
            col = np.sum(np.abs(d) ** 2, axis=0)
            used = np.any(state.amps != 0, axis=1) | np.any(state.amps != 0, axis=0)
            if np.any(1.0 - col[used] > STRICT_DEFICIT):
                raise CutoffOverflow(f"displacement ({eta}, {xi}) leaks out of the Fock box")
    psi = state.amps
    return complex(np.vdot(psi, d1 @ psi @ d2.T))


def _components(state) -> list[tuple[float, np.ndarray]]:
    if isinstance(state, Mixture):
        return [(p, t.amps) for p, t in state.components]
    return [(1.0, state.amps)]


def _cutoff_of(state) -> int:
    return state.components[0][1].cutoff if isinstance(state, Mixture) else state.cutoff


def wigner_values(state: ModeTensor | Mixture, alphas, betas, strict: bool = True) -> np.ndarray:
    """Oracle Wigner values on the full product of ``alphas`` x ``betas``.

    Cost is one displaced-parity matrix per distinct coordinate plus a single
    matrix product, which keeps 101 x 101 grids cheap.
    """
    n = _cutoff_of(state)
    alphas = np.atleast_1d(np.asarray(alphas, complex))
    betas = np.atleast_1d(np.asarray(betas, complex))
    pa = np.stack([displaced_parity(a, n, strict)[0] for a in alphas])
    pb = np.stack([displaced_parity(b, n, strict)[0] for b in betas])
    out = np.zeros((len(alphas), len(betas)))
    for p, psi in _components(state):
        # K[x, b, d] = sum_{a,c} conj(psi[a,b]) Pa[x][a,c] psi[c,d]
        K = np.einsum("ab,xac,cd->xbd", psi.conj(), pa, psi, optimize=True)
        out += p * np.real(K.reshape(len(alphas), -1) @ pb.reshape(len(betas), -1).T)
    return PREFACTOR * out


def wigner_oracle(state: ModeTensor | Mixture, point: PhaseSpacePoint, strict: bool = True) -> float:
    return float(wigner_values(state, [point.alpha], [point.beta], strict)[0, 0])


def amplified_injection(gain: GainParams | float, injected_photons: int, cutoff: int) -> ModeTensor:
    """``U |k_+, 0_->`` in the ``phase = 0`` basis (``k = 0`` gives squeezed vacuum)."""
    return qiopa_unitary(fock_state(injected_photons, 0, cutoff, 0.0), gain, 0.0)


# -- grids --------------------------------------------------------------------


@dataclass(frozen=True)
class SliceSpec:
    """Two varying real coordinates out of ``a_re, a_im, b_re, b_im``; the rest fixed."""

    x_axis: str = "a_re"
    y_axis: str = "b_re"
    x_range: tuple[float, float] = (-4.0, 4.0)
    y_range: tuple[float, float] = (-4.0, 4.0)
    resolution: int = 101
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x_axis not in AXES or self.y_axis not in AXES or self.x_axis == self.y_axis:
            raise ValueError(f"slice axes must be two distinct names from {AXES}")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.linspace(*self.x_range, self.resolution),
            np.linspace(*self.y_range, self.resolution),
        )

    def coordinates(self) -> np.ndarray:
        """Array ``(res, res, 4)`` of ``(a_re, a_im, b_re, b_im)``; index ``[ix, iy]``."""
        xs, ys = self.axes()
        coords = np.zeros((len(xs), len(ys), 4))
        for k, name in enumerate(AXES):
            coords[..., k] = self.fixed.get(name, 0.0)
        coords[..., AXES.index(self.x_axis)] = xs[:, None]
        coords[..., AXES.index(self.y_axis)] = ys[None, :]
        return coords


@dataclass(frozen=True, eq=False)
class WignerGrid:
    spec: SliceSpec
    gain: float
    injected_photons: int
    values_closed: np.ndarray
    values_oracle: np.ndarray | None = None
    cutoff: int | None = None

    @property
    def alpha(self) -> np.ndarray:
        c = self.spec.coordinates()
        return c[..., 0] + 1j * c[..., 1]

    @property
    def beta(self) -> np.ndarray:
        c = self.spec.coordinates()
        return c[..., 2] + 1j * c[..., 3]

    def to_csv(self, path: str | Path) -> None:
        coords = self.spec.coordinates().reshape(-1, 4)
        wc = self.values_closed.ravel()
        wo = None if self.values_oracle is None else self.values_oracle.ravel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a_re", "a_im", "b_re", "b_im", "w_closed", "w_oracle"])
            for k in range(len(coords)):
                row = [repr(float(v)) for v in coords[k]] + [repr(float(wc[k]))]
                row.append("" if wo is None else repr(float(wo[k])))
                w.writerow(row)

    def metadata(self) -> dict:
        layer = self.values_oracle if self.values_oracle is not None else self.values_closed
        rep = negativity_report_values(layer, self)
        meta = {
            "gain": self.gain,
            "injection": self.injected_photons,
            "slice": asdict(self.spec),
            "cutoff": self.cutoff,
            "layer": "oracle" if self.values_oracle is not None else "closed",
            "min_value": rep.min_value,
            "min_location": rep.min_location,
            "negative_fraction": rep.negative_fraction,
        }
        closed = negativity_report_values(self.values_closed, self)
        meta["closed_min_value"] = closed.min_value
        meta["closed_negative_fraction"] = closed.negative_fraction
        if self.values_oracle is not None:
            meta["residual"] = residual_report(self)
        return meta

    def write(self, csv_path: str | Path, json_path: str | Path) -> None:
        self.to_csv(csv_path)
        Path(json_path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))


def wigner_grid(
    spec: SliceSpec | None = None,
    gain: GainParams | float = 0.0,
    injected_photons: int = 1,
    state: ModeTensor | Mixture | None = None,
    closed: bool = True,
    strict: bool = True,
) -> WignerGrid:
    """Evaluate the closed form, and the oracle when ``state`` is supplied, on a 2-D slice.

    With ``closed=False`` the closed-form layer is left as NaN-free zeros; use
    this for states (vacuum injection, lossy mixtures) the formula does not
    describe.
    """
    spec = spec or SliceSpec()
    gain = as_gain(gain)
    coords = spec.coordinates()
    alpha = coords[..., 0] + 1j * coords[..., 1]
    beta = coords[..., 2] + 1j * coords[..., 3]
    wc = wigner_closed_form((alpha, beta), gain, injected_photons) if closed else np.zeros(alpha.shape)
    wo = None
    cutoff = None
    if state is not None:
        if isinstance(state, ModeTensor) and state.phase != 0.0:
            state = rotate_basis(state, 0.0)
        cutoff = _cutoff_of(state)
        ua, ia = np.unique(alpha.ravel(), return_inverse=True)
        ub, ib = np.unique(beta.ravel(), return_inverse=True)
        full = wigner_values(state, ua, ub, strict)
        wo = full[ia, ib].reshape(alpha.shape)
    return WignerGrid(spec, gain.g, injected_photons, np.asarray(wc, float), wo, cutoff)


@dataclass(frozen=True)
class NegativityReport:
    min_value: float
    min_location: tuple[float, float, float, float]
    negative_fraction: float


NEGATIVE_TOL = 1e-12


def negativity_report_values(values: np.ndarray, grid: WignerGrid) -> NegativityReport:
    if values is None or values.size == 0:
        raise EmptyGrid("grid has no values")
    k = int(np.argmin(values))
    loc = tuple(float(v) for v in grid.spec.coordinates().reshape(-1, 4)[k])
    frac = float(np.mean(values < -NEGATIVE_TOL))
    return NegativityReport(float(values.ravel()[k]), loc, frac)


def negativity_report(grid: WignerGrid, layer: str = "auto") -> NegativityReport:
    """Minimum, its location, and the fraction of nodes below ``-1e-12``.

    ``layer`` is ``"closed"``, ``"oracle"``, or ``"auto"`` (oracle when present).
    """
    if layer == "auto":
        layer = "oracle" if grid.values_oracle is not None else "closed"
    values = grid.values_oracle if layer == "oracle" else grid.values_closed
    return negativity_report_values(values, grid)


def residual_report(grid: WignerGrid) -> dict:
    """Closed form minus oracle on every node, summarized. Not a pass/fail check."""
    if grid.values_oracle is None:
        raise ValueError("grid has no oracle layer")
    wc, wo = grid.values_closed.ravel(), grid.values_oracle.ravel()
    r = wc - wo
    k = int(np.argmax(np.abs(r)))
    scale = float(wc @ wo / (wo @ wo)) if wo @ wo > 0 else float("nan")
    corr = float(np.corrcoef(wc, wo)[0, 1]) if np.std(wc) > 0 and np.std(wo) > 0 else float("nan")
    loc = tuple(float(v) for v in grid.spec.coordinates().reshape(-1, 4)[k])
    return {
        "max_abs_residual": float(abs(r[k])),
        "max_abs_location": loc,
        "rms_residual": float(np.sqrt(np.mean(r**2))),
        "best_fit_scale_closed_over_oracle": scale,
        "correlation": corr,
        "closed_negative_fraction": float(np.mean(wc < -NEGATIVE_TOL)),
        "oracle_negative_fraction": float(np.mean(wo < -NEGATIVE_TOL)),
    }


def integrate_oracle(state: ModeTensor | Mixture, half_width: float = 4.0, step: float = 0.3) -> float:
    """Trapezoid integral of the oracle over a 4-D box (normalization check)."""
    xs = np.arange(-half_width, half_width + step / 2, step)
    plane = (xs[:, None] + 1j * xs[None, :]).ravel()
    w = wigner_values(state, plane, plane, strict=False)
    return float(w.sum() * step**4)


def points_on_root_locus(rng: np.random.Generator, x_target: float, gain: GainParams | float, count: int) -> list[PhaseSpacePoint]:
    """Random points with ``X = x_target`` (``X`` is homogeneous of degree one)."""
    gain = as_gain(gain)
    pts = []
    while len(pts) < count:
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        x = _squeezed(a, b, gain.g)[6]
        if x < 1e-6:
            continue
        s = x_target / x
        pts.append(PhaseSpacePoint(a * s, b * s))
    return pts


def root_loci(injected_photons: int) -> Sequence[float]:
    if injected_photons == 1:
        return (1.0,)
    if injected_photons == 2:
        return (math.sqrt(4 - 2 * math.sqrt(3)), math.sqrt(4 + 2 * math.sqrt(3)))
    raise UnsupportedInjection(injected_photons)
