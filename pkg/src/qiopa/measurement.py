"""Photon counting, dichotomic correlations and CHSH estimation on bipartite states.

Each site is read out by counting ``p`` photons in mode 1 and ``q`` in mode 2
of an equatorial basis; the dichotomic outcome is ``sign(p - q)`` and ties are
inconclusive. An optional orthogonality filter per site taps the beam before
the readout and vetoes the shot from the tapped counts alone.

Both readouts run off the same per-site preparation: ``mode="enumerate"``
computes exact outcome probabilities from per-site Gram matrices, and
``mode="sample"`` draws shots (tap outcomes first, then site A, then site B
conditioned on A).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AllDiscarded
from .fock import BipartiteState, canonical_phase, rotate_amps, tap_kraus, tap_probabilities
from .protocols import OFilterConfig

PRUNE = 1e-16
TSIRELSON = 2.0 * math.sqrt(2.0)


def make_rng(seed: int | None = None) -> np.random.Generator:
    """Counter-based generator: the same seed always gives the same stream."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent sub-streams for parallel runs, reproducible from one seed."""
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class MeasurementSetting:
    site: str
    basis_phase: float

    def __post_init__(self):
        if self.site not in ("A", "B"):
            raise ValueError(f"site must be 'A' or 'B', got {self.site!r}")
        object.__setattr__(self, "basis_phase", canonical_phase(self.basis_phase))


def settings_pair(phi_a: float, phi_b: float) -> tuple[MeasurementSetting, MeasurementSetting]:
    return MeasurementSetting("A", phi_a), MeasurementSetting("B", phi_b)


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """A batch of shots. Counts are ``-1`` where a filter vetoed the shot."""

    settings: tuple[MeasurementSetting, MeasurementSetting]
    counts_a: np.ndarray
    counts_b: np.ndarray
    outcome_a: np.ndarray
    outcome_b: np.ndarray
    accepted_a: np.ndarray
    accepted_b: np.ndarray
    tap_a: np.ndarray
    tap_b: np.ndarray

    def __len__(self):
        return len(self.outcome_a)

    @property
    def conclusive(self) -> np.ndarray:
        return (self.outcome_a != 0) & (self.outcome_b != 0)


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    standard_error: float
    n_used: int
    n_discarded: int
    exact: bool = False
    p_used: float | None = None

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.value <= 1.0 + 1e-12:
            raise ValueError(f"correlation {self.value} outside [-1, 1]")


@dataclass(frozen=True)
class ChshResult:
    angles: tuple[float, float, float, float]
    pairs: tuple
    correlations: tuple
    S: float
    standard_error: float

    @property
    def violation(self) -> bool:
        return self.S - 2.0 > 3.0 * self.standard_error

    def summary(self) -> dict:
        return {
            "S": self.S,
            "stderr": self.standard_error,
            "violation": self.violation,
            "angles": list(self.angles),
            "correlations": [
                {"phi_a": a, "phi_b": b, "E": c.value, "stderr": c.standard_error, "n_used": c.n_used, "n_discarded": c.n_discarded}
                for (a, b), c in zip(self.pairs, self.correlations)
            ],
        }


def _region_masks(cutoff: int) -> dict[int, np.ndarray]:
    p = np.arange(cutoff + 1)
    d = p[:, None] - p[None, :]
    return {1: d > 0, -1: d < 0, 0: d == 0}


class _Site:
    """Filter branches of one site's Schmidt tensors, with readout-basis caches."""

    def __init__(self, tensors, weights: np.ndarray, config: OFilterConfig | None):
        self.config = config
        self.cutoff = tensors[0].cutoff
        if config is None:
            self.phase = tensors[0].phase
            amps = np.stack([t.amps for t in tensors]) if all(t.phase == self.phase for t in tensors) else np.stack(
                [rotate_amps(t.amps, t.phase, self.phase) for t in tensors]
            )
            self.keys = [None]
            self.accept = np.array([True])
            self.branches = amps[None]
        else:
            self.phase = canonical_phase(config.basis_phase)
            amps = np.stack([rotate_amps(t.amps, t.phase, self.phase) for t in tensors])
            R = config.reflectivity
            probs = tap_probabilities(amps, R)  # (terms, m, n)
            scale = np.abs(weights)[:, None, None] ** 2
            keep = np.argwhere((probs * scale).max(axis=0) > PRUNE * (scale.sum() or 1.0))
            self.keys = [(int(m), int(n)) for m, n in keep]
            self.accept = np.array([config.decide(m, n) for m, n in self.keys], dtype=bool)
            self.branches = np.stack([tap_kraus(amps, R, m, n) for m, n in self.keys])
        flat = self.branches.reshape(len(self.keys), len(tensors), -1)
        self.grams = np.einsum("bix,bjx->bij", flat.conj(), flat)
        self._rotated: dict = {}

    def rotated(self, phase: float) -> np.ndarray:
        phase = canonical_phase(phase)
        if phase not in self._rotated:
            self._rotated[phase] = rotate_amps(self.branches, self.phase, phase)
        return self._rotated[phase]

    def region_grams(self, phase: float) -> dict[int, np.ndarray]:
        """``H_s[i, j]`` summed over accepted branches, for outcome regions ``s``."""
        Y = self.rotated(phase)[self.accept]
        out = {}
        for s, mask in _region_masks(self.cutoff).items():
            y = Y[:, :, mask]
            out[s] = np.einsum("bix,bjx->ij", y.conj(), y)
        return out


class Experiment:
    """A bipartite state prepared for repeated readout under changing settings."""

    def __init__(self, state: BipartiteState, filters=None):
        fa, fb = _split_filters(filters)
        self.state = state
        self.filters = (fa, fb)
        self.w = state.weights
        self.norm2 = state.norm_squared()
        self.site_a = _Site(state.site("a"), self.w, fa)
        self.site_b = _Site(state.site("b"), self.w, fb)

    # -- exact ---------------------------------------------------------------

    def outcome_distribution(self, settings) -> dict:
        """Exact ``P(s_a, s_b)`` over ``{+1, -1, 0}``; vetoed shots are reported separately."""
        sa, sb = _check_settings(settings)
        ha = self.site_a.region_grams(sa.basis_phase)
        hb = self.site_b.region_grams(sb.basis_phase)
        wc, w = self.w.conj(), self.w
        joint = {}
        for x, gx in ha.items():
            for y, gy in hb.items():
                joint[(x, y)] = float(np.real(wc @ (gx * gy) @ w)) / self.norm2
        return {"joint": joint, "vetoed": max(0.0, 1.0 - sum(joint.values()))}

    def marginal_a(self, settings) -> dict[int, float]:
        j = self.outcome_distribution(settings)["joint"]
        return {x: sum(v for (a, _), v in j.items() if a == x) for x in (1, -1, 0)}

    def exact_correlation(self, settings) -> CorrelationEstimate:
        j = self.outcome_distribution(settings)["joint"]
        used = sum(j[(x, y)] for x in (1, -1) for y in (1, -1))
        if used <= 0:
            raise AllDiscarded("no conclusive, accepted outcome has non-zero probability")
        e = (j[(1, 1)] + j[(-1, -1)] - j[(1, -1)] - j[(-1, 1)]) / used
        return CorrelationEstimate(float(np.clip(e, -1, 1)), 0.0, 0, 0, exact=True, p_used=used)

    # -- sampling ------------------------------------------------------------

    def sample(self, settings, size: int, rng: np.random.Generator) -> MeasurementRecord:
        sa, sb = _check_settings(settings)
        A, B = self.site_a, self.site_b
        nb = len(B.keys)
        if len(A.keys) * nb == 1:
            pair = np.zeros(size, dtype=np.int64)
        else:
            # tap outcomes first: they never depend on the readout settings
            ptap = np.einsum("i,j,aij,bij->ab", self.w.conj(), self.w, A.grams, B.grams).real.ravel()
            ptap = np.clip(ptap, 0, None)
            pair = rng.choice(len(ptap), size=size, p=ptap / ptap.sum())
        ia, ib = pair // nb, pair % nb
        acc_a, acc_b = A.accept[ia], B.accept[ib]
        counts_a = np.full((size, 2), -1, dtype=np.int64)
        counts_b = np.full((size, 2), -1, dtype=np.int64)
        YA, YB = A.rotated(sa.basis_phase), B.rotated(sb.basis_phase)
        side = A.cutoff + 1
        both = acc_a & acc_b
        for key in np.unique(pair[both]):
            idx = np.nonzero(pair == key)[0]
            V = self.w[:, None, None] * YA[key // nb]
            yb = YB[key % nb]
            flat_b = yb.reshape(len(self.w), -1)
            gb = flat_b.conj() @ flat_b.T
            pa = np.einsum("ipq,ij,jpq->pq", V.conj(), gb, V).real.ravel()
            pa = np.clip(pa, 0, None)
            draw_a = rng.choice(pa.size, size=len(idx), p=pa / pa.sum())
            counts_a[idx] = np.stack(np.divmod(draw_a, side), axis=1)
            for flat in np.unique(draw_a):
                sub = idx[draw_a == flat]
                p, q = divmod(int(flat), side)
                cond = np.tensordot(V[:, p, q], yb, axes=1)
                pb = np.abs(cond.ravel()) ** 2
                draw_b = rng.choice(pb.size, size=len(sub), p=pb / pb.sum())
                counts_b[sub] = np.stack(np.divmod(draw_b, B.cutoff + 1), axis=1)
        out_a = np.where(both, np.sign(counts_a[:, 0] - counts_a[:, 1]), 0).astype(np.int8)
        out_b = np.where(both, np.sign(counts_b[:, 0] - counts_b[:, 1]), 0).astype(np.int8)
        tap_a = np.array([A.keys[i] if A.keys[i] is not None else (0, 0) for i in ia], dtype=np.int64).reshape(size, 2)
        tap_b = np.array([B.keys[i] if B.keys[i] is not None else (0, 0) for i in ib], dtype=np.int64).reshape(size, 2)
        return MeasurementRecord((sa, sb), counts_a, counts_b, out_a, out_b, acc_a, acc_b, tap_a, tap_b)

    def correlation(self, settings, n_samples: int = 10_000, rng=None, mode: str = "sample") -> CorrelationEstimate:
        if mode == "enumerate":
            return self.exact_correlation(settings)
        if mode != "sample":
            raise ValueError(f"mode must be 'sample' or 'enumerate', got {mode!r}")
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        rec = self.sample(settings, n_samples, rng if rng is not None else make_rng())
        return estimate_from_record(rec)


def estimate_from_record(rec: MeasurementRecord) -> CorrelationEstimate:
    ok = rec.conclusive
    n_used = int(ok.sum())
    if n_used == 0:
        raise AllDiscarded("every shot was inconclusive or vetoed")
    prod = rec.outcome_a[ok].astype(float) * rec.outcome_b[ok]
    e = float(prod.mean())
    se = math.sqrt(max(1.0 - e * e, 0.0) / n_used)
    return CorrelationEstimate(e, se, n_used, len(rec) - n_used)


def _split_filters(filters):
    if filters is None:
        return None, None
    if isinstance(filters, OFilterConfig):
        return filters, filters
    fa, fb = filters
    return fa, fb


def _check_settings(settings):
    sa, sb = settings
    if not (isinstance(sa, MeasurementSetting) and isinstance(sb, MeasurementSetting)):
        sa, sb = settings_pair(float(sa), float(sb))
    if sa.site != "A" or sb.site != "B":
        raise ValueError("settings must be ordered (site A, site B)")
    return sa, sb


# -- public entry points -------------------------------------------------------


def sample_counts(state: BipartiteState, settings, rng: np.random.Generator, size: int = 1, filters=None) -> MeasurementRecord:
    return Experiment(state, filters).sample(settings, size, rng)


def exact_distribution(state: BipartiteState, settings, filters=None) -> dict:
    return Experiment(state, filters).outcome_distribution(settings)


def correlation(
    state: BipartiteState,
    settings,
    n_samples: int = 10_000,
    filters=None,
    rng: np.random.Generator | None = None,
    mode: str = "sample",
) -> CorrelationEstimate:
    """``E = (N++ + N-- - N+- - N-+) / N_used`` over conclusive, accepted shots."""
    return Experiment(state, filters).correlation(settings, n_samples, rng, mode)


@dataclass(frozen=True)
class FringeScan:
    fixed: MeasurementSetting
    points: tuple
    visibility: float

    def rows(self):
        for phi, est in self.points:
            pa, pb = (self.fixed.basis_phase, phi) if self.fixed.site == "A" else (phi, self.fixed.basis_phase)
            yield pa, pb, est


def fringe_scan(
    state: BipartiteState,
    fixed: MeasurementSetting,
    phis: Sequence[float],
    n_samples: int = 10_000,
    filters=None,
    rng: np.random.Generator | None = None,
    mode: str = "sample",
) -> FringeScan:
    """Correlation against the other site's analyzer phase; ``V = (E_max - E_min) / 2``."""
    exp = Experiment(state, filters)
    rng = rng if rng is not None else make_rng()
    pts = []
    for phi in phis:
        s = (fixed, MeasurementSetting("B", phi)) if fixed.site == "A" else (MeasurementSetting("A", phi), fixed)
        pts.append((float(phi), exp.correlation(s, n_samples, rng, mode)))
    vals = [e.value for _, e in pts]
    return FringeScan(fixed, tuple(pts), (max(vals) - min(vals)) / 2.0)


DEFAULT_CHSH_ANGLES = (0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4)


def chsh(
    state: BipartiteState,
    angles: Sequence[float] = DEFAULT_CHSH_ANGLES,
    n_samples: int = 100_000,
    filters=None,
    rng: np.random.Generator | None = None,
    mode: str = "sample",
) -> ChshResult:
    """``S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')|`` with ``angles = (a, a', b, b')``.

    One filter object serves all four setting pairs.
    """
    a, a2, b, b2 = (float(x) for x in angles)
    pairs = ((a, b), (a, b2), (a2, b), (a2, b2))
    if len({(canonical_phase(x), canonical_phase(y)) for x, y in pairs}) != 4:
        raise ValueError("the four setting pairs must be distinct")
    exp = Experiment(state, filters)
    rng = rng if rng is not None else make_rng()
    cs = tuple(exp.correlation(settings_pair(x, y), n_samples, rng, mode) for x, y in pairs)
    s = abs(cs[0].value - cs[1].value + cs[2].value + cs[3].value)
    se = math.sqrt(sum(c.standard_error**2 for c in cs))
    return ChshResult((a, a2, b, b2), pairs, cs, s, se)


def write_correlations_csv(path: str | Path, rows) -> None:
    """Rows of ``(phi_a, phi_b, CorrelationEstimate)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phi_a", "phi_b", "E", "stderr", "n_used", "n_discarded"])
        for pa, pb, est in rows:
            w.writerow([repr(float(pa)), repr(float(pb)), repr(est.value), repr(est.standard_error), est.n_used, est.n_discarded])


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
