"""Truncated Fock space for one spatial mode carrying two polarization modes.

A :class:`ModeTensor` stores amplitudes ``amps[n1, n2]`` where ``n1`` counts
photons in the first and ``n2`` in the second polarization mode of a basis
identified by ``phase``:

* ``phase is None``: the H/V basis.
* ``phase = phi``: the equatorial basis with creation operators

  ``a1+ = (e^{-i phi/2} aH+ + e^{+i phi/2} aV+) / sqrt(2)``
  ``a2+ = (-e^{-i phi/2} aH+ + e^{+i phi/2} aV+) / sqrt(2)``

  i.e. the usual ``pi_phi`` / ``pi_phi_perp`` modes up to one phase per mode.
  With these phases the amplifier Hamiltonian ``aH+ aV+ + h.c.`` reads
  ``(a1+^2 - a2+^2)/2 + h.c.`` in *every* equatorial basis, so the amplified
  states have real, phi-independent Fock amplitudes.

Amplifier convention (the only place it is fixed): in every equatorial basis
the amplifier applies ``S(-g)`` to mode 1 and ``S(+g)`` to mode 2, with
``S(z) = exp((z a+^2 - z* a^2)/2)``. This makes ``U |1, 0>`` reproduce the
macro-state coefficients ``gamma_ij`` with the ``(-Gamma/2)^i`` factor on the
injected mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Literal

import numpy as np
from scipy.linalg import eigh, expm, schur
from scipy.special import binom

from .errors import CutoffMismatch, CutoffOverflow, ZeroNorm

DEFAULT_CUTOFF = 40
STRICT_DEFICIT = 1e-6
AMPLIFIER_SIGN = -1.0

TWO_PI = 2.0 * math.pi


def canonical_phase(phase: float | None) -> float | None:
    if phase is None:
        return None
    p = float(phase) % TWO_PI
    # 2*pi - tiny rounds back to 0 only when it is numerically 2*pi
    return 0.0 if math.isclose(p, TWO_PI, rel_tol=0.0, abs_tol=1e-14) else p


def check_cutoff(cutoff: int) -> int:
    if int(cutoff) != cutoff or cutoff < 1:
        raise ValueError(f"cutoff must be an integer >= 1, got {cutoff!r}")
    return int(cutoff)


@dataclass(frozen=True)
class GainParams:
    """Parametric gain ``g`` with ``C = cosh g``, ``S = sinh g``, ``Gamma = S/C``."""

    g: float

    def __post_init__(self):
        if not np.isfinite(self.g) or self.g < 0:
            raise ValueError(f"gain must be a finite non-negative number, got {self.g!r}")
        object.__setattr__(self, "g", float(self.g))

    @property
    def C(self) -> float:
        return math.cosh(self.g)

    @property
    def S(self) -> float:
        return math.sinh(self.g)

    @property
    def Gamma(self) -> float:
        return math.tanh(self.g)


def as_gain(gain: GainParams | float) -> GainParams:
    return gain if isinstance(gain, GainParams) else GainParams(float(gain))


@dataclass(frozen=True, eq=False)
class ModeTensor:
    """Two-polarization Fock amplitudes of one spatial mode.

    ``deficit`` accumulates the probability mass lost to truncation by the
    operations that produced this tensor.
    """

    amps: np.ndarray
    phase: float | None = 0.0
    deficit: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex)
        if amps.ndim != 2 or amps.shape[0] != amps.shape[1] or amps.shape[0] < 2:
            raise ValueError(f"amps must be a square 2-D array with side >= 2, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amps contain non-finite values")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)
        object.__setattr__(self, "phase", canonical_phase(self.phase))
        object.__setattr__(self, "deficit", float(self.deficit))

    @property
    def cutoff(self) -> int:
        return self.amps.shape[0] - 1

    def norm_squared(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def with_amps(self, amps: np.ndarray, extra_deficit: float = 0.0, phase=...) -> "ModeTensor":
        return ModeTensor(amps, self.phase if phase is ... else phase, self.deficit + max(extra_deficit, 0.0))

    def normalized(self) -> "ModeTensor":
        n = self.norm_squared()
        if n <= 0:
            raise ZeroNorm("cannot normalize a zero tensor")
        return self.with_amps(self.amps / math.sqrt(n))

    def __mul__(self, c: complex) -> "ModeTensor":
        return self.with_amps(self.amps * c)

    __rmul__ = __mul__

    def __add__(self, other: "ModeTensor") -> "ModeTensor":
        other = _aligned(self, other)
        return ModeTensor(self.amps + other.amps, self.phase, max(self.deficit, other.deficit))

    def __sub__(self, other: "ModeTensor") -> "ModeTensor":
        return self + other * -1.0

    def __repr__(self):
        return f"ModeTensor(cutoff={self.cutoff}, phase={self.phase}, norm2={self.norm_squared():.6g})"


def fock_state(n1: int, n2: int, cutoff: int = DEFAULT_CUTOFF, phase: float | None = 0.0) -> ModeTensor:
    cutoff = check_cutoff(cutoff)
    if not (0 <= n1 <= cutoff and 0 <= n2 <= cutoff):
        raise CutoffOverflow(f"|{n1},{n2}> does not fit below cutoff {cutoff}")
    amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    amps[n1, n2] = 1.0
    return ModeTensor(amps, phase)


def vacuum(cutoff: int = DEFAULT_CUTOFF, phase: float | None = 0.0) -> ModeTensor:
    return fock_state(0, 0, cutoff, phase)


def apply_ladder(
    state: ModeTensor,
    mode: Literal[1, 2],
    kind: Literal["create", "annihilate"],
    strict: bool = True,
) -> ModeTensor:
    """Apply ``a+`` or ``a`` of polarization mode 1 or 2.

    Creation on a tensor with support at ``n_max`` raises :class:`CutoffOverflow`
    in strict mode; otherwise the overflowing amplitude is dropped and counted
    in ``deficit``.
    """
    if mode not in (1, 2):
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")
    amps = state.amps if mode == 1 else state.amps.T
    n = state.cutoff
    out = np.zeros_like(amps)
    lost = 0.0
    if kind == "create":
        top = amps[n]
        lost = float(np.sum(np.abs(top) ** 2)) * (n + 1)
        if lost > 0 and strict:
            raise CutoffOverflow(f"creation on mode {mode} would populate n = {n + 1} > n_max = {n}")
        out[1:] = np.sqrt(np.arange(1, n + 1))[:, None] * amps[:-1]
    elif kind == "annihilate":
        out[:-1] = np.sqrt(np.arange(1, n + 1))[:, None] * amps[1:]
    else:
        raise ValueError(f"kind must be 'create' or 'annihilate', got {kind!r}")
    if mode == 2:
        out = out.T
    return state.with_amps(out, lost)


def number_expectations(state: ModeTensor) -> tuple[float, float]:
    """Unnormalized ``(<n1>, <n2>)`` by direct Fock sum."""
    p = state.probabilities()
    n = np.arange(state.cutoff + 1)
    return float(n @ p.sum(axis=1)), float(n @ p.sum(axis=0))


# -- basis rotations ---------------------------------------------------------


def mode_matrix(phase: float | None) -> np.ndarray:
    """Rows are the two mode vectors of the basis, in (H, V) components."""
    if phase is None:
        return np.eye(2, dtype=complex)
    e = np.exp(0.5j * phase)
    return np.array([[1 / e, e], [-1 / e, e]], dtype=complex) / math.sqrt(2.0)


@lru_cache(maxsize=512)
def _transfer_blocks(from_phase, to_phase, cutoff: int):
    # a+_{from,i} = sum_j U_ij a+_{to,j}; amplitudes map through exp(sum L_kl x+_k x_l), e^L = U^T
    U = mode_matrix(from_phase) @ mode_matrix(to_phase).conj().T
    T, Z = schur(U.T, output="complex")
    L = Z @ np.diag(1j * np.angle(np.diag(T))) @ Z.conj().T
    blocks = []
    for N in range(2 * cutoff + 1):
        m = np.arange(N + 1)
        G = np.zeros((N + 1, N + 1), dtype=complex)
        G[m, m] = L[0, 0] * m + L[1, 1] * (N - m)
        k = m[:-1]
        hop = np.sqrt((k + 1) * (N - k))
        G[k + 1, k] = L[0, 1] * hop
        G[k, k + 1] = L[1, 0] * hop
        w, V = eigh(-1j * G)
        B = (V * np.exp(1j * w)) @ V.conj().T
        lo, hi = max(0, N - cutoff), min(N, cutoff)
        idx = np.arange(lo, hi + 1)
        blocks.append((idx, N - idx, np.ascontiguousarray(B[lo : hi + 1, lo : hi + 1].T)))
    return blocks


def rotate_amps(amps: np.ndarray, from_phase, to_phase) -> np.ndarray:
    """Re-express amplitudes (optionally batched over leading axes) in another basis."""
    from_phase, to_phase = canonical_phase(from_phase), canonical_phase(to_phase)
    if from_phase == to_phase:
        return np.array(amps, dtype=complex)
    cutoff = amps.shape[-1] - 1
    out = np.zeros(amps.shape, dtype=complex)
    for rows, cols, BT in _transfer_blocks(from_phase, to_phase, cutoff):
        out[..., rows, cols] = amps[..., rows, cols] @ BT
    return out


def rotate_basis(state: ModeTensor, to_phase: float | None, from_phase=...) -> ModeTensor:
    """Express ``state`` in the basis ``to_phase``.

    ``from_phase`` reinterprets the stored amplitudes as belonging to that basis
    instead of the tensor's own tag. Photons pushed above ``n_max`` in either
    output mode are dropped and counted in ``deficit``.
    """
    src = state.phase if from_phase is ... else canonical_phase(from_phase)
    dst = canonical_phase(to_phase)
    if src == dst:
        return ModeTensor(state.amps, dst, state.deficit)
    out = rotate_amps(state.amps, src, dst)
    lost = state.norm_squared() - float(np.vdot(out, out).real)
    return ModeTensor(out, dst, state.deficit + max(lost, 0.0))


def complete_block_mask(cutoff: int) -> np.ndarray:
    """Entries ``p + q <= cutoff``: the total-photon blocks a basis rotation maps exactly."""
    n = np.arange(cutoff + 1)
    return np.add.outer(n, n) <= cutoff


def _aligned(ref: ModeTensor, other: ModeTensor) -> ModeTensor:
    if ref.cutoff != other.cutoff:
        raise CutoffMismatch(f"cutoffs differ: {ref.cutoff} vs {other.cutoff}")
    return other if other.phase == ref.phase else rotate_basis(other, ref.phase)


# -- amplifier ---------------------------------------------------------------


def _squeeze_block(zeta: complex, dim: int) -> np.ndarray:
    # the generator only couples equal parities: exponentiate the two halves separately
    out = np.zeros((dim, dim), dtype=complex)
    for start in (0, 1):
        idx = np.arange(start, dim, 2)
        n = idx[:-1]
        coup = np.sqrt((n + 1.0) * (n + 2.0))
        gen = np.diag(0.5 * zeta * coup, -1) - np.diag(0.5 * np.conj(zeta) * coup, 1)
        out[np.ix_(idx, idx)] = expm(gen)
    return out


@lru_cache(maxsize=256)
def squeeze_matrix(zeta: complex, cutoff: int, tol: float = 1e-14) -> np.ndarray:
    """Fock matrix of ``exp((zeta a+^2 - zeta* a^2)/2)`` restricted to ``n <= cutoff``.

    The exponential is taken on a padded space; the pad doubles until the
    retained block changes by less than ``tol`` or stops improving (round-off
    floor).
    """
    pad = max(40, cutoff)
    prev = _squeeze_block(zeta, cutoff + 1 + pad)[: cutoff + 1, : cutoff + 1]
    last = np.inf
    while True:
        pad *= 2
        cur = _squeeze_block(zeta, cutoff + 1 + pad)[: cutoff + 1, : cutoff + 1]
        change = np.max(np.abs(cur - prev))
        if change < tol or change > 0.5 * last or pad > 4096:
            cur.setflags(write=False)
            return cur
        prev, last = cur, change


def _check_deficit(deficit: float, strict: bool, what: str):
    if deficit > STRICT_DEFICIT:
        msg = f"{what}: truncation deficit {deficit:.3g} exceeds {STRICT_DEFICIT:g}"
        if strict:
            raise CutoffOverflow(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


def qiopa_unitary(
    state: ModeTensor,
    gain: GainParams | float,
    phase: float = 0.0,
    strict: bool = False,
) -> ModeTensor:
    """Amplify ``state`` with the phase-covariant parametric amplifier.

    The state is first expressed in the equatorial basis ``phase``; the result
    is tagged with that basis. Because the amplifier is phase covariant the
    physical output does not depend on ``phase``.
    """
    gain = as_gain(gain)
    if phase is None:
        raise ValueError("the amplifier is applied in an equatorial basis; phase must be a float")
    psi = rotate_basis(state, phase)
    if gain.g == 0:
        return psi
    n = psi.cutoff
    s1 = squeeze_matrix(complex(AMPLIFIER_SIGN * gain.g), n)
    s2 = squeeze_matrix(complex(-AMPLIFIER_SIGN * gain.g), n)
    out = s1 @ psi.amps @ s2.T
    lost = psi.norm_squared() - float(np.vdot(out, out).real)
    res = psi.with_amps(out, lost)
    _check_deficit(res.deficit, strict, "qiopa_unitary")
    return res


def top_mass(state: ModeTensor, levels: int = 2) -> float:
    """Probability held in the top ``levels`` Fock levels of either mode."""
    p = state.probabilities()
    n = state.cutoff
    mask = np.zeros_like(p, dtype=bool)
    mask[n - levels + 1 :, :] = True
    mask[:, n - levels + 1 :] = True
    return float(p[mask].sum())


# -- inner products ----------------------------------------------------------


def overlap(a, b) -> complex:
    """Hermitian inner product ``<a|b>`` of two ModeTensors or two BipartiteStates."""
    if isinstance(a, ModeTensor) and isinstance(b, ModeTensor):
        b = _aligned(a, b)
        return complex(np.vdot(a.amps, b.amps))
    if isinstance(a, BipartiteState) and isinstance(b, BipartiteState):
        wa = np.array([t[0] for t in a.terms])
        wb = np.array([t[0] for t in b.terms])
        ga = _cross_gram([t[1] for t in a.terms], [t[1] for t in b.terms])
        gb = _cross_gram([t[2] for t in a.terms], [t[2] for t in b.terms])
        return complex(wa.conj() @ (ga * gb) @ wb)
    raise TypeError(f"cannot take overlap of {type(a).__name__} and {type(b).__name__}")


def fidelity(a, b) -> float:
    """``|<a|b>|^2 / (<a|a><b|b>)``; insensitive to global phase and to truncation loss."""
    na, nb = overlap(a, a).real, overlap(b, b).real
    if na <= 0 or nb <= 0:
        raise ZeroNorm("fidelity with a zero state")
    return float(abs(overlap(a, b)) ** 2 / (na * nb))


def _cross_gram(xs: list[ModeTensor], ys: list[ModeTensor]) -> np.ndarray:
    ref = xs[0]
    X = np.stack([_aligned(ref, x).amps.ravel() for x in xs])
    Y = np.stack([_aligned(ref, y).amps.ravel() for y in ys])
    return X.conj() @ Y.T


# -- bipartite Schmidt-form states -------------------------------------------


@dataclass(frozen=True, eq=False)
class BipartiteState:
    """``sum_k w_k |site_a_k> (x) |site_b_k>`` kept as a short list of products."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((complex(w), a, b) for w, a, b in self.terms)
        if not terms:
            raise ValueError("a BipartiteState needs at least one term")
        for _, a, b in terms:
            if not (isinstance(a, ModeTensor) and isinstance(b, ModeTensor)):
                raise TypeError("terms must hold ModeTensor site states")
            if a.cutoff != terms[0][1].cutoff or b.cutoff != terms[0][2].cutoff:
                raise CutoffMismatch("all terms must share per-site cutoffs")
        object.__setattr__(self, "terms", terms)

    @property
    def weights(self) -> np.ndarray:
        return np.array([t[0] for t in self.terms])

    def site(self, which: Literal["a", "b"]) -> list[ModeTensor]:
        return [t[1] if which == "a" else t[2] for t in self.terms]

    def gram(self, which: Literal["a", "b"]) -> np.ndarray:
        s = self.site(which)
        return _cross_gram(s, s)

    def norm_squared(self) -> float:
        w = self.weights
        return float((w.conj() @ (self.gram("a") * self.gram("b")) @ w).real)

    @property
    def deficit(self) -> float:
        return max(max(a.deficit, b.deficit) for _, a, b in self.terms)

    def map_site(self, which: Literal["a", "b"], fn) -> "BipartiteState":
        if which == "a":
            return BipartiteState(tuple((w, fn(a), b) for w, a, b in self.terms))
        return BipartiteState(tuple((w, a, fn(b)) for w, a, b in self.terms))

    def swap_sites(self) -> "BipartiteState":
        return BipartiteState(tuple((w, b, a) for w, a, b in self.terms))

    def scaled(self, c: complex) -> "BipartiteState":
        return BipartiteState(tuple((w * c, a, b) for w, a, b in self.terms))

    def __repr__(self):
        return f"BipartiteState(terms={len(self.terms)}, norm2={self.norm_squared():.6g})"


def _proportional(x: ModeTensor, y: ModeTensor, tol: float = 1e-12) -> complex | None:
    """Return c with y = c x, or None."""
    y = _aligned(x, y)
    nx = x.norm_squared()
    if nx == 0:
        return None
    c = np.vdot(x.amps, y.amps) / nx
    resid = y.amps - c * x.amps
    if np.vdot(resid, resid).real <= tol**2 * max(y.norm_squared(), 1e-300):
        return complex(c)
    return None


def _merge_terms(terms: list) -> list:
    merged = True
    while merged and len(terms) > 1:
        merged = False
        for i in range(len(terms)):
            for j in range(i + 1, len(terms)):
                wi, ai, bi = terms[i]
                wj, aj, bj = terms[j]
                c = _proportional(ai, aj)
                if c is not None:
                    new = (1.0, ai, bi * wi + _aligned(bi, bj) * (wj * c))
                else:
                    c = _proportional(bi, bj)
                    if c is None:
                        continue
                    new = (1.0, ai * wi + _aligned(ai, aj) * (wj * c), bi)
                terms = [t for k, t in enumerate(terms) if k not in (i, j)] + [new]
                merged = True
                break
            if merged:
                break
    return terms


def schmidt_norm_and_normalize(state: BipartiteState, merge: bool = False) -> BipartiteState:
    """Rescale to unit norm; optionally fold terms whose site tensors are proportional."""
    terms = list(state.terms)
    if merge:
        terms = _merge_terms(terms)
    out = BipartiteState(tuple(terms))
    n2 = out.norm_squared()
    if not n2 > 1e-300:
        raise ZeroNorm("bipartite state has zero norm")
    return out.scaled(1.0 / math.sqrt(n2))


def dense_joint(state: BipartiteState) -> np.ndarray:
    """Materialize the four-index joint amplitude tensor (test oracle; small cutoffs only).

    Site tensors are aligned to the first term's basis per site.
    """
    ref_a, ref_b = state.terms[0][1], state.terms[0][2]
    if ref_a.cutoff > 8 or ref_b.cutoff > 8:
        raise ValueError("dense_joint is meant for cutoff <= 8")
    out = 0
    for w, a, b in state.terms:
        out = out + w * np.einsum("ij,kl->ijkl", _aligned(ref_a, a).amps, _aligned(ref_b, b).amps)
    return out


# -- beamsplitter tap --------------------------------------------------------


def _tap_coeffs(R: float, cutoff: int) -> np.ndarray:
    """``k[m, p] = sqrt(C(p, m) R^m T^(p-m))``: amplitude for p photons to leave m in the tap."""
    T = 1.0 - R
    p = np.arange(cutoff + 1)
    m = p[:, None]
    with np.errstate(invalid="ignore"):
        val = binom(p[None, :], m) * np.power(R, m) * np.power(T, np.maximum(p[None, :] - m, 0))
    val = np.where(p[None, :] >= m, val, 0.0)
    return np.sqrt(val)


def tap_kraus(amps: np.ndarray, R: float, m: int, n: int) -> np.ndarray:
    """Transmitted amplitudes given ``m`` and ``n`` tapped photons (batched over leading axes)."""
    cutoff = amps.shape[-1] - 1
    k = _tap_coeffs(R, cutoff)
    out = np.zeros(amps.shape, dtype=complex)
    w = k[m][:, None] * k[n][None, :]
    out[..., : cutoff + 1 - m, : cutoff + 1 - n] = (amps * w)[..., m:, n:]
    return out


def tap_probabilities(amps: np.ndarray, R: float) -> np.ndarray:
    """``P[m, n]`` of tapped counts for (batched) amplitudes; diagonal in the Kraus index."""
    cutoff = amps.shape[-1] - 1
    k2 = _tap_coeffs(R, cutoff) ** 2
    p = np.abs(amps) ** 2
    return np.einsum("mp,...pq,nq->...mn", k2, p, k2)


@dataclass(frozen=True, eq=False)
class Mixture:
    """Incoherent ensemble of normalized pure tensors with probabilities."""

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple((float(p), t) for p, t in self.components))

    @property
    def total(self) -> float:
        return sum(p for p, _ in self.components)

    def as_pure(self) -> ModeTensor:
        if len(self.components) != 1:
            raise ValueError(f"mixture has {len(self.components)} components")
        return self.components[0][1]

    def number_expectations(self) -> tuple[float, float]:
        n1 = n2 = 0.0
        for p, t in self.components:
            a, b = number_expectations(t)
            n1 += p * a
            n2 += p * b
        return n1, n2


@dataclass(frozen=True, eq=False)
class BeamTap:
    """Outcome of a low-reflectivity tap.

    ``counts[m, n]`` is the probability of ``m`` and ``n`` reflected photons in
    the two polarization modes; ``branches[(m, n)]`` the matching unnormalized
    transmitted tensor (its squared norm equals ``counts[m, n]``).
    """

    reflectivity: float
    counts: np.ndarray
    branches: dict = field(repr=False)

    def conditional(self, m: int, n: int) -> ModeTensor:
        return self.branches[(m, n)].normalized()

    @property
    def transmitted(self) -> Mixture:
        """Reduced transmitted state as an ensemble over tap outcomes."""
        return Mixture(tuple((self.counts[k], t.normalized()) for k, t in self.branches.items()))


def partial_trace_bs_tap(state: ModeTensor, reflectivity: float, min_prob: float = 0.0) -> BeamTap:
    """Split ``state`` on a beamsplitter of reflectivity ``R`` and count the reflected photons.

    Counts are taken in the tensor's own basis (the tap is polarization
    insensitive, so rotate first to count in another basis).
    """
    R = float(reflectivity)
    if not 0.0 <= R <= 1.0:
        raise ValueError(f"reflectivity must lie in [0, 1], got {R}")
    if R == 0.0:
        counts = np.zeros((state.cutoff + 1,) * 2)
        counts[0, 0] = state.norm_squared()
        return BeamTap(R, counts, {(0, 0): state})
    counts = tap_probabilities(state.amps, R)
    branches = {}
    for m, n in zip(*np.nonzero(counts > min_prob)):
        br = state.with_amps(tap_kraus(state.amps, R, m, n))
        if br.norm_squared() == 0.0:  # probability underflowed in the Kraus amplitudes
            counts[m, n] = 0.0
            continue
        branches[(int(m), int(n))] = br
    return BeamTap(R, counts, branches)


def stack_amps(tensors: Iterable[ModeTensor], phase=...) -> np.ndarray:
    tensors = list(tensors)
    target = tensors[0].phase if phase is ... else canonical_phase(phase)
    return np.stack([rotate_basis(t, target).amps for t in tensors])
