"""Macro-macro entanglement schemes and the orthogonality filter.

(a) entanglement swapping: two micro-macro states, Bell projection of the two
micro photons; (b) double amplification: both photons of one pair amplified.
"""

from __future__ import annotations

import enum
import inspect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnresolvableOutcome
from .fock import (
    DEFAULT_CUTOFF,
    BipartiteState,
    GainParams,
    Mixture,
    ModeTensor,
    _cross_gram,
    as_gain,
    fidelity,
    fock_state,
    partial_trace_bs_tap,
    qiopa_unitary,
    rotate_basis,
    schmidt_norm_and_normalize,
    tap_kraus,
    tap_probabilities,
)
from .macrostates import MacroBranch, build_macro_state, build_micro_macro

R2 = 2**-0.5


class BellOutcome(enum.Enum):
    PHI_PLUS = "phi-plus"
    PHI_MINUS = "phi-minus"
    PSI_PLUS = "psi-plus"
    PSI_MINUS = "psi-minus"

    @property
    def resolvable(self) -> bool:
        """Whether a 50/50 beamsplitter with two detectors singles this outcome out."""
        return self in (BellOutcome.PSI_PLUS, BellOutcome.PSI_MINUS)


def _bell(first: ModeTensor, perp: ModeTensor, which: BellOutcome) -> BipartiteState:
    # Phi: |x x> +- |y y>,  Psi: |x y> +- |y x>  with x the phi and y the phi_perp state
    sign = 1.0 if which in (BellOutcome.PHI_PLUS, BellOutcome.PSI_PLUS) else -1.0
    if which in (BellOutcome.PHI_PLUS, BellOutcome.PHI_MINUS):
        terms = ((R2, first, first), (sign * R2, perp, perp))
    else:
        terms = ((R2, first, perp), (sign * R2, perp, first))
    return BipartiteState(terms)


def micro_bell_state(which: BellOutcome, phase: float = 0.0, cutoff: int = 1) -> BipartiteState:
    return _bell(fock_state(1, 0, cutoff, phase), fock_state(0, 1, cutoff, phase), which)


def make_singlet(cutoff: int = 1) -> BipartiteState:
    """``2^-1/2 (|H>_A |V>_B - |V>_A |H>_B)`` in the H/V basis."""
    h, v = fock_state(1, 0, cutoff, None), fock_state(0, 1, cutoff, None)
    return BipartiteState(((R2, h, v), (-R2, v, h)))


def macro_bell_state(
    gain: GainParams | float,
    phase: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
    which: BellOutcome = BellOutcome.PSI_MINUS,
) -> BipartiteState:
    phi = build_macro_state(gain, phase, MacroBranch.PHI_PARALLEL, cutoff)
    perp = build_macro_state(gain, phase, MacroBranch.PHI_PERP, cutoff)
    return _bell(phi, perp, which)


@dataclass(frozen=True, eq=False)
class SwapResult:
    outcome: BellOutcome
    probability: float
    post_state: BipartiteState
    fidelity_vs_reference: float
    gain: float
    cutoff: int

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "probability": self.probability,
            "fidelity_vs_reference": self.fidelity_vs_reference,
            "gain": self.gain,
            "cutoff": self.cutoff,
            "norm_deficit": self.post_state.deficit,
        }


def project_micro_pair(
    left: BipartiteState, right: BipartiteState, bell: BipartiteState
) -> BipartiteState:
    """``(<bell|_{a,a'} (x) 1) (left (x) right)`` for states with micro site ``a``.

    Returns the unnormalized state on the two ``b`` sites; its squared norm is
    the outcome probability.
    """
    ov_l = _cross_gram(bell.site("a"), left.site("a"))  # <x_k|a_i>
    ov_r = _cross_gram(bell.site("b"), right.site("a"))  # <y_k|a'_j>
    c = bell.weights.conj()
    terms = []
    for i, (wi, _, bi) in enumerate(left.terms):
        for j, (wj, _, bj) in enumerate(right.terms):
            amp = wi * wj * np.sum(c * ov_l[:, i] * ov_r[:, j])
            if amp != 0:
                terms.append((amp, bi, bj))
    if not terms:
        zero = left.terms[0][2] * 0.0
        terms = [(0.0, zero, right.terms[0][2] * 0.0)]
    return BipartiteState(tuple(terms))


def entanglement_swap(
    gain: GainParams | float,
    phase: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
    outcome: BellOutcome = BellOutcome.PSI_MINUS,
    physical_bsm: bool = False,
) -> SwapResult:
    """Bell-project the micro photons of two micro-macro states onto ``outcome``.

    With ``physical_bsm`` only the two outcomes a beamsplitter analyzer can
    identify are allowed.
    """
    gain = as_gain(gain)
    if physical_bsm and not outcome.resolvable:
        raise UnresolvableOutcome(f"{outcome.value} is not resolved by a beamsplitter Bell analyzer")
    sigma = build_micro_macro(gain, phase, cutoff, micro_cutoff=1)
    bell = micro_bell_state(outcome, phase, cutoff=1)
    raw = project_micro_pair(sigma, sigma, bell)
    prob = raw.norm_squared() / sigma.norm_squared() ** 2
    post = schmidt_norm_and_normalize(raw)
    ref = macro_bell_state(gain, phase, cutoff, outcome)
    return SwapResult(outcome, float(prob), post, fidelity(post, ref), gain.g, cutoff)


def swap_outcome_probabilities(gain, phase=0.0, cutoff=DEFAULT_CUTOFF) -> dict[BellOutcome, float]:
    return {o: entanglement_swap(gain, phase, cutoff, o).probability for o in BellOutcome}


def double_amplify(
    gain_a: GainParams | float,
    gain_b: GainParams | float,
    phase: float = 0.0,
    cutoff: int = DEFAULT_CUTOFF,
) -> BipartiteState:
    """Amplify the micro side of the micro-macro state (whose macro side has ``gain_b``)."""
    sigma = build_micro_macro(gain_b, phase, cutoff)
    return schmidt_norm_and_normalize(sigma.map_site("a", lambda t: qiopa_unitary(t, gain_a, phase)))


def macro_macro_singlet(gain_a, gain_b, phase: float = 0.0, cutoff: int = DEFAULT_CUTOFF) -> BipartiteState:
    """Directly built ``2^-1/2 (|Phi^phi>_A |Phi^phi_perp>_B - |Phi^phi_perp>_A |Phi^phi>_B)``."""
    pa = build_macro_state(gain_a, phase, MacroBranch.PHI_PARALLEL, cutoff)
    qa = build_macro_state(gain_a, phase, MacroBranch.PHI_PERP, cutoff)
    pb = build_macro_state(gain_b, phase, MacroBranch.PHI_PARALLEL, cutoff)
    qb = build_macro_state(gain_b, phase, MacroBranch.PHI_PERP, cutoff)
    return BipartiteState(((R2, pa, qb), (-R2, qa, pb)))


# -- orthogonality filter -----------------------------------------------------


def orthogonality_program(k: int) -> Callable[[int, int], bool]:
    """Accept iff the tapped counts differ by at least ``k``."""

    def program(m: int, n: int) -> bool:
        return abs(m - n) >= k

    program.__name__ = f"orthogonality_k{k}"
    return program


@dataclass(frozen=True)
class OFilterConfig:
    """Tap reflectivity, threshold, counting basis and decision program.

    ``program`` sees only the two tapped counts; it is checked at construction
    to take exactly two arguments, so it cannot receive measurement settings.
    """

    reflectivity: float = 0.1
    threshold: int = 0
    basis_phase: float = 0.0
    program: Callable[[int, int], bool] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.reflectivity < 1.0:
            raise ValueError(f"reflectivity must lie in [0, 1), got {self.reflectivity}")
        if int(self.threshold) != self.threshold or self.threshold < 0:
            raise ValueError(f"threshold must be a non-negative integer, got {self.threshold}")
        prog = self.program or orthogonality_program(int(self.threshold))
        params = inspect.signature(prog).parameters.values()
        positional = [p for p in params if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)]
        if len(positional) != 2 or any(p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD) for p in params):
            raise TypeError("filter program must take exactly the two tapped counts (m, n)")
        object.__setattr__(self, "program", prog)

    def decide(self, m: int, n: int) -> bool:
        return bool(self.program(int(m), int(n)))

    def to_dict(self) -> dict:
        return {
            "reflectivity": self.reflectivity,
            "threshold": self.threshold,
            "basis_phase": self.basis_phase,
            "program": getattr(self.program, "__name__", "custom"),
        }


@dataclass(frozen=True, eq=False)
class FilterResult:
    accepted: bool
    post_state: ModeTensor | Mixture | None
    acceptance_probability: float
    counts: tuple[int, int] | None = None


def o_filter(
    state: ModeTensor,
    config: OFilterConfig,
    rng: np.random.Generator | None = None,
    mode: str = "enumerate",
) -> FilterResult:
    """Tap the beam, count the tapped photons in the filter basis and gate the rest.

    ``mode="enumerate"`` returns the exact acceptance probability and, as
    ``post_state``, the accepted transmitted ensemble. ``mode="sample"`` draws
    one tap outcome from ``rng`` and returns the conditional transmitted tensor
    (``None`` when rejected).
    """
    psi = rotate_basis(state, config.basis_phase)
    norm = psi.norm_squared()
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        # only the drawn branch is materialized
        probs = tap_probabilities(psi.amps[None], config.reflectivity)[0] if config.reflectivity > 0 else None
        if probs is None:
            key = (0, 0)
            p_acc = 1.0 if config.decide(0, 0) else 0.0
        else:
            mask = np.array([[config.decide(m, n) for n in range(probs.shape[1])] for m in range(probs.shape[0])])
            p_acc = float(probs[mask].sum() / norm)
            flat = rng.choice(probs.size, p=probs.ravel() / probs.sum())
            key = tuple(int(v) for v in np.unravel_index(flat, probs.shape))
        ok = config.decide(*key)
        post = None
        if ok:
            amps = psi.amps if probs is None else tap_kraus(psi.amps, config.reflectivity, *key)
            post = psi.with_amps(amps).normalized()
        return FilterResult(ok, post, p_acc, key)
    if mode != "enumerate":
        raise ValueError(f"mode must be 'enumerate' or 'sample', got {mode!r}")
    tap = partial_trace_bs_tap(psi, config.reflectivity)
    accepted = {k: t for k, t in tap.branches.items() if config.decide(*k)}
    p_acc = float(sum(tap.counts[k] for k in accepted) / norm)
    if not accepted:
        return FilterResult(False, None, 0.0)
    comps = tuple((tap.counts[k] / norm / p_acc, t.normalized()) for k, t in accepted.items() if tap.counts[k] > 0)
    return FilterResult(True, Mixture(comps), p_acc)


def filter_site(state: BipartiteState, which: str, config: OFilterConfig) -> tuple[float, list[tuple[tuple[int, int], BipartiteState]]]:
    """Enumerate accepted tap branches when filtering one site of a bipartite state.

    Returns the acceptance probability and the accepted (unnormalized)
    conditional bipartite branches.
    """
    tensors = [rotate_basis(t, config.basis_phase) for t in state.site(which)]
    taps = [partial_trace_bs_tap(t, config.reflectivity) for t in tensors]
    keys = sorted(set().union(*(tp.branches for tp in taps)))
    branches = []
    total = 0.0
    norm = state.norm_squared()
    for key in keys:
        if not config.decide(*key):
            continue
        new = []
        for (w, a, b), tp, t in zip(state.terms, taps, tensors):
            kt = tp.branches.get(key, t * 0.0)
            new.append((w, kt, b) if which == "a" else (w, a, kt))
        br = BipartiteState(tuple(new))
        p = br.norm_squared()
        if p > 0:
            total += p
            branches.append((key, br))
    return total / norm, branches
