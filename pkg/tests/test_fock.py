import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb, factorial

from qiopa.errors import CutoffMismatch, CutoffOverflow, ZeroNorm
from qiopa.fock import (
    BipartiteState,
    ModeTensor,
    apply_ladder,
    complete_block_mask,
    dense_joint,
    fidelity,
    fock_state,
    mode_matrix,
    number_expectations,
    overlap,
    partial_trace_bs_tap,
    qiopa_unitary,
    rotate_basis,
    schmidt_norm_and_normalize,
    squeeze_matrix,
    tap_probabilities,
    vacuum,
)

phases = st.floats(0.0, 2 * math.pi, allow_nan=False)
maybe_phase = st.one_of(st.none(), phases)


def random_tensor(seed: int, cutoff: int, phase, block_limit: int | None = None) -> ModeTensor:
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=(cutoff + 1, cutoff + 1)) + 1j * rng.normal(size=(cutoff + 1, cutoff + 1))
    if block_limit is not None:
        n = np.arange(cutoff + 1)
        amps[np.add.outer(n, n) > block_limit] = 0
    return ModeTensor(amps / np.linalg.norm(amps), phase)


def substitution_oracle(amps: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Rotate by expanding each (a1+)^p (a2+)^q with the binomial theorem."""
    dim = amps.shape[0]
    out = np.zeros((2 * dim, 2 * dim), complex)
    for p in range(dim):
        for q in range(dim):
            c = amps[p, q] / math.sqrt(factorial(p) * factorial(q))
            if c == 0:
                continue
            # (U00 x + U01 y)^p (U10 x + U11 y)^q
            for k in range(p + 1):
                for l in range(q + 1):
                    coef = comb(p, k) * comb(q, l) * U[0, 0] ** k * U[0, 1] ** (p - k) * U[1, 0] ** l * U[1, 1] ** (q - l)
                    out[k + l, p + q - k - l] += c * coef
    r = np.arange(2 * dim)
    out *= np.sqrt(np.outer(factorial(r), factorial(r)))
    return out[:dim, :dim]


def test_modetensor_is_read_only():
    t = fock_state(1, 0, 3)
    with pytest.raises(ValueError):
        t.amps[0, 0] = 1.0


def test_adding_mismatched_cutoffs_fails():
    with pytest.raises(CutoffMismatch):
        fock_state(1, 0, 3) + fock_state(1, 0, 4)


def test_fock_state_bounds():
    with pytest.raises(CutoffOverflow):
        fock_state(5, 0, 4)
    assert vacuum(3).amps[0, 0] == 1


@given(st.integers(0, 6), st.integers(0, 6))
def test_ladder_matrix_elements(n1, n2):
    s = fock_state(n1, n2, 8)
    up = apply_ladder(s, 1, "create")
    assert up.amps[n1 + 1, n2] == pytest.approx(math.sqrt(n1 + 1))
    down = apply_ladder(s, 2, "annihilate")
    assert down.norm_squared() == pytest.approx(n2)


def test_ladder_overflow_is_reported():
    with pytest.raises(CutoffOverflow):
        apply_ladder(fock_state(3, 0, 3), 1, "create", strict=True)


def test_mode_matrix_is_unitary_and_matches_convention():
    for phase in (None, 0.0, 1.3):
        M = mode_matrix(phase)
        assert np.allclose(M @ M.conj().T, np.eye(2))
    phi = 0.8
    e = np.exp(1j * phi / 2)
    assert np.allclose(mode_matrix(phi), np.array([[e.conjugate(), e], [-e.conjugate(), e]]) / math.sqrt(2))


@settings(max_examples=25)
@given(st.integers(0, 10_000), maybe_phase, maybe_phase)
def test_rotation_matches_binomial_oracle(seed, a, b):
    t = random_tensor(seed, 5, a)
    U = mode_matrix(a) @ mode_matrix(b).conj().T
    expected = substitution_oracle(t.amps, U)
    got = rotate_basis(t, b).amps
    mask = complete_block_mask(5)
    assert np.allclose(got[mask], expected[mask], atol=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 10_000), maybe_phase, maybe_phase, maybe_phase)
def test_rotation_composes_and_preserves_norm(seed, a, b, c):
    t = random_tensor(seed, 8, a, block_limit=8)
    direct = rotate_basis(t, c)
    chained = rotate_basis(rotate_basis(t, b), c)
    assert np.allclose(direct.amps, chained.amps, atol=1e-12)
    assert direct.norm_squared() == pytest.approx(1.0, abs=1e-12)


def test_single_photon_rotates_to_hv_components():
    phi = 0.9
    hv = rotate_basis(fock_state(1, 0, 1, phi), None).amps
    assert hv[1, 0] == pytest.approx(np.exp(-1j * phi / 2) / math.sqrt(2))
    assert hv[0, 1] == pytest.approx(np.exp(1j * phi / 2) / math.sqrt(2))


@given(st.floats(0.0, 1.2))
def test_squeezed_vacuum_amplitudes(r):
    # S(r)|0> = cosh(r)^-1/2 sum_n tanh(r)^n sqrt((2n)!)/(2^n n!) |2n>
    col = squeeze_matrix(complex(r), 40)[:, 0]
    n = np.arange(10)
    expected = np.tanh(r) ** n * np.sqrt(factorial(2 * n)) / (2.0**n * factorial(n)) / math.sqrt(math.cosh(r))
    assert np.allclose(col[0:20:2], expected, atol=1e-12)
    assert np.allclose(col[1::2], 0)


def test_squeeze_columns_are_unit_vectors_inside_box():
    S = squeeze_matrix(complex(0.6), 60)
    assert np.allclose(np.linalg.norm(S[:, :6], axis=0), 1.0, atol=1e-10)


@given(st.floats(0.0, 0.7))
def test_amplified_photon_number(g):
    out = qiopa_unitary(fock_state(1, 0, 60, 0.0), g)
    n1, n2 = number_expectations(out)
    s2 = math.sinh(g) ** 2
    assert n1 == pytest.approx(1 + 3 * s2, rel=1e-9)
    assert n2 == pytest.approx(s2, rel=1e-9)


def test_amplifier_phase_tag_and_identity_at_zero_gain():
    s = fock_state(1, 0, 4, 0.7)
    assert qiopa_unitary(s, 0.0, 0.7).amps.tobytes() == s.amps.tobytes()
    assert qiopa_unitary(s, 0.3, 2.0).phase == pytest.approx(2.0)
    with pytest.raises(ValueError):
        qiopa_unitary(s, 0.3, None)


def test_deficit_is_tracked_and_strict_raises():
    out = qiopa_unitary(fock_state(1, 0, 10, 0.0), 1.2)
    assert out.deficit > 1e-3
    with pytest.raises(CutoffOverflow):
        qiopa_unitary(fock_state(1, 0, 10, 0.0), 1.2, strict=True)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(0, 10_000), maybe_phase, maybe_phase)
def test_overlap_and_fidelity_properties(s1, s2, a, b):
    x = random_tensor(s1, 4, a, block_limit=4)
    y = random_tensor(s2, 4, b, block_limit=4)
    assert overlap(x, y) == pytest.approx(np.conj(overlap(y, x)), abs=1e-12)
    f = fidelity(x, y)
    assert -1e-12 <= f <= 1 + 1e-12
    assert fidelity(x, x) == pytest.approx(1.0)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_bipartite_overlap_matches_dense(seed):
    rng = np.random.default_rng(seed)
    mk = lambda s: random_tensor(int(s), 3, 0.0)
    a = BipartiteState(tuple((complex(*rng.normal(size=2)), mk(rng.integers(1e6)), mk(rng.integers(1e6))) for _ in range(3)))
    b = BipartiteState(tuple((complex(*rng.normal(size=2)), mk(rng.integers(1e6)), mk(rng.integers(1e6))) for _ in range(2)))
    assert overlap(a, b) == pytest.approx(np.vdot(dense_joint(a), dense_joint(b)))
    assert a.norm_squared() == pytest.approx(np.vdot(dense_joint(a), dense_joint(a)).real)


def test_normalize_rejects_zero_state():
    z = fock_state(1, 0, 2) * 0.0
    with pytest.raises(ZeroNorm):
        schmidt_norm_and_normalize(BipartiteState(((1.0, z, z),)))


def test_swap_sites_of_singlet_is_antisymmetric():
    h, v = fock_state(1, 0, 1, None), fock_state(0, 1, 1, None)
    s = BipartiteState(((1.0, h, v), (-1.0, v, h)))
    assert overlap(s.swap_sites(), s) == pytest.approx(-s.norm_squared())


@given(st.integers(0, 6), st.floats(0.0, 0.95))
def test_tap_on_fock_state_is_binomial(n, R):
    probs = partial_trace_bs_tap(fock_state(n, 0, 6), R).counts
    for m in range(n + 1):
        assert probs[m, 0] == pytest.approx(comb(n, m) * R**m * (1 - R) ** (n - m), abs=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.0, 0.9))
def test_tap_probabilities_sum_to_norm(seed, R):
    t = random_tensor(seed, 5, 0.0)
    assert tap_probabilities(t.amps[None], R).sum() == pytest.approx(t.norm_squared(), abs=1e-12)
    tap = partial_trace_bs_tap(t, R)
    assert tap.transmitted.total == pytest.approx(1.0, abs=1e-12)


def test_tap_without_reflection_returns_input():
    t = random_tensor(3, 4, 0.5)
    tap = partial_trace_bs_tap(t, 0.0)
    assert list(tap.branches) == [(0, 0)]
    assert np.array_equal(tap.branches[(0, 0)].amps, t.amps)
