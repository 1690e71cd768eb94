import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.special import eval_laguerre, factorial

from qiopa.errors import CutoffOverflow, EmptyGrid, UnsupportedInjection
from qiopa.fock import Mixture, fock_state, vacuum
from qiopa.wigner import (
    PREFACTOR,
    PhaseSpacePoint,
    SliceSpec,
    amplified_injection,
    characteristic_fn_oracle,
    displaced_parity,
    displacement_matrix,
    integrate_oracle,
    interference_term,
    negativity_report,
    points_on_root_locus,
    root_loci,
    squeezed_coords,
    wigner_closed_form,
    wigner_grid,
    wigner_oracle,
    wigner_values,
)

coord = st.floats(-2.5, 2.5)


def single_mode_fock_wigner(n: int, z: complex) -> float:
    """W_n(z) = (2/pi) (-1)^n exp(-2|z|^2) L_n(4|z|^2)."""
    x = abs(z) ** 2
    return 2 / math.pi * (-1) ** n * math.exp(-2 * x) * eval_laguerre(n, 4 * x)


def test_displacement_matches_expm():
    alpha = 0.7 - 0.4j
    a = np.diag(np.sqrt(np.arange(1, 80)), 1)
    ref = expm(alpha * a.T - np.conj(alpha) * a)[:12, :12]
    assert np.allclose(displacement_matrix(alpha, 12, 12), ref, atol=1e-12)


@given(coord, coord)
def test_displaced_vacuum_is_coherent(x, y):
    alpha = complex(x, y)
    col = displacement_matrix(alpha, 15, 1)[:, 0]
    n = np.arange(15)
    expected = np.exp(-abs(alpha) ** 2 / 2) * alpha**n / np.sqrt(factorial(n))
    assert np.allclose(col, expected, atol=1e-12)


def test_displaced_parity_is_hermitian_with_spectrum_in_unit_interval():
    P, deficit = displaced_parity(1.1 + 0.3j, 30)
    assert deficit < 1e-10
    assert np.allclose(P, P.conj().T)
    ev = np.linalg.eigvalsh(P)
    assert ev.min() >= -1 - 1e-10 and ev.max() <= 1 + 1e-10


@settings(max_examples=30)
@given(st.integers(0, 2), st.integers(0, 2), coord, coord, coord, coord)
def test_oracle_matches_fock_product_formula(n1, n2, ar, ai, br, bi):
    a, b = complex(ar, ai), complex(br, bi)
    w = wigner_oracle(fock_state(n1, n2, 6), PhaseSpacePoint(a, b))
    assert w == pytest.approx(single_mode_fock_wigner(n1, a) * single_mode_fock_wigner(n2, b), abs=1e-10)


@settings(max_examples=20)
@given(st.floats(0.0, 0.8), coord, coord)
def test_oracle_of_pure_state_is_bounded_by_parity(g, ar, br):
    w = wigner_oracle(amplified_injection(g, 1, 24), PhaseSpacePoint(ar, br))
    assert abs(w) <= PREFACTOR * (1 + 1e-9)


def test_oracle_origin_is_parity():
    for g in (0.0, 0.4, 0.8):
        # parity commutes with the amplifier; the truncated tail only rescales
        s1, s2 = amplified_injection(g, 1, 30), amplified_injection(g, 2, 30)
        assert wigner_oracle(s1, PhaseSpacePoint(0, 0)) == pytest.approx(-PREFACTOR * s1.norm_squared(), abs=1e-12)
        assert wigner_oracle(s2, PhaseSpacePoint(0, 0)) == pytest.approx(PREFACTOR * s2.norm_squared(), abs=1e-12)


def test_characteristic_function_of_single_photon():
    for eta in (0.3, 0.5 - 0.2j, 1.0j):
        chi = characteristic_fn_oracle(fock_state(1, 0, 20), eta, 0.0)
        x = abs(eta) ** 2
        assert chi == pytest.approx((1 - x) * math.exp(-x / 2), abs=1e-12)


def test_oracle_integrates_to_one():
    assert integrate_oracle(amplified_injection(0.5, 1, 20)) == pytest.approx(1.0, abs=1e-3)


def test_mixture_oracle_is_weighted_sum():
    mix = Mixture(((0.25, fock_state(1, 0, 4)), (0.75, vacuum(4))))
    p = PhaseSpacePoint(0.3, -0.2j)
    expected = 0.25 * wigner_oracle(fock_state(1, 0, 4), p) + 0.75 * wigner_oracle(vacuum(4), p)
    assert wigner_oracle(mix, p) == pytest.approx(expected)


def test_large_displacement_is_reported_in_strict_mode():
    with pytest.raises(CutoffOverflow):
        characteristic_fn_oracle(fock_state(1, 0, 6), 4.0, 0.0)


@given(st.floats(0.0, 6.0))
def test_closed_form_origin_value(g):
    assert wigner_closed_form(PhaseSpacePoint(0, 0), g, 1) == pytest.approx(-PREFACTOR, abs=1e-12)
    assert wigner_closed_form(PhaseSpacePoint(0, 0), g, 2) == pytest.approx(-PREFACTOR, abs=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.5), st.sampled_from([1, 2]))
def test_closed_form_vanishes_on_root_loci(seed, g, k):
    rng = np.random.default_rng(seed)
    for root in root_loci(k):
        for p in points_on_root_locus(rng, root, g, 5):
            assert squeezed_coords(p, g).x == pytest.approx(root)
            assert abs(wigner_closed_form(p, g, k)) < 1e-10


def test_interference_term_roots_and_bad_injection():
    for k in (1, 2):
        assert np.allclose(interference_term(np.array(root_loci(k)), k), 0, atol=1e-12)
    with pytest.raises(UnsupportedInjection):
        interference_term(0.5, 3)


def test_closed_form_vectorizes():
    a = np.array([0.1, 0.5j, -0.3])
    b = np.array([0.2, 0.0, 1.0 + 1.0j])
    vec = wigner_closed_form((a, b), 0.4, 1)
    each = [wigner_closed_form(PhaseSpacePoint(x, y), 0.4, 1) for x, y in zip(a, b)]
    assert np.allclose(vec, each)


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        PhaseSpacePoint(float("nan"), 0)


def test_slice_spec_validation():
    with pytest.raises(ValueError):
        SliceSpec("a_re", "a_re")
    with pytest.raises(ValueError):
        SliceSpec("a_re", "c_re")
    coords = SliceSpec("a_im", "b_re", resolution=5, fixed={"a_re": 0.5}).coordinates()
    assert coords.shape == (5, 5, 4)
    assert np.all(coords[..., 0] == 0.5) and np.all(coords[..., 3] == 0.0)


def test_grid_matches_pointwise_oracle_and_writes(tmp_path):
    spec = SliceSpec("a_re", "b_im", (-1, 1), (-1, 1), 7)
    state = amplified_injection(0.3, 1, 16)
    grid = wigner_grid(spec, 0.3, 1, state)
    ix, iy = 2, 5
    a, b = grid.alpha[ix, iy], grid.beta[ix, iy]
    assert grid.values_oracle[ix, iy] == pytest.approx(wigner_oracle(state, PhaseSpacePoint(a, b)))
    assert grid.values_closed[ix, iy] == pytest.approx(wigner_closed_form(PhaseSpacePoint(a, b), 0.3, 1))
    grid.write(tmp_path / "w.csv", tmp_path / "w.json")
    rows = list(csv.reader(open(tmp_path / "w.csv")))
    assert rows[0] == ["a_re", "a_im", "b_re", "b_im", "w_closed", "w_oracle"]
    assert len(rows) == 1 + 49
    meta = json.loads((tmp_path / "w.json").read_text())
    assert meta["layer"] == "oracle" and "residual" in meta


def test_negativity_report_finds_origin():
    grid = wigner_grid(SliceSpec(resolution=21), 0.5, 1)
    rep = negativity_report(grid)
    assert rep.min_value == pytest.approx(-PREFACTOR)
    assert rep.min_location == (0.0, 0.0, 0.0, 0.0)
    assert 0 < rep.negative_fraction < 1


def test_empty_grid_is_rejected():
    grid = wigner_grid(SliceSpec(resolution=3), 0.5, 1)
    from qiopa.wigner import negativity_report_values

    with pytest.raises(EmptyGrid):
        negativity_report_values(np.array([]), grid)


def test_vacuum_grid_is_gaussian():
    grid = wigner_grid(SliceSpec(resolution=9), 0.0, 1, vacuum(10), closed=False)
    expected = PREFACTOR * np.exp(-2 * np.abs(grid.alpha) ** 2 - 2 * np.abs(grid.beta) ** 2)
    assert np.allclose(grid.values_oracle, expected, atol=1e-12)
    assert np.all(grid.values_closed == 0)


def test_wigner_values_shape():
    w = wigner_values(fock_state(1, 0, 4), [0, 0.1, 0.2], [0.5j, 1])
    assert w.shape == (3, 2)
