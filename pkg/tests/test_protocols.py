import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qiopa.errors import UnresolvableOutcome
from qiopa.fock import fidelity, fock_state, overlap, rotate_basis
from qiopa.macrostates import MacroBranch, build_macro_state, build_micro_macro
from qiopa.measurement import make_rng
from qiopa.protocols import (
    BellOutcome,
    OFilterConfig,
    double_amplify,
    entanglement_swap,
    filter_site,
    macro_bell_state,
    macro_macro_singlet,
    make_singlet,
    micro_bell_state,
    o_filter,
    orthogonality_program,
    project_micro_pair,
    swap_outcome_probabilities,
)

small_gain = st.floats(0.0, 0.6)
phase = st.floats(0.0, 2 * math.pi)


def test_micro_bell_states_are_orthonormal():
    states = [micro_bell_state(o, 0.4) for o in BellOutcome]
    for i, a in enumerate(states):
        for j, b in enumerate(states):
            assert overlap(a, b) == pytest.approx(1.0 if i == j else 0.0, abs=1e-14)


def test_singlet_is_basis_independent():
    # the singlet written in H/V equals the psi-minus state of any equatorial basis up to a phase
    s = make_singlet()
    for phi in (0.0, 1.0, 2.5):
        assert fidelity(s, micro_bell_state(BellOutcome.PSI_MINUS, phi)) == pytest.approx(1.0)


@settings(max_examples=15)
@given(small_gain, phase)
def test_swap_outcomes_are_uniform_and_faithful(g, phi):
    probs = swap_outcome_probabilities(g, phi, 12)
    assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)
    for o in BellOutcome:
        assert probs[o] == pytest.approx(0.25, abs=1e-12)
        assert entanglement_swap(g, phi, 12, o).fidelity_vs_reference == pytest.approx(1.0, abs=1e-12)


def test_swap_at_zero_gain_is_micro_swapping():
    res = entanglement_swap(0.0, 0.0, 3, BellOutcome.PSI_MINUS)
    ref = micro_bell_state(BellOutcome.PSI_MINUS, 0.0, 3)
    assert fidelity(res.post_state, ref) == pytest.approx(1.0)


def test_physical_bsm_rejects_phi_outcomes():
    with pytest.raises(UnresolvableOutcome):
        entanglement_swap(0.3, 0.0, 8, BellOutcome.PHI_PLUS, physical_bsm=True)
    assert entanglement_swap(0.3, 0.0, 8, BellOutcome.PSI_PLUS, physical_bsm=True).probability == pytest.approx(0.25)


def test_project_micro_pair_probability_matches_norm():
    sigma = build_micro_macro(0.4, 0.0, 10, micro_cutoff=1)
    raw = project_micro_pair(sigma, sigma, micro_bell_state(BellOutcome.PHI_MINUS, 0.0))
    assert raw.norm_squared() == pytest.approx(0.25 * sigma.norm_squared() ** 2)


def test_swap_result_dict():
    d = entanglement_swap(0.2, 0.0, 10).to_dict()
    assert set(d) == {"outcome", "probability", "fidelity_vs_reference", "gain", "cutoff", "norm_deficit"}


@settings(max_examples=10)
@given(st.floats(0.0, 0.8), st.floats(0.0, 0.8), phase)
def test_double_amplification_matches_direct_singlet(ga, gb, phi):
    state = double_amplify(ga, gb, phi, 40)
    assert fidelity(state, macro_macro_singlet(ga, gb, phi, 40)) == pytest.approx(1.0, abs=1e-9)


def test_double_amplification_is_phase_invariant():
    ref = double_amplify(0.5, 0.5, 0.0, 30)
    for phi in (0.7, 2.2, 4.0):
        assert fidelity(double_amplify(0.5, 0.5, phi, 30), ref) == pytest.approx(1.0, abs=1e-8)


def test_double_amplification_antisymmetric_only_for_equal_gains():
    eq = double_amplify(0.6, 0.6, 0.0, 30)
    assert overlap(eq.swap_sites(), eq) == pytest.approx(-eq.norm_squared(), abs=1e-12)
    neq = double_amplify(0.2, 0.6, 0.0, 30)
    assert abs(overlap(neq.swap_sites(), neq)) < neq.norm_squared()


def test_macro_bell_reference_is_normalized_product_of_branches():
    s = macro_bell_state(0.5, 0.0, 40, BellOutcome.PHI_PLUS)
    assert s.norm_squared() == pytest.approx(1.0, abs=1e-9)


# -- orthogonality filter --------------------------------------------------------


def test_filter_config_validation():
    with pytest.raises(ValueError):
        OFilterConfig(1.0, 0)
    with pytest.raises(ValueError):
        OFilterConfig(0.1, -1)
    with pytest.raises(ValueError):
        OFilterConfig(0.1, 1.5)
    with pytest.raises(TypeError):
        OFilterConfig(0.1, 0, program=lambda m, n, phi: True)
    with pytest.raises(TypeError):
        OFilterConfig(0.1, 0, program=lambda *counts: True)
    cfg = OFilterConfig(0.2, 0, program=lambda m, n: m > n)
    assert cfg.decide(2, 1) and not cfg.decide(1, 1)


def test_orthogonality_program():
    p = orthogonality_program(2)
    assert p(3, 1) and p(0, 2) and not p(2, 1)
    assert OFilterConfig(0.1, 3).to_dict()["program"] == "orthogonality_k3"


@settings(max_examples=15)
@given(st.floats(0.05, 1.0), st.floats(0.0, 0.6))
def test_acceptance_is_monotone_in_threshold(g, R):
    s = build_macro_state(g, 0.0, MacroBranch.PHI_PARALLEL, 30)
    acc = [o_filter(s, OFilterConfig(R, k)).acceptance_probability for k in range(6)]
    assert acc[0] == pytest.approx(1.0, abs=1e-12)
    assert all(b <= a + 1e-14 for a, b in zip(acc, acc[1:]))


def test_acceptance_regression_values():
    # frozen from exact enumeration at g = 0.8, R = 0.1
    s = build_macro_state(0.8, 0.0, MacroBranch.PHI_PARALLEL, 40)
    acc = [o_filter(s, OFilterConfig(0.1, k)).acceptance_probability for k in range(5)]
    assert acc == pytest.approx([1.0, 0.30647, 0.058281, 0.010831, 0.0019637], rel=1e-4)


def test_filter_at_zero_reflectivity_is_identity():
    s = build_macro_state(0.5, 0.3, MacroBranch.PHI_PERP, 20)
    res = o_filter(s, OFilterConfig(0.0, 0, basis_phase=0.3))
    assert res.accepted and res.acceptance_probability == pytest.approx(1.0)
    assert fidelity(res.post_state.as_pure(), s) == pytest.approx(1.0)


def test_filter_sampling_frequency_matches_enumeration():
    s = build_macro_state(0.8, 0.0, MacroBranch.PHI_PARALLEL, 30)
    cfg = OFilterConfig(0.3, 1)
    p = o_filter(s, cfg).acceptance_probability
    rng = make_rng(5)
    hits = sum(o_filter(s, cfg, rng, mode="sample").accepted for _ in range(2000))
    assert abs(hits / 2000 - p) < 4 * math.sqrt(p * (1 - p) / 2000)
    with pytest.raises(ValueError):
        o_filter(s, cfg, None, mode="sample")


def test_filter_sampling_is_reproducible():
    s = build_macro_state(0.6, 0.0, MacroBranch.PHI_PARALLEL, 20)
    cfg = OFilterConfig(0.4, 1)
    a = [o_filter(s, cfg, make_rng(9), "sample").counts for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_filter_site_acceptance_matches_single_tensor():
    sigma = build_micro_macro(0.6, 0.0, 20)
    cfg = OFilterConfig(0.2, 2)
    p, branches = filter_site(sigma, "b", cfg)
    # both macro branches are accepted equally often by symmetry
    single = o_filter(build_macro_state(0.6, 0.0, MacroBranch.PHI_PARALLEL, 20), cfg).acceptance_probability
    assert p == pytest.approx(single, rel=1e-10)
    assert sum(b.norm_squared() for _, b in branches) / sigma.norm_squared() == pytest.approx(p)
    assert all(abs(k[0] - k[1]) >= 2 for k, _ in branches)


def test_filter_basis_rotation_is_applied():
    s = fock_state(1, 0, 4, 0.0)
    same = o_filter(s, OFilterConfig(0.5, 1, basis_phase=0.0)).acceptance_probability
    hv = o_filter(s, OFilterConfig(0.5, 1, basis_phase=None)).acceptance_probability
    assert same == pytest.approx(0.5) and hv == pytest.approx(0.5)
    # a filter counting in the conjugate basis sees the same single photon
    assert o_filter(rotate_basis(s, 1.0), OFilterConfig(0.5, 1, basis_phase=0.0)).acceptance_probability == pytest.approx(0.5)
