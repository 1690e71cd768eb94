"""Simulator for quantum-injected parametric amplification and macro-macro entanglement."""

__version__ = "0.1.0"

from .fock import BipartiteState, GainParams, ModeTensor, fidelity, fock_state, qiopa_unitary, rotate_basis  # noqa: E402
from .macrostates import MacroBranch, build_macro_state, build_micro_macro, gamma_table  # noqa: E402
from .measurement import chsh, correlation, fringe_scan, make_rng  # noqa: E402
from .protocols import BellOutcome, OFilterConfig, double_amplify, entanglement_swap, o_filter  # noqa: E402
from .wigner import wigner_closed_form, wigner_grid, wigner_oracle  # noqa: E402

__all__ = [
    "BellOutcome",
    "BipartiteState",
    "GainParams",
    "MacroBranch",
    "ModeTensor",
    "OFilterConfig",
    "build_macro_state",
    "build_micro_macro",
    "chsh",
    "correlation",
    "double_amplify",
    "entanglement_swap",
    "fidelity",
    "fock_state",
    "fringe_scan",
    "gamma_table",
    "make_rng",
    "o_filter",
    "qiopa_unitary",
    "rotate_basis",
    "wigner_closed_form",
    "wigner_grid",
    "wigner_oracle",
]
