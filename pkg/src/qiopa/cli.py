"""Command-line experiment runner.

Every subcommand resolves an :class:`ExperimentConfig` (JSON file, then the
``QIOPA_OUT`` environment variable for the output directory, then flags),
writes its CSV/JSON artifacts plus ``manifest.json`` into the output
directory, and exits 0. Invalid configuration exits 2 and numerical
convergence failures exit 3, each with one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .errors import CutoffOverflow, QiopaError
from .fock import STRICT_DEFICIT, BipartiteState, fidelity, fock_state, overlap, qiopa_unitary, vacuum
from .macrostates import (
    MacroBranch,
    branch_distinguishability,
    build_macro_state,
    build_micro_macro,
    gamma_table,
    mean_photon_numbers,
    predicted_deficit,
    suggested_cutoff,
)
from .measurement import (
    DEFAULT_CHSH_ANGLES,
    Experiment,
    MeasurementSetting,
    chsh,
    fringe_scan,
    make_rng,
    write_correlations_csv,
    write_json,
)
from .protocols import (
    BellOutcome,
    OFilterConfig,
    double_amplify,
    entanglement_swap,
    macro_macro_singlet,
    make_singlet,
)
from .wigner import SliceSpec, amplified_injection, negativity_report, wigner_grid

COMMANDS = ("macrostate", "micro-macro", "swap", "double-amp", "wigner", "chsh", "fringe", "validate")
SOURCES = ("micro-singlet", "micro-macro", "double-amp", "swap", "product")
OUT_ENV = "QIOPA_OUT"
DESK_CUTOFF = 400

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "qiopa experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "protocol": {"enum": list(SOURCES), "description": "state fed to chsh/fringe"},
        "gain": {"type": "number", "minimum": 0},
        "gain_b": {"type": ["number", "null"], "minimum": 0},
        "phase": {"type": "number"},
        "cutoff": {"type": "integer", "minimum": 1},
        "injection": {"enum": [0, 1, 2]},
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "of_r": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "of_k": {"type": "integer", "minimum": 0},
        "of_basis": {"type": ["number", "null"]},
        "of_sites": {"enum": ["auto", "a", "b", "both"]},
        "settings": {"type": ["array", "null"], "items": {"type": "number"}},
        "outcome": {"enum": [o.value for o in BellOutcome]},
        "physical_bsm": {"type": "boolean"},
        "oracle": {"type": "boolean"},
        "resolution": {"type": "integer", "minimum": 2},
        "extent": {"type": "number", "exclusiveMinimum": 0},
        "x_axis": {"enum": ["a_re", "a_im", "b_re", "b_im"]},
        "y_axis": {"enum": ["a_re", "a_im", "b_re", "b_im"]},
        "scan_points": {"type": "integer", "minimum": 2},
        "mode": {"enum": ["sample", "enumerate"]},
        "out": {"type": ["string", "null"]},
    },
}


class ConfigError(QiopaError):
    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field = field_name


@dataclass
class ExperimentConfig:
    command: str = "validate"
    protocol: str = "micro-singlet"
    gain: float = 0.5
    gain_b: float | None = None
    phase: float = 0.0
    cutoff: int = 40
    injection: int = 1
    samples: int = 10_000
    seed: int = 42
    of_r: float = 0.0
    of_k: int = 0
    of_basis: float | None = 0.0
    of_sites: str = "auto"
    settings: list | None = None
    outcome: str = "psi-minus"
    physical_bsm: bool = False
    oracle: bool = False
    resolution: int = 101
    extent: float = 4.0
    x_axis: str = "a_re"
    y_axis: str = "b_re"
    scan_points: int = 25
    mode: str = "enumerate"
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        try:
            jsonschema.validate(asdict(self), CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            name = exc.path[0] if exc.path else (exc.params if hasattr(exc, "params") else "config")
            raise ConfigError(str(name), f"{name}: {exc.message}") from None
        if self.x_axis == self.y_axis:
            raise ConfigError("y_axis", "x_axis and y_axis must differ")
        if self.command == "chsh" and self.settings is not None and len(self.settings) != 4:
            raise ConfigError("settings", "chsh needs four angles a, a', b, b'")
        if self.command == "wigner" and self.injection == 0 and not self.oracle:
            raise ConfigError("injection", "the closed form needs 1 or 2 injected photons; use --oracle for 0")
        return self

    @property
    def gain_second(self) -> float:
        return self.gain if self.gain_b is None else self.gain_b


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "config file must hold a JSON object")
    return data


def resolve_config(command: str, args: argparse.Namespace) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    data = load_config(args.config)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], f"unknown config field {sorted(unknown)[0]!r}")
    if os.environ.get(OUT_ENV):
        data["out"] = os.environ[OUT_ENV]
    for name in known:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    data["command"] = command
    return ExperimentConfig(**data).validate()


# -- helpers ---------------------------------------------------------------


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out or Path("runs") / cfg.command)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_convergence(gain: float, cutoff: int, what: str) -> float:
    d = predicted_deficit(gain, cutoff)
    if d > STRICT_DEFICIT:
        raise CutoffOverflow(
            f"{what}: cutoff {cutoff} loses {d:.3g} of the macro-state at g = {gain}; "
            f"suggested cutoff {suggested_cutoff(gain)}"
        )
    return d


def _filters(cfg: ExperimentConfig):
    if cfg.of_r <= 0:
        return None
    f = OFilterConfig(cfg.of_r, cfg.of_k, cfg.of_basis)
    sites = cfg.of_sites
    if sites == "auto":
        sites = "b" if cfg.protocol == "micro-macro" else "both"
    return {"a": (f, None), "b": (None, f), "both": (f, f)}[sites]


def build_source(cfg: ExperimentConfig) -> tuple[BipartiteState, dict]:
    """State feeding the correlation experiments, plus diagnostics."""
    diag = {}
    if cfg.protocol == "micro-singlet":
        return make_singlet(1), diag
    diag["predicted_deficit"] = _require_convergence(max(cfg.gain, cfg.gain_second), cfg.cutoff, cfg.protocol)
    if cfg.protocol == "micro-macro":
        return build_micro_macro(cfg.gain, cfg.phase, cfg.cutoff), diag
    if cfg.protocol == "double-amp":
        return double_amplify(cfg.gain, cfg.gain_second, cfg.phase, cfg.cutoff), diag
    if cfg.protocol == "swap":
        res = entanglement_swap(cfg.gain, cfg.phase, cfg.cutoff, BellOutcome(cfg.outcome), cfg.physical_bsm)
        diag["swap_probability"] = res.probability
        return res.post_state, diag
    # separable product of the two macro branches
    a = build_macro_state(cfg.gain, cfg.phase, MacroBranch.PHI_PARALLEL, cfg.cutoff)
    b = build_macro_state(cfg.gain_second, cfg.phase, MacroBranch.PHI_PERP, cfg.cutoff)
    return BipartiteState(((1.0, a, b),)), diag


# -- subcommands -----------------------------------------------------------


def cmd_macrostate(cfg, out):
    d = _require_convergence(cfg.gain, cfg.cutoff, "macrostate")
    table = gamma_table(cfg.gain)
    table.to_csv(out / "gamma_table.csv")
    phi = build_macro_state(cfg.gain, cfg.phase, MacroBranch.PHI_PARALLEL, cfg.cutoff)
    perp = build_macro_state(cfg.gain, cfg.phase, MacroBranch.PHI_PERP, cfg.cutoff)
    amp = qiopa_unitary(fock_state(1, 0, cfg.cutoff, cfg.phase), cfg.gain, cfg.phase)
    res = {
        "gamma_i_max": table.i_max,
        "gamma_j_max": table.j_max,
        "gamma_sum_squares": table.total(),
        "mean_photons_phi": mean_photon_numbers(phi),
        "mean_photons_phi_perp": mean_photon_numbers(perp),
        "branch_distinguishability": branch_distinguishability(cfg.gain, cfg.phase, cfg.cutoff),
        "orthogonality": abs(overlap(phi, perp)),
        "two_route_fidelity": fidelity(phi, amp),
    }
    write_json(out / "macrostate.json", res)
    return res, {"predicted_deficit": d}, ["gamma_table.csv", "macrostate.json"]


def cmd_micro_macro(cfg, out):
    d = _require_convergence(cfg.gain, cfg.cutoff, "micro-macro")
    sigma = build_micro_macro(cfg.gain, cfg.phase, cfg.cutoff)
    exp = Experiment(sigma)
    res = {
        "norm_squared": sigma.norm_squared(),
        "branch_distinguishability": branch_distinguishability(cfg.gain, cfg.phase, cfg.cutoff),
        "equal_setting_correlation": exp.exact_correlation((0.0, 0.0)).value,
    }
    write_json(out / "micro_macro.json", res)
    return res, {"predicted_deficit": d, "state_deficit": sigma.deficit}, ["micro_macro.json"]


def cmd_swap(cfg, out):
    d = _require_convergence(cfg.gain, cfg.cutoff, "swap")
    res = entanglement_swap(cfg.gain, cfg.phase, cfg.cutoff, BellOutcome(cfg.outcome), cfg.physical_bsm)
    payload = res.to_dict()
    payload["all_outcome_probabilities"] = {
        o.value: entanglement_swap(cfg.gain, cfg.phase, cfg.cutoff, o).probability for o in BellOutcome
    }
    payload["physical_bsm"] = cfg.physical_bsm
    write_json(out / "swap.json", payload)
    return payload, {"predicted_deficit": d, "state_deficit": res.post_state.deficit}, ["swap.json"]


def cmd_double_amp(cfg, out):
    d = _require_convergence(max(cfg.gain, cfg.gain_second), cfg.cutoff, "double-amp")
    state = double_amplify(cfg.gain, cfg.gain_second, cfg.phase, cfg.cutoff)
    direct = macro_macro_singlet(cfg.gain, cfg.gain_second, cfg.phase, cfg.cutoff)
    res = {
        "gain_a": cfg.gain,
        "gain_b": cfg.gain_second,
        "unequal_gains": cfg.gain != cfg.gain_second,
        "fidelity_vs_direct": fidelity(state, direct),
        "site_swap_overlap": overlap(state.swap_sites(), state).real,
    }
    write_json(out / "double_amp.json", res)
    return res, {"predicted_deficit": d, "state_deficit": state.deficit}, ["double_amp.json"]


def cmd_wigner(cfg, out):
    e = cfg.extent
    spec = SliceSpec(cfg.x_axis, cfg.y_axis, (-e, e), (-e, e), cfg.resolution)
    state = None
    diag = {}
    if cfg.oracle:
        diag["predicted_deficit"] = _require_convergence(cfg.gain, cfg.cutoff, "wigner")
        state = amplified_injection(cfg.gain, cfg.injection, cfg.cutoff)
        diag["state_deficit"] = state.deficit
    grid = wigner_grid(spec, cfg.gain, cfg.injection if cfg.injection else 1, state, closed=cfg.injection != 0)
    grid.write(out / "wigner.csv", out / "wigner.json")
    rep = negativity_report(grid)
    res = {"min_value": rep.min_value, "negative_fraction": rep.negative_fraction}
    if cfg.oracle:
        res["residual"] = grid.metadata()["residual"]
    return res, diag, ["wigner.csv", "wigner.json"]


def cmd_chsh(cfg, out):
    state, diag = build_source(cfg)
    angles = tuple(cfg.settings) if cfg.settings else DEFAULT_CHSH_ANGLES
    filt = _filters(cfg)
    res = chsh(state, angles, cfg.samples, filt, make_rng(cfg.seed), cfg.mode)
    write_correlations_csv(out / "chsh.csv", [(a, b, c) for (a, b), c in zip(res.pairs, res.correlations)])
    summary = res.summary()
    summary.update(
        protocol=cfg.protocol,
        filter=None if filt is None else [None if f is None else f.to_dict() for f in filt],
        gain=cfg.gain,
        cutoff=cfg.cutoff,
        seed=cfg.seed,
        mode=cfg.mode,
    )
    write_json(out / "chsh.json", summary)
    return {"S": res.S, "stderr": res.standard_error, "violation": res.violation}, diag, ["chsh.csv", "chsh.json"]


def cmd_fringe(cfg, out):
    state, diag = build_source(cfg)
    fixed = cfg.settings[0] if cfg.settings else 0.0
    phis = np.linspace(0.0, 2 * math.pi, cfg.scan_points)
    filt = _filters(cfg)
    scan = fringe_scan(state, MeasurementSetting("A", fixed), phis, cfg.samples, filt, make_rng(cfg.seed), cfg.mode)
    write_correlations_csv(out / "fringe.csv", list(scan.rows()))
    res = {"visibility": scan.visibility, "fixed_phase": fixed, "protocol": cfg.protocol, "mode": cfg.mode}
    write_json(out / "fringe.json", res)
    return res, diag, ["fringe.csv", "fringe.json"]


def validate_config(cfg: ExperimentConfig) -> dict:
    """Predict truncation adequacy from the gamma tail without running anything."""
    gains = sorted({cfg.gain, cfg.gain_second})
    report = {"cutoff": cfg.cutoff, "tolerance": STRICT_DEFICIT, "gains": {}}
    verdict = "OK"
    for g in gains:
        d = predicted_deficit(g, cfg.cutoff)
        entry = {"predicted_deficit": d, "verdict": "OK" if d <= STRICT_DEFICIT else "INSUFFICIENT"}
        if d > STRICT_DEFICIT:
            sc = suggested_cutoff(g)
            entry["suggested_cutoff"] = sc
            entry["mean_photon_number"] = 1 + 4 * math.sinh(g) ** 2
            if sc > DESK_CUTOFF:
                entry["note"] = (
                    f"needs cutoff {sc} per mode (~{(sc + 1) ** 2:.2g} amplitudes per site); "
                    "infeasible for desk-scale truncated simulation"
                )
            verdict = "INSUFFICIENT"
        report["gains"][repr(g)] = entry
    report["verdict"] = verdict
    return report


def cmd_validate(cfg, out):
    report = validate_config(cfg)
    write_json(out / "validate.json", report)
    print(json.dumps(report, sort_keys=True))
    return report, {}, ["validate.json"]


HANDLERS = {
    "macrostate": cmd_macrostate,
    "micro-macro": cmd_micro_macro,
    "swap": cmd_swap,
    "double-amp": cmd_double_amp,
    "wigner": cmd_wigner,
    "chsh": cmd_chsh,
    "fringe": cmd_fringe,
    "validate": cmd_validate,
}


def run(cfg: ExperimentConfig) -> dict:
    out = _out_dir(cfg)
    t0 = time.perf_counter()
    result, diag, files = HANDLERS[cfg.command](cfg, out)
    manifest = {
        "config": asdict(cfg),
        "versions": {
            "qiopa": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "diagnostics": diag,
        "result": result,
        "outputs": files,
        "wall_time_s": time.perf_counter() - t0,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its fields")
    common.add_argument("--gain", type=float)
    common.add_argument("--gain-b", dest="gain_b", type=float, help="second amplifier gain (double-amp)")
    common.add_argument("--phase", type=float, help="equatorial basis phase used for construction")
    common.add_argument("--cutoff", type=int, help="max photons per polarization mode")
    common.add_argument("--injection", type=int, help="injected photons for wigner (0, 1, 2)")
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--of-r", dest="of_r", type=float, help="filter tap reflectivity; 0 disables the filter")
    common.add_argument("--of-k", dest="of_k", type=int, help="filter threshold |m - n| >= k")
    common.add_argument("--of-basis", dest="of_basis", type=float, help="equatorial phase the filter counts in")
    common.add_argument("--of-sites", dest="of_sites", choices=["auto", "a", "b", "both"])
    common.add_argument("--mode", choices=["sample", "enumerate"])
    common.add_argument("--out", help=f"output directory (also ${OUT_ENV})")

    p = argparse.ArgumentParser(prog="qiopa", description="Quantum-injected amplifier macro-state simulator")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    sub = p.add_subparsers(dest="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("chsh", "fringe"):
            sp.add_argument("--protocol", choices=SOURCES, help="state to measure")
            sp.add_argument("--settings", type=float, nargs="+", help="chsh: a a' b b'; fringe: fixed A phase")
            sp.add_argument("--outcome", choices=[o.value for o in BellOutcome], help="swap outcome for --protocol swap")
        if name == "fringe":
            sp.add_argument("--scan-points", dest="scan_points", type=int)
        if name == "swap":
            sp.add_argument("--outcome", choices=[o.value for o in BellOutcome])
            sp.add_argument("--physical-bsm", dest="physical_bsm", action="store_const", const=True)
        if name == "wigner":
            sp.add_argument("--oracle", action="store_const", const=True, help="also evaluate the Fock-space oracle")
            sp.add_argument("--resolution", type=int)
            sp.add_argument("--extent", type=float, help="half-width of both slice axes")
            sp.add_argument("--x-axis", dest="x_axis", choices=["a_re", "a_im", "b_re", "b_im"])
            sp.add_argument("--y-axis", dest="y_axis", choices=["a_re", "a_im", "b_re", "b_im"])
    return p


def _fail(code: int, kind: str, message: str, field_name: str | None = None) -> int:
    err = {"error": kind, "exit": code, "message": message}
    if field_name:
        err["field"] = field_name
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_schema:
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return 0
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    try:
        cfg = resolve_config(args.command, args)
    except ConfigError as exc:
        return _fail(2, "config", str(exc), exc.field)
    except TypeError as exc:
        return _fail(2, "config", str(exc))
    try:
        run(cfg)
    except CutoffOverflow as exc:
        return _fail(3, "convergence", str(exc))
    except (ValueError, QiopaError) as exc:
        return _fail(2, "config", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
