"""Closed-form against Fock-oracle Wigner function on one slice per gain.

The numbers are a description of how far the closed expression sits from the
displaced-parity oracle; nothing here is a pass/fail check.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from qiopa.wigner import SliceSpec, amplified_injection, residual_report, wigner_grid


@dataclass
class ResidualConfig:
    gains: list = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6])
    injection: int = 1
    cutoff: int = 30
    resolution: int = 101
    extent: float = 3.0
    out_dir: str = "runs/wigner_residuals"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--injection", type=int, default=1, choices=[1, 2])
    p.add_argument("--resolution", type=int, default=ResidualConfig.resolution)
    p.add_argument("--out-dir", default=ResidualConfig.out_dir)
    a = p.parse_args(argv)
    cfg = ResidualConfig(injection=a.injection, resolution=a.resolution, out_dir=a.out_dir)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"config": asdict(cfg), "gains": {}}
    for g in cfg.gains:
        t0 = time.perf_counter()
        spec = SliceSpec("a_re", "b_re", (-cfg.extent, cfg.extent), (-cfg.extent, cfg.extent), cfg.resolution)
        grid = wigner_grid(spec, g, cfg.injection, amplified_injection(g, cfg.injection, cfg.cutoff))
        grid.write(out / f"wigner_g{g:.2f}.csv", out / f"wigner_g{g:.2f}.json")
        rep = residual_report(grid)
        rep["seconds"] = time.perf_counter() - t0
        summary["gains"][str(g)] = rep
        print(
            f"g={g:.2f}  rms={rep['rms_residual']:.4f}  max={rep['max_abs_residual']:.4f}  "
            f"scale={rep['best_fit_scale_closed_over_oracle']:.3f}  corr={rep['correlation']:.3f}"
        )
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
