"""Calibration sweep for the probe constants.

The inequality probes compare ratios against constants nobody knows
sharply. This tool measures the worst ratio of each probe over its
canonical seeded sample family, multiplies by a safety margin, and
freezes the result into the versioned constants file that ships with the
package. Rerunning with the same seed reproduces the file bit for bit.

The hole-filling comparison is exact (constant 1); it is written without
calibration so the file covers every probe the CLI can run.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from .lab import constants_digest, frozen_constants_path, run_probe

MARGIN = 1.5
CALIBRATED = ("sobolev", "commutator", "kernel_case", "lp_sup", "t1")


def calibrate(seed: int = 0, margin: float = MARGIN) -> dict:
    constants = {}
    for name in CALIBRATED:
        report = run_probe(name, seed=seed, bound_const=float("inf"))
        constants[name] = report.worst_ratio * margin
        print(f"{name}: worst ratio {report.worst_ratio:.6g} -> frozen {constants[name]:.6g}")
    constants["holefill"] = 1.0
    return constants


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fracmap-calibrate", description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--margin", type=float, default=MARGIN)
    ap.add_argument("--out", default=None, help="target path (default: the packaged data file)")
    args = ap.parse_args(argv)
    constants = calibrate(args.seed, args.margin)
    payload = {"version": 1, "margin": args.margin, "seed": args.seed, "constants": constants}
    payload["digest"] = constants_digest(payload)
    path = Path(args.out) if args.out else frozen_constants_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
