"""Command-line entry point.

Subcommands: `esm build`, `esm show`, `plan`, `lap`.  Exit codes: 0 success,
1 configuration error, 2 solver or planner failure.  Everything is
deterministic; --seedless additionally asserts that no library RNG state was
consumed during the run.
"""

from __future__ import annotations

import argparse
import random
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import load_config, write_default_config
from .errors import ConfigError, DriftplanError
from . import harness

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftplan",
        description="Steady-state drift equilibria and minimum-time "
                    "drift-capable trajectory planning on low-friction tracks.")
    parser.add_argument("--config", metavar="PATH",
                        help="INI run configuration (defaults apply when omitted)")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory (overrides [run] out)")
    parser.add_argument("--plots", action="store_true",
                        help="emit SVG figures next to the data files")
    parser.add_argument("--seedless", action="store_true",
                        help="assert that the run consumes no RNG state")
    sub = parser.add_subparsers(dest="command", required=True)

    esm = sub.add_parser("esm", help="equilibrium manifold commands")
    esm_sub = esm.add_subparsers(dest="esm_command", required=True)
    esm_sub.add_parser("build", help="sweep inputs and build the manifold")
    esm_sub.add_parser("show", help="summarize a saved manifold")

    sub.add_parser("plan", help="single horizon plan from the configured state")
    sub.add_parser("lap", help="receding-horizon lap simulation")

    write_cfg = sub.add_parser("write-config",
                               help="write the canonical default config file")
    write_cfg.add_argument("path", nargs="?", default="driftplan.ini")
    return parser


def _rng_fingerprint():
    py = random.getstate()
    np_state = np.random.get_state()
    return py, (np_state[0], np_state[1].tobytes(), np_state[2:])


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "write-config":
        write_default_config(args.path)
        print(f"wrote {args.path}")
        return 0

    before = _rng_fingerprint() if args.seedless else None

    try:
        if args.config is None:
            # materialize the defaults so relative paths resolve against cwd
            with tempfile.NamedTemporaryFile(
                    "w", suffix=".ini", dir=".", delete=False) as tmp:
                tmp_path = Path(tmp.name)
            try:
                write_default_config(tmp_path)
                cfg = load_config(tmp_path, out_override=args.out,
                                  plots_override=args.plots or None)
            finally:
                tmp_path.unlink(missing_ok=True)
        else:
            cfg = load_config(args.config, out_override=args.out,
                              plots_override=args.plots or None)

        if args.command == "esm":
            code = (harness.cmd_esm_build(cfg) if args.esm_command == "build"
                    else harness.cmd_esm_show(cfg))
        elif args.command == "plan":
            code = harness.cmd_plan(cfg)
        elif args.command == "lap":
            code = harness.cmd_lap(cfg)
        else:  # unreachable with required=True
            raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DriftplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.seedless and _rng_fingerprint() != before:
        print("seedless violation: library RNG state changed", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
