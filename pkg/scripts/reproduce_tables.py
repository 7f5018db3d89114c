#!/usr/bin/env python3
"""Regenerate every shipped convergence table.

Runs `momentfd convergence` for each config under configs/paper/ and
collects the artifacts in one output directory.  Without --full this
stays at desk scale (around a minute in total); --full adds the large
continuation meshes and can take hours for the 1D transport sweep.
"""

import argparse
import pathlib
import sys

from momentfd import cli

HERE = pathlib.Path(__file__).resolve().parent.parent


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--configs",
        default=str(HERE / "configs" / "paper"),
        help="directory of experiment TOML files",
    )
    parser.add_argument("--out", default="tables", help="artifact directory")
    parser.add_argument(
        "--only", help="substring filter on config file names", default=""
    )
    parser.add_argument(
        "--full", action="store_true", help="include the mesh_full meshes"
    )
    args = parser.parse_args(argv)

    configs = sorted(pathlib.Path(args.configs).glob("*.toml"))
    if args.only:
        configs = [p for p in configs if args.only in p.name]
    if not configs:
        print(f"no configs matched under {args.configs}", file=sys.stderr)
        return 2

    worst = 0
    for path in configs:
        print(f"== {path.name}")
        cmd = ["convergence", "--config", str(path), "--out", args.out]
        if args.full:
            cmd.append("--full")
        code = cli.main(cmd)
        if code != 0:
            print(f"   exit code {code}", file=sys.stderr)
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
