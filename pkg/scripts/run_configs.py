"""Run every shipped config through the CLI and print its convergence tables.

Usage: python3 scripts/run_configs.py [output_root]
"""
import glob
import os
import sys

from nlac.cli.main import main

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
# configs that are expected to be rejected, with their exit code
EXPECTED = {"bad_delta.json": 2}


def run(out_root):
    bad = []
    for path in sorted(glob.glob(os.path.join(ROOT, "configs", "*.json"))):
        name = os.path.basename(path)
        out = os.path.join(out_root, os.path.splitext(name)[0])
        print(f"== {name}")
        code = main(["run", path, "-o", out])
        if code != EXPECTED.get(name, 0):
            bad.append((name, code))
        for table in sorted(glob.glob(os.path.join(out, "*.csv"))):
            print(f"-- {os.path.basename(table)}")
            main(["table", table])
    for name, code in bad:
        print(f"unexpected exit {code} for {name}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "results")))
