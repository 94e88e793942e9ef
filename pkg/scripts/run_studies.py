"""Run every JSON study in configs/ through the CLI and print a one-line digest per study.

Usage: python3 scripts/run_studies.py [--out out] [--only NAME ...]
"""

import argparse
import json
import time
from pathlib import Path

from hhx import cli

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "out"))
    ap.add_argument("--only", nargs="*", help="config stems to run (default: all)")
    args = ap.parse_args()
    configs = sorted((ROOT / "configs").glob("*.json"))
    if args.only:
        configs = [c for c in configs if c.stem in args.only]
    worst = 0
    for cfg in configs:
        out = Path(args.out) / cfg.stem
        t = time.perf_counter()
        code = cli.main(["run", "--config", str(cfg), "--out", str(out)])
        worst = max(worst, code)
        summary = out / "summary.json"
        digest = ""
        if summary.exists():
            s = json.loads(summary.read_text())
            for key in ("slope", "orders"):
                if key in s:
                    digest += f" {key}={s[key]}"
        print(f"{cfg.stem:40s} exit={code} {time.perf_counter() - t:7.1f}s{digest}")
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
