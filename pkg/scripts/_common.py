"""Shared command-line plumbing for the experiment scripts."""

import argparse
import csv
import time
from pathlib import Path

from seqsense.model import load_pair, reference_pair


def parser(description: str, n_traces: int, full_traces: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", help="hypothesis-pair JSON (default: the reference pair)")
    p.add_argument("--out-dir", default="results")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--n-traces", type=int, default=n_traces)
    p.add_argument("--full", action="store_true", help=f"use {full_traces} traces (slow)")
    p.set_defaults(full_traces=full_traces)
    return p


def setup(args):
    if args.full:
        args.n_traces = args.full_traces
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pair = load_pair(args.config) if args.config else reference_pair()
    return pair, out


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        print(f"done in {time.perf_counter() - self.start:.1f} s")
