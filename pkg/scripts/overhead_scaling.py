#!/usr/bin/env python3
"""Measure how backup traffic scales with cluster size.

Runs the uniform random workload over a range of cluster sizes and
compares the measured backup/network ratio with the analytic 1/(p-1)
expectation.  Optionally writes the table as CSV::

    python scripts/overhead_scaling.py --p-list 2,4,8,16,32 --seeds 3 --csv scaling.csv
"""

import argparse
import sys
from pathlib import Path

from ftmr.harness import measure_overhead


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--p-list", default="2,4,8,16,32",
                        help="comma-separated cluster sizes")
    parser.add_argument("--seeds", type=int, default=3, help="seeds per size")
    parser.add_argument("--records", type=int, default=100_000)
    parser.add_argument("--interval", type=int, default=1,
                        help="recovery point interval")
    parser.add_argument("--csv", type=Path, help="also write the table here")
    args = parser.parse_args(argv)

    rows = []
    print(f"{'p':>4} {'ratio':>8} {'1/(p-1)':>8} {'error':>7} {'balance':>8}")
    for p in (int(x) for x in args.p_list.split(",")):
        for seed in range(args.seeds):
            r = measure_overhead(p, seed, total_records=args.records,
                                 recovery_point_interval=args.interval)
            rows.append(r)
            err = (r.ratio - r.expected) / r.expected if r.expected else 0.0
            print(f"{p:>4} {r.ratio:>8.4f} {r.expected:>8.4f} {err:>6.1%} "
                  f"{r.share_balance:>7.2f}x")
    if args.csv:
        lines = ["p,seed,total_records,network_bytes,backup_bytes,ratio,"
                 "expected,share_balance"]
        for r in rows:
            lines.append(f"{r.p},{r.seed},{r.total_records},{r.network_bytes},"
                         f"{r.backup_bytes},{r.ratio:.6f},{r.expected:.6f},"
                         f"{r.share_balance:.4f}")
        args.csv.write_text("\n".join(lines) + "\n")
        print(f"table written to {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
