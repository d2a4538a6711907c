#!/usr/bin/env python3
"""Stdio stub classifier for tests: serves a tabulated model over the line
protocol. Knobs simulate well-behaved and misbehaving remote classifiers:

  --batch N     hold responses and emit them in reversed batches of N
                (exercises id-based matching under pipelining)
  --mode silent     never respond (for timeout tests)
  --mode malformed  respond with a non-JSON line
  --mode bad-id     respond with ids that were never requested
  --mode bad-label  respond with a label outside the class set
"""

import argparse
import csv
import json
import select
import sys


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("table", help="CSV with feature columns plus a label column")
    ap.add_argument("--batch", type=int, default=1)
    ap.add_argument(
        "--mode",
        default="ok",
        choices=["ok", "silent", "malformed", "bad-id", "bad-label"],
    )
    args = ap.parse_args()

    with open(args.table, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    label_at = header.index("label")
    table = {}
    for row in rows[1:]:
        key = tuple(sorted((h, v) for h, v in zip(header, row) if h != "label"))
        table[key] = row[label_at]

    pending = []

    def flush():
        for resp in reversed(pending):
            sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()
        pending.clear()

    while True:
        # while a partial batch is held back, flush it once stdin goes idle
        # so a client waiting for those responses never deadlocks
        ready, _, _ = select.select([sys.stdin], [], [], 0.05 if pending else None)
        if not ready:
            flush()
            continue
        line = sys.stdin.readline()
        if not line:
            break
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        if args.mode == "silent":
            continue
        if args.mode == "malformed":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        label = table[tuple(sorted(req["features"].items()))]
        if args.mode == "bad-label":
            label = "bogus"
        rid = req["id"] + (10**6 if args.mode == "bad-id" else 0)
        pending.append({"id": rid, "label": label})
        if len(pending) >= args.batch:
            flush()
    flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
