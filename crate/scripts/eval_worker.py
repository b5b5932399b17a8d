#!/usr/bin/env python3
"""Reference worker for the EVAL line protocol.

    -> EVAL <n> <d>
    -> n lines of d space-separated floats
    <- n lines, each "0" or "1"

Labels mirror the engine's synthetic classifiers so runs can be compared
row for row. The --misbehave flag exists for transport tests.
"""

import argparse
import math
import sys
import time


def parse_args():
    p = argparse.ArgumentParser()
    p.add_argument("--mode", choices=["constant", "ball", "halfspace"], default="ball")
    p.add_argument("--label", type=int, default=1)
    p.add_argument("--norm", choices=["l1", "l2", "linf"], default="l2")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--center", type=str, default="", help="comma-separated; zeros if empty")
    p.add_argument("--w", type=str, default="", help="comma-separated halfspace normal")
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--dim", type=int, default=0, help="reject requests of another dimension")
    p.add_argument(
        "--misbehave",
        choices=["none", "hang", "garbage", "exit", "short", "slow"],
        default="none",
    )
    p.add_argument("--after", type=int, default=0, help="batches answered before misbehaving")
    return p.parse_args()


def floats(s):
    return [float(t) for t in s.split(",") if t.strip()]


def make_label(args):
    if args.mode == "constant":
        return lambda x: args.label
    if args.mode == "halfspace":
        w = floats(args.w)

        def half(x):
            acc = 0.0
            for a, b in zip(w, x):
                acc += a * b
            return int(acc >= args.c)

        return half
    center = floats(args.center)

    # same accumulation order as the engine, so boundary points agree
    def ball(x):
        c = center if center else [0.0] * len(x)
        if args.norm == "l1":
            acc = 0.0
            for a, b in zip(x, c):
                acc += abs(a - b)
        elif args.norm == "l2":
            acc = 0.0
            for a, b in zip(x, c):
                acc += (a - b) * (a - b)
            acc = math.sqrt(acc)
        else:
            acc = 0.0
            for a, b in zip(x, c):
                acc = max(acc, abs(a - b))
        return int(acc <= args.radius)

    return ball


def main():
    args = parse_args()
    label = make_label(args)
    inp, out = sys.stdin, sys.stdout
    batches = 0
    while True:
        header = inp.readline()
        if not header:
            return
        parts = header.split()
        if len(parts) != 3 or parts[0] != "EVAL":
            out.write("ERR bad header\n")
            out.flush()
            continue
        n, d = int(parts[1]), int(parts[2])
        rows = [inp.readline() for _ in range(n)]
        if args.dim and d != args.dim:
            out.write("ERR dimension %d, expected %d\n" % (d, args.dim))
            out.flush()
            continue
        bad = batches >= args.after
        batches += 1
        if bad and args.misbehave == "hang":
            while True:
                time.sleep(3600)
        if bad and args.misbehave == "exit":
            return
        if bad and args.misbehave == "slow":
            time.sleep(2.0)
        labels = []
        for r in rows:
            x = [float(t) for t in r.split()]
            if len(x) != d:
                out.write("ERR row has %d values, expected %d\n" % (len(x), d))
                out.flush()
                return
            labels.append(label(x))
        if bad and args.misbehave == "garbage":
            labels[len(labels) // 2] = 2
        if bad and args.misbehave == "short":
            labels = labels[:-1]
            out.write("".join("%d\n" % v for v in labels))
            out.flush()
            return
        out.write("".join("%d\n" % v for v in labels))
        out.flush()


if __name__ == "__main__":
    main()
