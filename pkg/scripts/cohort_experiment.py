#!/usr/bin/env python3
"""Desk-scale replica of the offline study: a 20-subject synthetic cohort,
per-subject models of all four kinds, pooled direction classification and
the 100-sweep interpolation fit table.

Writes the aggregate summary (direction table + correct-rate table) under
--out. Expect roughly five minutes on one core; trim --subjects or
--models for a quicker look.
"""

import argparse
import sys
import time

from emgforce.cli import main as emgforce


def sh(args):
    code = emgforce(args)
    if code != 0:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="cohort_results")
    ap.add_argument("--subjects", type=int, default=20)
    ap.add_argument("--duration", type=float, default=1.1)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--models", nargs="+", default=["ln", "dd", "mlp", "cnn"])
    args = ap.parse_args()

    t0 = time.time()
    sh(["synth", "--subjects", str(args.subjects), "--reps", "3",
        "--duration", str(args.duration), "--seed", str(args.seed),
        "--out", f"{args.out}/data"])
    for model in args.models:
        sh(["train", "--data", f"{args.out}/data", "--subject", "all",
            "--model", model, "--seed", "42", "--out", f"{args.out}/ckpts"])
        for s in range(args.subjects):
            ckpt = f"{args.out}/ckpts/{model}_s{s:02d}.ckpt"
            sh(["eval", "--ckpt", ckpt, "--data", f"{args.out}/data",
                "--report", f"{args.out}/reports/{model}_s{s:02d}.eval.json"])
            sh(["sweep", "--ckpt", ckpt, "--data", f"{args.out}/data",
                "--report", f"{args.out}/reports/{model}_s{s:02d}.sweep.json"])
        print(f"[{time.time() - t0:7.1f}s] {model} done", file=sys.stderr)
    sh(["report", "--in", f"{args.out}/reports", "--out", f"{args.out}/summary.txt"])
    print(f"done in {time.time() - t0:.0f}s -> {args.out}/summary.txt", file=sys.stderr)


if __name__ == "__main__":
    main()
