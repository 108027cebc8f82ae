"""Compiled against pure-Python dynamics kernels, and sparse against dense decomposition.

Usage::

    python3 benchmarks/bench_kernels.py --repetitions 500 --json kernels.json
"""
import argparse
import json

from sparsewbc.dense_ref import bench
from sparsewbc.rbd import kernels
from sparsewbc.rbd.kernel_bench import bench_kernels


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repetitions", type=int, default=200)
    p.add_argument("--sizes", default="7,23,40", help="comma-separated joint counts")
    p.add_argument("--base-dim", type=int, choices=(3, 6), default=6)
    p.add_argument("--json", help="write the report here")
    args = p.parse_args(argv)

    report = {"backends": sorted(kernels.BACKENDS), "kernels": [], "decomposition": None}
    print(f"available backends: {', '.join(report['backends'])}")
    print(f"{'n':>4} {'kernel':<11}" + "".join(f"{b + ' us':>14}" for b in report["backends"]) + f"{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        r = bench_kernels(repetitions=args.repetitions, n=n, base_dim=args.base_dim)
        report["kernels"].append({"n": n, **r})
        for k in ("kinematics", "rnea", "crba"):
            row = "".join(f"{r['backends'][b][k]:14.1f}" for b in report["backends"])
            speed = f"{r['speedup'][k]:9.0f}x" if "speedup" in r else f"{'-':>10}"
            print(f"{n:>4} {k:<11}{row}{speed}")

    d = bench(repetitions=args.repetitions)
    report["decomposition"] = d
    print(f"\ndecomposition at n={d['n']} k_s={d['k_s']} k_f={d['k_f']}: "
          f"sparse {d['sparse_decompose_ms']:.3f} ms, dense {d['dense_decompose_ms']:.3f} ms, ratio {d['ratio']:.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
