"""Time the tiled operator against the dense baseline over a range of sizes and tile widths.

    python3 scripts/bench_sweep.py --sizes 1024 2048 4096 --tiles 128 256 512
"""
import argparse
import json

from fracplap.kernel import KernelSpec
from fracplap.operator import scaling_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 1448, 2048, 2896, 4096])
    ap.add_argument("--tiles", type=int, nargs="+", default=[256])
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--repetitions", type=int, default=5)
    ap.add_argument("--json", default=None, help="also dump the raw report here")
    args = ap.parse_args()

    kernel = KernelSpec(0.5, args.p)
    reports = {}
    for tile in args.tiles:
        rep = scaling_sweep(args.sizes, kernel, args.repetitions, args.p, tile)
        reports[tile] = rep
        print(f"tile={tile}  slope={rep['slope']:.3f}")
        for row in rep["rows"]:
            print(f"  N={row['N']:6d}  tiled {row['time_tiled'] * 1e3:8.2f} ms  dense {row['time_naive'] * 1e3:8.2f} ms"
                  f"  x{row['speedup']:.2f}  rel diff {row['rel_diff']:.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(reports, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
