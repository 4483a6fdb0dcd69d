"""Refinement study: Hardy norm, A1 constant and boundedness ratios as h halves.

    python3 scripts/refinement_study.py --signal dbump:1,0,1 --exponent sin:1.5,0.4 --levels 4
"""
import argparse

from varhardy.cli import parse_signal
from varhardy.grid import Grid, ScaleLadder
from varhardy.sio import boundedness_experiment, hilbert_kernel
from varhardy.smoothmax import default_order, hardy_norm, make_dictionary
from varhardy.vlebesgue import MP0Context, parse_exponent
from varhardy.weights import a1_constant, power_weight


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--signal", default="dbump:1,0,1")
    ap.add_argument("--exponent", default="sin:1.5,0.4")
    ap.add_argument("--p0", type=float, default=None)
    ap.add_argument("--L", type=float, default=8.0)
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()
    print(f"{'h':>10s} {'||f||_H':>14s} {'[|x|^-1/2]_A1':>14s} {'||Hf||/||f||_H':>16s}")
    prev = None
    for k in range(5, 5 + args.levels):
        g = Grid(1, args.L, 2.0**-k)
        p = parse_exponent(args.exponent, g)
        ctx = MP0Context.create(p, p0=args.p0, B=4.0)
        D = make_dictionary(1, default_order(1, ctx.p0), ScaleLadder(1 / 8, args.L))
        f = parse_signal(args.signal, g)
        hn = hardy_norm(f, p, D)
        a1 = a1_constant(power_weight(g, 0.5))
        ratio = boundedness_experiment(hilbert_kernel(), [f], p, ctx, D, "L").sup
        delta = "" if prev is None else f"   (delta {hn / prev - 1:+.2%})"
        print(f"{g.h:10.6f} {hn:14.6g} {a1:14.4f} {ratio:16.6g}{delta}")
        prev = hn


if __name__ == "__main__":
    main()
