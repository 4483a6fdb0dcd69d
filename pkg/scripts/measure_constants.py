"""Recompute the corpus constants frozen in tests/test_acceptance.py.

    python3 scripts/measure_constants.py [--h 0.03125]
"""
import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from test_acceptance import ATOMIC_CORPUS, CORPUS_20, CZ_CORPUS, moment_free  # noqa: E402

from varhardy.atomic import atomic_norm, canonical_decompose
from varhardy.cli import parse_signal
from varhardy.czwhitney import cz_decompose
from varhardy.grid import Grid, ScaleLadder
from varhardy.smoothmax import comparability_ratios, default_order, grand_max, make_dictionary
from varhardy.vlebesgue import MP0Context, luxemburg_norm, parse_exponent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--h", type=float, default=1 / 32)
    h = ap.parse_args().h

    lad = ScaleLadder(1 / 8, 4)
    g = Grid(1, 8.0, h)
    p = parse_exponent("sin:1.5,0.4", g)
    D = make_dictionary(1, default_order(1, 0.55), lad)
    rows = [comparability_ratios(parse_signal(s, g), p, D, lad) for s in CORPUS_20]
    for k in rows[0]:
        vals = [r[k] for r in rows]
        print(f"comparability {k:15s} [{min(vals):.5g}, {max(vals):.5g}]")

    g = Grid(1, 4.0, h)
    p = parse_exponent("sin:1.5,0.4", g)
    ctx = MP0Context.create(p, p0=0.45, B=4.0)
    D = make_dictionary(1, default_order(1, 0.45), lad)
    cz = {"c_g": 0.0, "cz_bk": 0.0, "cz_bk2": 0.0}
    for s in CZ_CORPUS:
        f = parse_signal(s, g)
        G = grand_max(f, D)
        for frac in (0.1, 0.5):
            c = cz_decompose(f, frac * G.sup(), ctx, D, grand=G).constants
            for k in cz:
                cz[k] = max(cz[k], c[k])
    print("cz maxima", {k: float(f"{v:.4g}") for k, v in cz.items()})

    ratios = []
    for s in ATOMIC_CORPUS:
        f = moment_free(parse_signal(s, g), ctx.d)
        ratios.append(atomic_norm(canonical_decompose(f, p, ctx, D), p) / luxemburg_norm(grand_max(f, D), p))
    print(f"atomic/grand corpus constants [{min(ratios):.4g}, {max(ratios):.4g}]")
    print("per signal", np.array2string(np.array(ratios), precision=4))


if __name__ == "__main__":
    main()
