"""Error tables and N -> 2N ratios for the resolvent and potential oracles.

Runs the scalar k(t) = -e^{it} instance and a 2x2 non-commuting realization
side by side.  Usage: python scripts/convergence.py [--seed S] [--levels 50,100,200,400]
"""
import argparse

import numpy as np

from krein.accelerant import potential_of, solve_resolvent
from krein.examples import exk_fixture, expk_family, random_exk
from krein.lincore import maxnorm


def errors(bundle, N):
    k = bundle.kernel
    t = k.grid.nodes
    gam = solve_resolvent(k, N)
    ref = np.array([[bundle.gamma_closed(1.0, ti, si) for si in t] for ti in t])
    err_g = maxnorm(gam.gamma - ref)
    cl = np.array([bundle.potential_closed(x) for x in t])
    err_a = maxnorm(potential_of(k).a - cl)
    err_l = maxnorm(potential_of(k, origin="limit").a - cl)
    return err_g, err_a, err_l


def table(name, make, levels):
    print(f"\n{name}")
    print(f"{'N':>5} {'resolvent':>11} {'ratio':>6} {'potential':>11} {'ratio':>6} {'pot(limit)':>11} {'ratio':>6}")
    prev = None
    for N in levels:
        cur = errors(make(N), N)
        cells = []
        for i, e in enumerate(cur):
            r = f"{prev[i] / e:6.2f}" if prev and e > 0 else "     -"
            cells.append(f"{e:11.3e} {r}")
        print(f"{N:5d} " + " ".join(cells))
        prev = cur


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--levels", default="50,100,200,400")
    ns = ap.parse_args()
    levels = [int(x) for x in ns.levels.split(",")]
    table("k(t) = -e^{it}, T = 1", lambda N: exk_fixture(1.0, N), levels)
    rz = random_exk(ns.seed)
    table(f"random 2x2 realization (seed {ns.seed}), T = 1", lambda N: expk_family(rz, 1.0, N), levels)


if __name__ == "__main__":
    main()
