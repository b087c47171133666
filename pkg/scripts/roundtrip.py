"""Accelerant -> potential -> (F, G) -> recovered accelerant, at several N.

Usage: python scripts/roundtrip.py [--family exk|random] [--seed S] [--levels 50,100,200]
"""
import argparse
import time

from krein.accelerant import potential_of
from krein.examples import exk_fixture, expk_family, random_exk
from krein.kreinsys import fg_from_potential
from krein.lincore import maxnorm
from krein.resultant import recover_accelerant


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", choices=["exk", "random"], default="exk")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--levels", default="50,100,200")
    ns = ap.parse_args()
    print(f"{'N':>5} {'sup error':>11} {'herm defect':>11} {'seconds':>8}")
    for N in (int(x) for x in ns.levels.split(",")):
        b = exk_fixture(1.0, N) if ns.family == "exk" else expk_family(random_exk(ns.seed), 1.0, N)
        start = time.perf_counter()
        F, G, _ = fg_from_potential(potential_of(b.kernel))
        k, rep = recover_accelerant(F, G)
        elapsed = time.perf_counter() - start
        err = max(maxnorm(k.plus - b.kernel.k_plus), maxnorm(k.minus - b.kernel.k_minus))
        print(f"{N:5d} {err:11.3e} {rep.hermitian_defect:11.3e} {elapsed:8.2f}")


if __name__ == "__main__":
    main()
