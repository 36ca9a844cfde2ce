"""Regenerate prop_test_oracle.csv: pooled two-proportion z and two-sided p at 60 digits."""
import csv
import os
import random

import mpmath as mp

mp.mp.dps = 60

FIXED = [
    (60, 100, 40, 100),
    (40, 100, 60, 100),
    (50, 100, 50, 100),
    (1, 2, 0, 2),
    (0, 10, 10, 10),
    (117, 211, 607, 808),
    (3, 7, 5, 9),
    (999, 1000, 990, 1000),
    (1, 1000, 5, 1000),
    (250, 500, 275, 500),
]


def oracle(x1, n1, x2, n2):
    x1, n1, x2, n2 = (mp.mpf(v) for v in (x1, n1, x2, n2))
    p = (x1 + x2) / (n1 + n2)
    var = p * (1 - p) * (1 / n1 + 1 / n2)
    z = (x1 / n1 - x2 / n2) / mp.sqrt(var)
    return z, mp.erfc(abs(z) / mp.sqrt(2))


def main():
    rng = random.Random(20240601)
    cases = list(FIXED)
    while len(cases) < 50:
        n1, n2 = rng.randint(5, 3000), rng.randint(5, 3000)
        x1, x2 = rng.randint(0, n1), rng.randint(0, n2)
        if 0 < x1 + x2 < n1 + n2:
            cases.append((x1, n1, x2, n2))
    path = os.path.join(os.path.dirname(__file__), "prop_test_oracle.csv")
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x1", "n1", "x2", "n2", "z", "p_two_sided"))
        for c in cases:
            z, p = oracle(*c)
            w.writerow(c + (mp.nstr(z, 30), mp.nstr(p, 30)))


if __name__ == "__main__":
    main()
