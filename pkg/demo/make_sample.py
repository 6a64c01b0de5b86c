"""Regenerate sample_members.csv: N counts drawn from Gamma(k=4, theta=50 * shell)."""
import csv

import numpy as np

N_MEMBERS, N_TIMES, N_SHELLS = 200, 5, 4


def main(path="sample_members.csv", seed=2024):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["member", "time", "shell", "S", "D", "N"])
        for m in range(N_MEMBERS):
            for t in range(N_TIMES):
                for i in range(1, N_SHELLS + 1):
                    s = rng.normal(500.0, 20.0)
                    d = rng.normal(200.0, 15.0)
                    n = rng.gamma(4.0, 50.0 * i)
                    w.writerow([m, repr(float(t)), i, repr(s), repr(d), repr(n)])


if __name__ == "__main__":
    main()
