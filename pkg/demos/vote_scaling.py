"""How the best CH value and the Werner-noise threshold fall with the number of pairs.

Run: python demos/vote_scaling.py
"""

from multipair_bell.bell_eval import Scenario, maximize_ch, noise_resistance
from multipair_bell.scaling import power_fit
from multipair_bell.vote_tally import MAJORITY, THREE_QUARTERS, UNANIMITY

RULES = {"majority": MAJORITY, "3/4": THREE_QUARTERS, "unanimity": UNANIMITY}
SIZES = [1, 2, 4, 8, 12, 16]


def main():
    print(f"{'M':>3} " + " ".join(f"{name:>22}" for name in RULES))
    table = {name: [] for name in RULES}
    for M in SIZES:
        cells = []
        for name, rule in RULES.items():
            best = maximize_ch(Scenario(M=M, rule=rule), "alpha_theta")
            eps = noise_resistance(Scenario(M=M, rule=rule), "alpha_theta", tol=1e-5)
            table[name].append((M, best.value, eps.value))
            cells.append(f"CH={best.value:.4f} eps={eps.value:.4f}")
        print(f"{M:>3} " + " ".join(f"{c:>22}" for c in cells))

    print("\nlog-log slopes over M >= 4")
    for name, rows in table.items():
        rows = [r for r in rows if r[0] >= 4]
        ch = power_fit([r[0] for r in rows], [r[1] for r in rows])
        eps = power_fit([r[0] for r in rows], [r[2] for r in rows])
        print(f"  {name:>10}: CH slope {ch.slope:+.3f}, noise slope {eps.slope:+.3f}")


if __name__ == "__main__":
    main()
