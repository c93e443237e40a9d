"""Critical detector efficiency for a few pair numbers under majority voting.

The four-angle search (free angles and a non-maximally entangled state)
recovers eta = 2/3 for one pair; the symmetric planar family stops at
2/(1 + sqrt 2).  Takes a few minutes.

Run: python demos/detector_efficiency.py
"""

from multipair_bell.bell_eval import critical_efficiency
from multipair_bell.vote_tally import MAJORITY


def main():
    planar = critical_efficiency(1, MAJORITY, over="alpha_theta")
    print(f"M=1 planar settings: eta* = {planar.value:.4f}", flush=True)
    for M in [1, 2, 3]:
        res = critical_efficiency(M, MAJORITY, over="four_angle")
        print(f"M={M} four angles:     eta* = {res.value:.4f} ({res.flag}, {res.probes} probes)", flush=True)


if __name__ == "__main__":
    main()
