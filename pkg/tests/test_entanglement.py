import math

import numpy as np
import pytest

from multipair_bell.entanglement_measures import (
    entanglement_distinguishable,
    entanglement_indistinguishable,
    ratio_report,
    spin_sector_weights,
)
from multipair_bell.errors import InvalidInputError

import oracles


def test_two_pairs_closed_form():
    assert entanglement_distinguishable(2) == pytest.approx(0.75 * math.log2(3), abs=1e-12)


@pytest.mark.parametrize("M", [2, 4])
def test_matches_permutation_twirl_oracle(M):
    assert entanglement_distinguishable(M) == pytest.approx(oracles.pairing_forgotten_entanglement(M), abs=1e-9)


@pytest.mark.parametrize("M", [2, 10, 200, 1000])
def test_sector_weights_sum_to_one(M):
    j, w = spin_sector_weights(M)
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-12)
    assert np.all(w > 0) and j[-1] == M // 2


def test_sector_weights_count_dimensions():
    # (2j+1) * multiplicity summed over sectors is the Hilbert-space dimension 2^M
    M = 8
    j, w = spin_sector_weights(M)
    mult = [math.comb(M, M // 2 - k) - (math.comb(M, M // 2 - k - 1) if k < M // 2 else 0) for k in j]
    assert sum((2 * k + 1) * m for k, m in zip(j, mult)) == 2**M


def test_indistinguishable_is_log_dimension():
    assert entanglement_indistinguishable(7) == pytest.approx(3.0)
    with pytest.raises(InvalidInputError):
        entanglement_indistinguishable(0)
    with pytest.raises(InvalidInputError):
        spin_sector_weights(3)


def test_ratio_report_fields():
    (rep,) = ratio_report([4])
    assert rep.M == 4 and rep.ratio == pytest.approx(rep.E_i / rep.E_d)
