import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multipair_bell.errors import InvalidInputError
from multipair_bell.pair_core import (
    BlochVector,
    FourAngleSettings,
    PairOutcomeDist,
    PairState,
    PlanarSettings,
    expand_settings,
    planar_pair_probs,
    single_pair_probs,
)

from oracles import trace_probs

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)
thetas = st.floats(0.0, math.pi / 4, allow_nan=False)
weights = st.floats(0.0, 1.0, allow_nan=False)


def test_bloch_vector_rejects_non_unit():
    with pytest.raises(InvalidInputError):
        BlochVector(1.0, 0.0, 0.1)
    with pytest.raises(InvalidInputError):
        BlochVector(float("nan"), 0.0, 1.0)


def test_projectors_resolve_identity():
    n = BlochVector(0.6, 0.0, 0.8)
    np.testing.assert_allclose(n.projector(+1) + n.projector(-1), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(n.projector(+1) @ n.projector(+1), n.projector(+1), atol=1e-15)


def test_planar_settings_layout():
    a1, a2, b1, b2 = PlanarSettings(0.3).angles()
    assert (a1, a2, b1, b2) == (0.0, 0.6, 0.3, -0.3)
    vecs = expand_settings(FourAngleSettings(0.1, 0.2, 0.3, 0.4))
    assert vecs[3] == BlochVector.planar(0.4)


def test_pair_state_density_matrix_is_a_state():
    rho = PairState(0.4, 0.7).density_matrix()
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho).min() > -1e-15
    with pytest.raises(InvalidInputError):
        PairState(0.1, 1.5)


@settings(max_examples=100, deadline=None)
@given(thetas, weights, angles, angles)
def test_single_pair_probs_match_explicit_kets(theta, w, a, b):
    got = single_pair_probs(PairState(theta, w), BlochVector.planar(a), BlochVector.planar(b))
    np.testing.assert_allclose(got.as_tuple(), trace_probs(theta, w, a, b), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(thetas, weights, angles, angles)
def test_vectorised_probs_match_trace_formula(theta, w, a, b):
    got = [float(p) for p in planar_pair_probs(theta, w, a, b)]
    np.testing.assert_allclose(got, trace_probs(theta, w, a, b), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(thetas, weights, angles, angles, angles)
def test_no_signalling(theta, w, a, b, b2):
    p1 = PairOutcomeDist(*(float(p) for p in planar_pair_probs(theta, w, a, b)))
    p2 = PairOutcomeDist(*(float(p) for p in planar_pair_probs(theta, w, a, b2)))
    assert p1.p_plus_a == pytest.approx(p2.p_plus_a, abs=1e-12)
    assert sum(p1.as_tuple()) == pytest.approx(1.0, abs=1e-12)


def test_werner_mixture_is_linear():
    pure = np.array(planar_pair_probs(0.5, 1.0, 0.2, 1.1))
    noisy = np.array(planar_pair_probs(0.5, 0.3, 0.2, 1.1))
    np.testing.assert_allclose(noisy, 0.3 * pure + 0.7 * 0.25, atol=1e-15)


def test_maximally_entangled_correlation():
    # cos^2((a - b)/2) for both-equal outcomes
    p = planar_pair_probs(math.pi / 4, 1.0, 0.0, math.pi / 3)
    assert float(p[0] + p[3]) == pytest.approx(math.cos(math.pi / 6) ** 2)


def test_broadcasting_shapes():
    a = np.linspace(0, 1, 5)[:, None]
    b = np.linspace(0, 1, 3)[None, :]
    out = planar_pair_probs(math.pi / 4, 1.0, a, b)
    assert all(p.shape == (5, 3) for p in out)
