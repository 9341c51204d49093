import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from owcnet.linkmetrics import (SinrParams, denominators, from_db, objective_value, receiver_noise_variance,
                                sinr, sinr_tensor, to_db)

SIGMA = 3.4965e-14


@pytest.mark.parametrize("density, bw, expected", [(4.47e-12, 1.75e9, 3.4965e-14), (1.0, 1.0, 1.0),
                                                    (2e-12, 1e9, 4.0e-15)])
def test_noise_variance(density, bw, expected):
    assert receiver_noise_variance(density, bw) == pytest.approx(expected, rel=1e-4)


@pytest.mark.parametrize("density, bw", [(0, 1), (1, 0), (-1, 1)])
def test_noise_variance_domain(density, bw):
    with pytest.raises(ValueError):
        receiver_noise_variance(density, bw)


def test_db_examples():
    assert to_db(1.0) == 0.0
    assert to_db(100.0) == pytest.approx(20.0)
    assert from_db(13.8) == pytest.approx(23.988, rel=1e-4)
    assert SinrParams().Z == pytest.approx(10**1.38, rel=1e-12)
    with pytest.raises(ValueError):
        to_db(0.0)
    with pytest.raises(ValueError):
        to_db(-3.0)


@given(st.floats(1e-12, 1e12))
def test_db_roundtrip(x):
    assert from_db(to_db(x)) == pytest.approx(x, rel=1e-12)


def test_sinr_single_ap():
    R = np.full((1, 1, 1, 1), 1e-12)
    S = np.ones((1, 1, 1, 1), dtype=int)
    g = sinr(R, R, S, SIGMA, 0, 0, 0, 0)
    assert g == pytest.approx(28.60, rel=1e-3)
    assert to_db(g) == pytest.approx(10 * np.log10(28.60), abs=1e-3)
    assert sinr(R, R, np.zeros_like(S), SIGMA, 0, 0, 0, 0) == 0.0


def test_sinr_interference_example():
    # user 0 served by AP 0; AP 1 on the same wavelength serves user 1
    R = np.zeros((2, 1, 2, 1))
    R[0, 0, 0, 0], R[0, 0, 1, 0] = 1e-12, 1e-13
    R[1, 0, 1, 0] = 1e-12
    S = np.zeros((2, 1, 2, 1), dtype=int)
    S[0, 0, 0, 0] = S[1, 0, 1, 0] = 1
    g = sinr(R, R, S, SIGMA, 0, 0, 0, 0)
    assert g == pytest.approx(1e-12 / (1e-13 + SIGMA), rel=1e-12)
    assert g == pytest.approx(7.409, rel=1e-3)


def test_sinr_excludes_own_links():
    # the user's own co-wavelength link on AP 1 is illumination, not interference
    R = np.zeros((1, 2, 2, 1))
    R[0, :, :, 0] = [[1e-12, 3e-13], [2e-13, 1e-12]]
    N = 0.5 * R
    S = np.zeros((1, 2, 2, 1), dtype=int)
    S[0, 0, 0, 0] = S[0, 1, 1, 0] = 1
    assert sinr(R, N, S, SIGMA, 0, 0, 0, 0) == pytest.approx(1e-12 / (0.5 * 3e-13 + SIGMA))


def test_sinr_index_errors():
    R = np.ones((1, 1, 1, 1))
    with pytest.raises(IndexError):
        sinr(R, R, R.astype(int), 1.0, 1, 0, 0, 0)


def test_sinr_rejects_double_occupancy():
    R = np.ones((3, 1, 2, 1))
    S = np.zeros((3, 1, 2, 1), dtype=int)
    S[0, 0, 0, 0] = S[1, 0, 1, 0] = S[2, 0, 1, 0] = 1
    with pytest.raises(ValueError):
        sinr(R, R, S, 1.0, 0, 0, 0, 0)


def _feasible_S(draw_bits, shape):
    """Random S with at most one link per (AP, wavelength) slot."""
    U, F, A, L = shape
    S = np.zeros(shape, dtype=np.int8)
    for a in range(A):
        for lam in range(L):
            c = draw_bits[a * L + lam] % (U * F + 1)
            if c:
                S[(c - 1) // F, (c - 1) % F, a, lam] = 1
    return S


shapes = st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))


@settings(max_examples=150, deadline=None)
@given(data=st.data(), shape=shapes)
def test_tensor_matches_loop(data, shape):
    R = data.draw(arrays(float, shape, elements=st.floats(0, 1e-11)))
    N = R * data.draw(st.floats(0, 1.5))
    bits = data.draw(st.lists(st.integers(0, 100), min_size=shape[2] * shape[3], max_size=shape[2] * shape[3]))
    S = _feasible_S(bits, shape)
    fast = sinr_tensor(R, N, S, SIGMA)
    for idx in np.ndindex(*shape):
        slow = sinr(R, N, S, SIGMA, *idx)
        assert fast[idx] == pytest.approx(slow, rel=1e-12, abs=0)


@settings(max_examples=80, deadline=None)
@given(data=st.data(), shape=shapes, k=st.floats(1.01, 10))
def test_sigma_monotone(data, shape, k):
    R = data.draw(arrays(float, shape, elements=st.floats(1e-14, 1e-11)))
    bits = data.draw(st.lists(st.integers(0, 100), min_size=shape[2] * shape[3], max_size=shape[2] * shape[3]))
    S = _feasible_S(bits, shape)
    g1 = sinr_tensor(R, R, S, SIGMA)
    g2 = sinr_tensor(R, R, S, SIGMA * k)
    on = S == 1
    assert np.all(g2[on] < g1[on])


@settings(max_examples=80, deadline=None)
@given(data=st.data(), scale=st.floats(0, 0.99))
def test_deassigning_interferer(data, scale):
    shape = (2, 2, 3, 2)
    R = data.draw(arrays(float, shape, elements=st.floats(1e-14, 1e-11)))
    S = np.zeros(shape, dtype=np.int8)
    S[0, 0, 0, 0] = 1
    S[1, 1, 2, 0] = 1  # interferer on AP 2, same wavelength, other user
    T = S.copy()
    T[1, 1, 2, 0] = 0
    # N = R: interference turns into equal illumination noise
    assert sinr(R, R, T, SIGMA, 0, 0, 0, 0) == pytest.approx(sinr(R, R, S, SIGMA, 0, 0, 0, 0), rel=1e-12)
    N = scale**2 * R
    assert sinr(R, N, T, SIGMA, 0, 0, 0, 0) > sinr(R, N, S, SIGMA, 0, 0, 0, 0)


def test_denominator_ignores_own_entry():
    rng = np.random.default_rng(3)
    R = rng.uniform(0, 1e-12, (2, 2, 2, 2))
    S = np.zeros(R.shape, dtype=int)
    S[1, 0, 1, 1] = 1
    d0 = denominators(R, R, S, SIGMA)
    S[0, 1, 0, 1] = 1
    d1 = denominators(R, R, S, SIGMA)
    assert d0[0, 1, 0, 1] == d1[0, 1, 0, 1]


def test_objective_examples():
    z = np.zeros((1, 1, 2, 1))
    assert objective_value(z, z) == 0.0
    g = np.array([28.60]).reshape(1, 1, 1, 1)
    assert objective_value(g, np.ones_like(g), 1000) == pytest.approx(1028.60)
    g2 = np.array([30.0, 25.0]).reshape(1, 1, 2, 1)
    assert objective_value(g2, np.ones_like(g2), 1000) == pytest.approx(2055)
    with pytest.raises(ValueError):
        objective_value(g, g2)


def test_params_validation():
    with pytest.raises(ValueError):
        SinrParams(K=0)
