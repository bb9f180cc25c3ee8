import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from unmix.stats import (
    SYMMETRY_MAP,
    DegenerateSignalError,
    accumulate,
    cov,
    cumulants,
    display_envelope,
    lagged_rho,
    q_index,
    rho,
    rho_maxlag,
    slide_update,
)

from conftest import complex_laplace


def direct_cumulant(y, i, j, k, l):
    """Cum(y_i, y_j*, y_k*, y_l) from raw moments, written out term by term."""
    a, b, c, d = y[:, i], np.conj(y[:, j]), np.conj(y[:, k]), y[:, l]
    E = np.mean
    return E(a * b * c * d) - E(a * b) * E(c * d) - E(a * c) * E(b * d) - E(a * d) * E(b * c)


def rel_err(x, y):
    x, y = np.asarray(x), np.asarray(y)
    return np.max(np.abs(x - y)) / max(np.max(np.abs(y)), 1e-300)


def sums_close(s1, s2, rtol):
    assert s1.n == s2.n
    for x, y in zip(s1.arrays(), s2.arrays()):
        assert rel_err(x, y) <= rtol


def test_constant_stream():
    s = accumulate(np.tile([1.0, 0.0], (4, 1)))
    assert s.power[0] == 4 and s.power[1] == 0


def test_zero_block_and_errors():
    s = accumulate(np.zeros((10, 2)))
    assert all(np.all(a == 0) for a in s.arrays())
    with pytest.raises(ValueError):
        accumulate(np.zeros((0, 2)))


def test_block_additivity(rng):
    A, B = complex_laplace(rng, (30, 2)), complex_laplace(rng, (50, 2))
    sums_close(accumulate(A) + accumulate(B), accumulate(np.vstack([A, B])), 1e-12)


def test_slide_example(rng):
    y = complex_laplace(rng, (120, 2))
    got = slide_update(accumulate(y[:100]), y[:20], y[100:120])
    sums_close(got, accumulate(y[20:120]), 1e-9)


def test_slide_noop_and_errors(rng):
    y = complex_laplace(rng, (100, 2))
    s = accumulate(y)
    sums_close(slide_update(s, y[:20], y[:20]), s, 1e-12)
    with pytest.raises(ValueError):
        slide_update(s, y, y)


def test_slide_long_run_drift(rng):
    y = complex_laplace(rng, (100 + 50 * 20, 2))
    s = accumulate(y[:100])
    for u in range(50):
        s = slide_update(s, y[u * 20 : u * 20 + 20], y[100 + u * 20 : 120 + u * 20])
    fresh = accumulate(y[1000:1100])
    sums_close(s, fresh, 1e-7)
    assert rel_err(cumulants(s).values, cumulants(fresh).values) <= 1e-7


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), N=st.integers(4, 150), delta=st.integers(1, 30))
def test_slide_equals_scratch_property(seed, N, delta):
    if delta >= N:
        delta = N - 1
    y = complex_laplace(np.random.default_rng(seed), (N + delta, 2))
    got = slide_update(accumulate(y[:N]), y[:delta], y[N:])
    want = accumulate(y[delta:])
    sums_close(got, want, 1e-9)


def test_cumulants_match_direct_definition(rng):
    y = complex_laplace(rng, (500, 2)) + 0.3
    c = cumulants(accumulate(y))
    for m in range(1, 17):
        assert abs(c.q(m) - direct_cumulant(y, *q_index(m))) <= 1e-12
    assert_allclose(c.R, np.cov(y.T, bias=True), atol=1e-12)


def test_symmetry_map_exact(rng):
    c = cumulants(accumulate(complex_laplace(rng, (200, 2))))
    groups = {}
    for m, (slot, conj) in SYMMETRY_MAP.items():
        groups.setdefault(slot, []).append((m, conj))
    for members in groups.values():
        m0, c0 = members[0]
        for m, cj in members[1:]:
            v = c.q(m)
            ref = c.q(m0) if cj == c0 else np.conj(c.q(m0))
            assert v == ref
    assert c.q(2) == np.conj(c.q(3)) == np.conj(c.q(5)) == c.q(9)
    assert c.q(4) == c.q(6) == c.q(11) == c.q(13)
    assert c.q(7) == np.conj(c.q(10))
    assert c.q(8) == c.q(15) == np.conj(c.q(12)) == np.conj(c.q(14))
    for m in (1, 16):
        assert np.imag(c.q(m)) == 0
    assert_allclose(c.R, np.conj(c.R.T), atol=1e-12)


def test_gaussian_cumulants_vanish(rng):
    y = (rng.standard_normal((20000, 2)) + 1j * rng.standard_normal((20000, 2))) / np.sqrt(2)
    c = cumulants(accumulate(y))
    assert np.max(np.abs(c.tensor())) <= 0.05


def test_uniform_kurtosis(rng):
    y = rng.uniform(-1, 1, (50000, 2)).astype(complex)
    assert abs(cumulants(accumulate(y)).q(1) - (-2 / 15)) <= 0.01


def test_dependent_copy():
    y1 = complex_laplace(np.random.default_rng(3), 400)
    c = cumulants(accumulate(np.stack([y1, y1], axis=-1)))
    assert abs(c.q(4) - c.q(1)) <= 1e-12


def test_cross_cumulants_shrink_with_n(rng):
    errs = []
    for N in (500, 50000):
        y = complex_laplace(rng, (N, 2))
        K = cumulants(accumulate(y)).tensor()
        cross = [abs(K[q_index(m)]) for m in range(2, 16) if len(set(q_index(m))) > 1]
        errs.append(max(cross) / min(abs(K[0, 0, 0, 0]), abs(K[1, 1, 1, 1])))
    assert errs[1] < errs[0] and errs[1] < 0.05


def test_cumulants_need_four():
    with pytest.raises(ValueError):
        cumulants(accumulate(np.ones((3, 2))))


def test_cov_examples(rng):
    assert cov(np.ones(5), np.arange(5.0)) == 0
    assert cov([1, -1, 1, -1], [1, -1, 1, -1]) == pytest.approx(1.0)
    a, b = rng.standard_normal((2, 10000))
    assert abs(cov(a, b)) <= 0.05 * a.std() * b.std()
    z = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    w = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    assert_allclose(cov(z, w), np.conj(cov(w, z)))
    with pytest.raises(ValueError):
        cov(np.ones(3), np.ones(4))


def test_rho_examples(rng):
    a = rng.standard_normal(100)
    assert rho(a, a) == pytest.approx(1.0)
    assert rho(a, -a) == pytest.approx(-1.0)
    t = np.arange(1024)
    assert abs(rho(np.sin(2 * np.pi * 4 * t / 1024), np.cos(2 * np.pi * 4 * t / 1024))) <= 0.01
    with pytest.raises(DegenerateSignalError):
        rho(np.ones(10), a[:10])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), alpha=st.floats(-100, 100).filter(lambda v: abs(v) > 1e-3),
       c=st.floats(-100, 100))
def test_rho_affine_invariance(seed, alpha, c):
    a, b = np.random.default_rng(seed).standard_normal((2, 64))
    assert abs(rho(alpha * a + c, b) - np.sign(alpha) * rho(a, b)) <= 1e-10


def test_rho_maxlag_shift(rng):
    a = rng.standard_normal(2000)
    for k0 in (-7, 0, 5, 20):
        b = np.roll(a, k0)
        assert rho_maxlag(a, b, 20) == pytest.approx(1.0, abs=1e-9)
    assert rho_maxlag(a, rng.standard_normal(2000), 20) <= 0.1
    with pytest.raises(ValueError):
        rho_maxlag(a[:30], a[:30], 20)


def test_lag_convention(rng):
    a = rng.standard_normal(300)
    b = np.concatenate([np.zeros(4), a[:-4]])  # b(t + 4) = a(t)
    r = lagged_rho(a, b, 6)
    assert int(np.argmax(r)) - 6 == 4


def test_lagged_rho_uses_overlap_only(rng):
    a, b = rng.standard_normal((2, 80))
    r = lagged_rho(a, b, 5)
    for k in range(-5, 6):
        x, y = (a[: 80 - k], b[k:]) if k >= 0 else (a[-k:], b[: 80 + k])
        assert r[k + 5] == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s1=st.floats(0.01, 100), s2=st.floats(0.01, 100))
def test_rho_maxlag_symmetric_and_scale_free(seed, s1, s2):
    a, b = np.random.default_rng(seed).standard_normal((2, 200))
    base = rho_maxlag(a, b, 20)
    assert abs(rho_maxlag(b, a, 20) - base) <= 1e-12
    assert abs(rho_maxlag(s1 * a, s2 * b, 20) - base) <= 1e-12


def test_envelope_constant_and_zero():
    fs = 16000
    env = display_envelope(np.full(8000, 0.5), fs)
    assert_allclose(env, 1.0, atol=1e-9)
    assert np.all(display_envelope(np.zeros(4000), fs) == 0)
    with pytest.raises(ValueError):
        display_envelope(np.ones(100), 150)


def test_envelope_sine_ripple():
    fs = 16000
    t = np.arange(fs) / fs
    env = display_envelope(np.sin(2 * np.pi * 1000 * t), fs)[1000:-1000]
    assert (env.max() - env.min()) / env.max() <= 0.05


def test_envelope_tracks_modulation():
    fs = 16000
    t = np.arange(2 * fs) / fs
    m = 1 + 0.8 * np.sin(2 * np.pi * 5 * t)
    env = display_envelope(m * np.sin(2 * np.pi * 1000 * t), fs)
    assert np.corrcoef(env[2000:-2000], m[2000:-2000])[0, 1] >= 0.95
