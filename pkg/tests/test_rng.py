import numpy as np
from scipy import stats

from xyfluct.rng import CounterRNG, normal_pair, philox4x32, stream_key, uniform_pair

U = np.uint64


def test_philox_known_answers():
    # Random123 kat_vectors for philox4x32_10
    assert philox4x32(U(0), U(0), U(0), U(0), U(0), U(0)) == (
        0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)
    m = U(0xFFFFFFFF)
    assert philox4x32(m, m, m, m, m, m) == (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)
    pi_ctr = [U(0x243F6A88), U(0x85A308D3), U(0x13198A2E), U(0x03707344)]
    assert philox4x32(*pi_ctr, U(0xA4093822), U(0x299F31D0)) == (
        0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)


def test_draws_are_pure_functions_of_counter():
    k0, k1 = stream_key(7, 3)
    assert uniform_pair(k0, k1, 12, 5, 0) == uniform_pair(k0, k1, 12, 5, 0)
    assert uniform_pair(k0, k1, 12, 5, 0) != uniform_pair(k0, k1, 12, 5, 1)
    assert uniform_pair(k0, k1, 12, 5, 0) != uniform_pair(k0, k1, 13, 5, 0)


def test_stream_keys_distinct():
    keys = {tuple(map(int, stream_key(s, c))) for s in range(20) for c in range(20)}
    assert len(keys) == 400
    assert stream_key(1, 2) != stream_key(1, 2, ":env")


def test_uniform_and_normal_distribution():
    rng = CounterRNG(5)
    u = rng.uniform(50_000)
    assert u.min() >= 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 0.01
    z = rng.normal(50_000)
    assert stats.kstest(z, "norm").pvalue > 0.01
    k0, k1 = stream_key(1, 1)
    pairs = np.array([normal_pair(k0, k1, 0, i, 0) for i in range(20_000)])
    assert abs(np.corrcoef(pairs.T)[0, 1]) < 0.03


def test_counter_rng_replays():
    a, b = CounterRNG(3, 1), CounterRNG(3, 1)
    assert np.array_equal(a.uniform(10), b.uniform(10))
    assert not np.array_equal(a.uniform(10), CounterRNG(3, 2).uniform(10))
    x = a.integers(7, 1000)
    assert x.min() >= 0 and x.max() <= 6
