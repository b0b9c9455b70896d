import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from inkpd import emd, measures as M


def test_shannon_examples():
    assert M.shannon_entropy(np.full(20, 2.5)) == 0.0
    uniform = (np.arange(16 * 10) // 10).astype(float)  # 10 samples in each of 16 equal bins
    assert abs(M.shannon_entropy(uniform) - 4.0) < 1e-12
    assert M.shannon_from_probs([0.5, 0.25, 0.25]) == pytest.approx(1.5, abs=1e-12)


def test_renyi_examples():
    four = np.repeat([0.0, 5.0, 10.0, 15.0], 7)
    assert M.renyi_entropy(four, 2) == pytest.approx(2.0, abs=1e-12)
    assert M.renyi_from_probs([0.5, 0.5], 2) == pytest.approx(1.0, abs=1e-12)
    assert M.renyi_from_probs([0.5, 0.25, 0.25], 3) == pytest.approx(-0.5 * math.log2(0.15625), abs=1e-12)
    assert M.renyi_from_probs([0.5, 0.25, 0.25], 3) == pytest.approx(1.3390, abs=1e-4)
    with pytest.raises(ValueError):
        M.renyi_entropy(four, 1)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(2, 200), elements=st.floats(-1e3, 1e3)))
def test_entropy_ordering(s):
    # Renyi entropies are nonincreasing in the order and bounded by log2(bins)
    h1, h2, h3 = M.shannon_entropy(s), M.renyi_entropy(s, 2), M.renyi_entropy(s, 3)
    assert -1e-12 <= h3 <= h2 + 1e-12 <= h1 + 2e-12 <= 4.0 + 3e-12


def test_energy_examples():
    assert M.conventional_energy([1, 2, 3]) == 14
    assert M.conventional_energy(np.zeros(9)) == 0
    rng = np.random.default_rng(1)
    s = rng.standard_normal(100)
    assert M.conventional_energy(3.5 * s) == pytest.approx(3.5 ** 2 * M.conventional_energy(s), rel=1e-12)


def test_teager_kaiser_examples():
    np.testing.assert_array_equal(M.teager_kaiser(np.full(6, 4.0)), 0.0)
    assert M.teager_kaiser(np.array([1.0, 2.0, 3.0]))[0] == 1.0
    A, w = 2.5, 0.2
    psi = M.teager_kaiser(A * np.sin(w * np.arange(400)))
    assert np.max(np.abs(psi / (A ** 2 * np.sin(w) ** 2) - 1)) < 0.01
    with pytest.raises(ValueError):
        M.teager_kaiser(np.array([1.0, 2.0]))


def test_snr_db_rules():
    assert M.snr_db(100.0, 1.0) == pytest.approx(20.0)
    assert M.snr_db(5.0, 0.0) == M.SNR_CAP_DB
    assert M.snr_db(0.0, 5.0) == -M.SNR_CAP_DB
    assert M.snr_db(0.0, 0.0) == 0.0


def test_snr_increases_as_dither_shrinks():
    # dither slope (amp * 2*pi*200) exceeds the tone's (2*pi) at every level, so
    # the dither always shows up as extrema and IMF 1 can isolate it
    t = np.arange(2000) / 1000
    tone = np.sin(2 * np.pi * 1 * t)
    snrs = []
    for amp in (0.1, 0.03, 0.01):
        s = tone + amp * np.sin(2 * np.pi * 200 * t)
        snrs.append(M.energy_snr(s, emd.decompose(s), "CE").snr_db)
    assert snrs[0] > 0 and snrs[0] < snrs[1] < snrs[2]


def test_energy_snr_needs_imfs():
    with pytest.raises(ValueError):
        M.energy_snr(np.full(10, 1.0), emd.decompose(np.full(10, 1.0)), "CE")


def test_intrinsic_measures():
    t = np.arange(1000) / 1000
    tone = np.sin(2 * np.pi * 12 * t)
    one = emd.ImfSet((tone,), np.zeros_like(tone), tone.size)
    im = M.intrinsic_measures(one)
    assert im[1]["ce"] == M.conventional_energy(tone)
    assert im[2]["ce"] is None and im[3]["shannon"] is None
    none = M.intrinsic_measures(emd.decompose(np.full(30, 2.0)))
    assert all(v is None for k in none for v in none[k].values())
    s = np.sin(2 * np.pi * 50 * t) + np.sin(2 * np.pi * 5 * t)
    imfs = emd.decompose(s)
    split = M.intrinsic_measures(imfs)
    assert split[1]["ce"] + split[2]["ce"] == pytest.approx(M.conventional_energy(s), rel=0.10)
