import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdplab.core import Pmf
from rdplab.nletter_oracle import exhaustive_support_tv
from rdplab.source_models import SourceModel, block_pmf, entropy_rate
from rdplab.spectrum import (best_support, best_support_tv, f_spectrum, f_spectrum_mc,
                             rate_for_perception, self_information_law, spectrum_rows,
                             write_spectrum_csv)

from conftest import random_pmf


def brute_tail(source, n, R):
    # direct enumeration of every block, independent of the convolution path
    p = source.symbol_pmf.probs
    total = 0.0
    for block in itertools.product(range(len(p)), repeat=n):
        prob = math.prod(p[i] for i in block)
        if prob > 0 and -math.log2(prob) / n >= R - 1e-10:
            total += prob
    return total


def test_bernoulli_two_letter_levels():
    src = SourceModel.iid([0.7, 0.3])
    rows = spectrum_rows(src, 2)
    levels = [round(f, 12) for _, f in rows]
    assert levels == [1.0, 0.51, 0.09, 0.0]
    assert rows[-1][0] == math.inf
    assert rows[0][0] == pytest.approx(-math.log2(0.7))


def test_uniform_spectrum_is_a_step():
    src = SourceModel.iid([0.25] * 4)
    assert f_spectrum(src, 5, 2.0) == pytest.approx(1.0)
    assert f_spectrum(src, 5, 2.0 + 1e-6) == 0.0
    assert rate_for_perception(src, 5, 0.0) == pytest.approx(2.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.floats(0, 3))
def test_exact_matches_enumeration(seed, n, R):
    rng = np.random.default_rng(seed)
    src = SourceModel.iid(random_pmf(rng, 3).probs)
    assert f_spectrum(src, n, R) == pytest.approx(brute_tail(src, n, R), abs=1e-12)


def test_markov_law_sums_to_one():
    src = SourceModel.markov([[0.9, 0.1], [0.4, 0.6]], [0.8, 0.2])
    values, probs = self_information_law(src, 6)
    assert probs.sum() == pytest.approx(1.0)
    assert np.all(np.diff(values) > 0)
    bp = block_pmf(src, 6)
    expected = sum(q for q in bp.probs if q > 0 and -math.log2(q) / 6 >= 0.8 - 1e-10)
    assert f_spectrum(src, 6, 0.8) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("source", [SourceModel.iid([0.7, 0.3]),
                                    SourceModel.markov([[0.9, 0.1], [0.3, 0.7]], [0.75, 0.25])])
@pytest.mark.parametrize("R", [0.4, 0.7, 0.9])
def test_mc_agrees_with_exact(source, R):
    exact = f_spectrum(source, 10, R)
    est, se = f_spectrum_mc(source, 10, R, trials=40_000, seed=3)
    assert abs(est - exact) <= 4 * max(se, 1e-3)


def test_mc_reproducible():
    src = SourceModel.iid([0.6, 0.4])
    assert f_spectrum_mc(src, 8, 0.9, seed=11) == f_spectrum_mc(src, 8, 0.9, seed=11)
    assert f_spectrum(src, 8, 0.9, mode="mc", seed=11) == f_spectrum_mc(src, 8, 0.9, seed=11)[0]


def test_spectrum_monotone_in_r():
    src = SourceModel.iid([0.5, 0.3, 0.2])
    vals = [f_spectrum(src, 6, r) for r in np.linspace(0, 3, 61)]
    assert np.all(np.diff(vals) <= 1e-15)
    assert vals[0] == pytest.approx(1.0)


def test_rate_for_perception_properties():
    src = SourceModel.iid([0.7, 0.3])
    rates = [rate_for_perception(src, 12, S) for S in np.linspace(0, 1, 21)]
    assert np.all(np.diff(rates) <= 1e-15)
    assert rates[-1] == 0.0
    assert rates[0] == pytest.approx(-math.log2(0.3))
    for S in (0.1, 0.4, 0.8):
        r = rate_for_perception(src, 12, S)
        assert f_spectrum(src, 12, r + 1e-9) <= S + 1e-12
        assert f_spectrum(src, 12, r) > S


def test_rate_for_perception_approaches_entropy_rate():
    src = SourceModel.iid([0.7, 0.3])
    r = rate_for_perception(src, 64, 0.5)
    assert abs(r - entropy_rate(src)) <= 0.05
    assert r == pytest.approx(0.8813, abs=0.05)


def test_best_support_examples():
    p = Pmf.from_probs([0.1, 0.4, 0.1, 0.4])
    assert best_support(p, 2).tolist() == [1, 3]
    assert best_support(p, 3).tolist() == [0, 1, 3]
    assert best_support_tv(p, 2) == pytest.approx(0.2)
    assert best_support_tv(p, 10) == 0.0
    with pytest.raises(ValueError):
        best_support(p, 0)


def test_uniform_blocks_two_codewords():
    n = 3
    p3 = block_pmf(SourceModel.iid([0.5, 0.5]), n)
    assert best_support_tv(p3, 2) == pytest.approx(1 - 2 / 2 ** n)
    assert exhaustive_support_tv(p3, 2) == pytest.approx(0.75, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 8), st.integers(1, 4))
def test_best_support_tv_matches_lp(seed, N, M):
    rng = np.random.default_rng(seed)
    p = random_pmf(rng, N)
    assert best_support_tv(p, M) == pytest.approx(exhaustive_support_tv(p, M), abs=1e-9)


def test_spectrum_csv():
    buf = io.StringIO()
    write_spectrum_csv(spectrum_rows(SourceModel.iid([0.5, 0.5]), 1), buf)
    assert buf.getvalue().splitlines() == ["R,F_n", "1.0,1.0", "inf,0.0"]
