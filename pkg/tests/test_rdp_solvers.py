import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdplab.core import Channel, DistortionSpec, Pmf
from rdplab.errors import ConvergenceError, InfeasibleError
from rdplab.info_measures import entropy, tv_distance
from rdplab.nletter_oracle import grid_min_entropy
from rdplab.rdp_solvers import (TradeoffPoint, blahut_arimoto, expected_distortion,
                                min_output_entropy, min_output_entropy_excess,
                                mixture_upper_bound, output_marginal, read_distortion_csv,
                                rfa_evaluate, transport_cost, write_tradeoff_csv)
from rdplab.source_models import SourceModel, block_pmf

from conftest import h2, random_pmf


# -- expected distortion / output marginal ----------------------------------

def test_expected_distortion_examples(uniform2, hamming2):
    assert expected_distortion(uniform2, Channel.identity([0, 1]), hamming2) == 0
    flip = Channel.from_rows([[0, 1], [1, 0]])
    assert expected_distortion(uniform2, flip, hamming2) == 1.0
    assert expected_distortion(uniform2, Channel.bsc(0.25), hamming2) == 0.25


def test_output_marginal_examples(uniform2):
    p = Pmf.from_probs([0.3, 0.7])
    np.testing.assert_allclose(output_marginal(p, Channel.identity([0, 1])).probs, p.probs)
    assert output_marginal(p, Channel.constant([0, 1], 1)).probs.tolist() == [0.0, 1.0]
    ch = Channel.from_rows([[1, 0], [0.5, 0.5]])
    np.testing.assert_allclose(output_marginal(uniform2, ch).probs, [0.75, 0.25])


# -- Blahut-Arimoto ----------------------------------------------------------

def test_ba_zero_distortion_gives_source_entropy(hamming2):
    p = Pmf.from_probs([0.3, 0.7])
    R, ch = blahut_arimoto(p, hamming2, 0.0)
    assert R == pytest.approx(entropy(p), abs=1e-9)
    np.testing.assert_allclose(ch.rows, np.eye(2))


def test_ba_above_dmax_is_zero(hamming2):
    p = Pmf.from_probs([0.3, 0.7])
    R, ch = blahut_arimoto(p, hamming2, 0.3)
    assert R == 0.0
    assert expected_distortion(p, ch, hamming2) <= 0.3


@pytest.mark.parametrize("D", [0.05, 0.11, 0.25, 0.45])
def test_ba_uniform_binary_closed_form(uniform2, hamming2, D):
    R, ch = blahut_arimoto(uniform2, hamming2, D)
    assert R == pytest.approx(1 - h2(D), abs=1e-5)
    assert expected_distortion(uniform2, ch, hamming2) <= D + 1e-6


@pytest.mark.parametrize("p1,D", [(0.3, 0.05), (0.3, 0.2), (0.1, 0.03), (0.1, 0.09)])
def test_ba_bernoulli_closed_form(hamming2, p1, D):
    R, _ = blahut_arimoto(Pmf.from_probs([1 - p1, p1]), hamming2, D)
    assert R == pytest.approx(h2(p1) - h2(D), abs=1e-5)


@pytest.mark.parametrize("D", [0.1, 0.3, 0.5])
def test_ba_ternary_hamming_closed_form(D):
    # uniform m-ary source, Hamming: R(D) = log m - h(D) - D log(m - 1)
    R, _ = blahut_arimoto(Pmf.uniform(range(3)), DistortionSpec.hamming(3), D)
    assert R == pytest.approx(math.log2(3) - h2(D) - D, abs=1e-5)


def test_ba_monotone_and_convex():
    p = Pmf.from_probs([0.2, 0.5, 0.3])
    delta = DistortionSpec.certify([[0, 1, 4], [1, 0, 1], [4, 1, 0]])
    grid = np.linspace(0.0, 1.2, 25)
    rates = np.array([blahut_arimoto(p, delta, D, tol=1e-8)[0] for D in grid])
    assert np.all(np.diff(rates) <= 1e-9)
    mid = rates[1:-1] - 0.5 * (rates[:-2] + rates[2:])
    assert np.all(mid <= 1e-6)


def test_ba_infeasible_below_min_distortion():
    delta = DistortionSpec.certify([[1, 2], [2, 1]])
    with pytest.raises(InfeasibleError):
        blahut_arimoto(Pmf.uniform([0, 1]), delta, 0.5)


def test_ba_reports_nonconvergence():
    p = Pmf.from_probs([0.3, 0.7])
    with pytest.raises(ConvergenceError) as info:
        blahut_arimoto(p, DistortionSpec.hamming(2), 0.1, max_iter=1)
    assert info.value.gap > 0


# -- transport dual ----------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4))
def test_transport_cost_matches_lp(seed, k):
    from scipy.optimize import linprog
    rng = np.random.default_rng(seed)
    p, q = random_pmf(rng, k).probs, random_pmf(rng, k).probs
    c = rng.random((k, k))
    a_eq = np.vstack([np.kron(np.eye(k), np.ones(k)), np.kron(np.ones(k), np.eye(k))])
    res = linprog(c.ravel(), A_eq=a_eq, b_eq=np.concatenate([p, q]), method="highs")
    assert transport_cost(p, q, c) == pytest.approx(res.fun, abs=1e-9)


# -- minimum output entropy --------------------------------------------------

def test_min_entropy_s0_pins_marginal(uniform2, hamming2):
    for D in (0.0, 0.1, 0.5, 1.0):
        assert min_output_entropy(uniform2, hamming2, D, 0.0).H == pytest.approx(1.0, abs=1e-12)


def test_min_entropy_s1_large_d_is_zero(uniform2, hamming2):
    sol = min_output_entropy(uniform2, hamming2, 0.5, 1.0)
    assert sol.H == 0.0


def test_min_entropy_documented_point(uniform2, hamming2):
    sol = min_output_entropy(uniform2, hamming2, 0.25, 0.25, method="exact")
    oracle = grid_min_entropy(uniform2, hamming2, 0.25, 0.25, resolution=1e-3)
    assert sol.H == pytest.approx(0.8113, abs=1e-3)
    assert sol.H == pytest.approx(h2(0.25), abs=1e-12)
    assert abs(sol.H - oracle.H) <= 1e-3
    assert sol.bound_type == "exact"


def test_min_entropy_infeasible_general_distortion():
    delta = DistortionSpec.certify([[1, 2], [2, 1]])
    with pytest.raises(InfeasibleError):
        min_output_entropy(Pmf.uniform([0, 1]), delta, 0.5, 0.3)


def test_min_entropy_exact_alphabet_limit():
    with pytest.raises(ValueError):
        min_output_entropy(Pmf.uniform(range(5)), DistortionSpec.hamming(5), 0.1, 0.1,
                           method="exact")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4))
def test_min_entropy_s0_exact_and_feasible(seed, k):
    rng = np.random.default_rng(seed)
    p = random_pmf(rng, k)
    m = rng.random((k, k)) * 2
    np.fill_diagonal(m, 0)
    delta = DistortionSpec.certify(m)
    D = float(rng.random())
    sol = min_output_entropy(p, delta, D, 0.0)
    assert abs(sol.H - entropy(p)) <= 1e-9
    S = float(rng.random())
    sol = min_output_entropy(p, delta, D, S)
    assert expected_distortion(p, sol.channel, delta) <= D + 1e-9
    assert tv_distance(output_marginal(p, sol.channel), p) <= S + 1e-9
    assert sol.H <= entropy(p) + 1e-12


@pytest.mark.parametrize("k", [2, 3, 4])
def test_min_entropy_monotone(k):
    rng = np.random.default_rng(k)
    p = Pmf.from_probs(rng.dirichlet(np.ones(k)))
    delta = DistortionSpec.hamming(k)
    ds = np.linspace(0, 0.8, 9)
    ss = np.linspace(0, 1, 9)
    table = np.array([[min_output_entropy(p, delta, D, S).H for S in ss] for D in ds])
    assert np.all(np.diff(table, axis=0) <= 1e-9)
    assert np.all(np.diff(table, axis=1) <= 1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_multistart_is_upper_bound_and_usually_tight(seed):
    rng = np.random.default_rng(seed)
    k = 3 + seed % 2
    p = Pmf.from_probs(rng.dirichlet(np.ones(k)))
    delta = DistortionSpec.hamming(k)
    ex = min_output_entropy(p, delta, 0.2, 0.15, method="exact")
    ms = min_output_entropy(p, delta, 0.2, 0.15, method="multistart", seed=seed)
    assert ms.bound_type == "upper"
    assert ms.H >= ex.H - 1e-9
    assert ms.H == pytest.approx(ex.H, abs=1e-6)


def test_exact_below_ternary_grid():
    p = Pmf.from_probs([0.5, 0.3, 0.2])
    delta = DistortionSpec.certify([[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    for D, S in [(0.1, 0.1), (0.3, 0.2), (0.5, 0.5)]:
        ex = min_output_entropy(p, delta, D, S, method="exact")
        gr = grid_min_entropy(p, delta, D, S, resolution=0.05)
        assert ex.H <= gr.H + 1e-9
        assert gr.H - ex.H <= 0.05


# -- excess-distortion variant -----------------------------------------------

def test_excess_eps_one_drops_distortion(uniform2, hamming2):
    sol = min_output_entropy_excess(uniform2, hamming2, 0.0, 1.0, 0.4)
    ref = min_output_entropy(uniform2, hamming2, 10.0, 0.4)
    assert sol.H == pytest.approx(ref.H, abs=1e-12)


def test_excess_identity_forced():
    src = SourceModel.iid([0.3, 0.7])
    p2 = block_pmf(src, 2)
    sol = min_output_entropy_excess(p2, DistortionSpec.hamming(2).additive(2), 0.0, 1e-9, 0.0,
                                    n=2)
    assert sol.H == pytest.approx(entropy(p2) / 2, abs=1e-9)


def test_excess_matches_grid_oracle(uniform2, hamming2):
    sol = min_output_entropy_excess(uniform2, hamming2, 0.0, 0.25, 1.0)
    indicator = DistortionSpec(1.0 - np.eye(2))
    oracle = grid_min_entropy(uniform2, indicator, 0.25, 1.0, resolution=1e-3)
    assert abs(sol.H - oracle.H) <= 2e-3
    assert sol.H == pytest.approx(h2(0.25), abs=1e-9)


def test_excess_block_level_multistart():
    src = SourceModel.iid([0.5, 0.5])
    p3 = block_pmf(src, 3)
    delta3 = DistortionSpec.hamming(2).additive(3)
    sol = min_output_entropy_excess(p3, delta3, 1 / 3, 0.1, 0.5, n=3, seed=1)
    assert sol.method == "multistart"
    excess = (delta3.matrix / 3 > 1 / 3 + 1e-12)
    assert np.sum(p3.probs[:, None] * sol.channel.rows * excess) <= 0.1 + 1e-9
    assert tv_distance(output_marginal(p3, sol.channel), p3) <= 0.5 + 1e-9
    assert sol.H <= 1.0


# -- mixture bound -----------------------------------------------------------

def test_mixture_examples():
    p = Pmf.from_probs([0.5, 0.5])
    q = Pmf.from_probs([1.0, 0.0])
    assert mixture_upper_bound(p, q, 0.0) == pytest.approx(1.0)
    assert mixture_upper_bound(p, q, 1.0) == 0.0
    assert mixture_upper_bound(p, q, 0.5) == pytest.approx(h2(0.25), abs=1e-12)


# -- fixed-length function ---------------------------------------------------

def test_rfa_uniform_binary(hamming2):
    src = SourceModel.iid([0.5, 0.5])
    pt = rfa_evaluate(src, hamming2, 0.11, 0.5, 32)
    assert pt.R == pytest.approx(1.0)
    assert pt.ba_component == pytest.approx(1 - h2(0.11), abs=1e-3)
    assert pt.criterion == "fa"
    pt1 = rfa_evaluate(src, hamming2, 0.11, 1.0, 32)
    assert pt1.R == pytest.approx(0.5004, abs=1e-3)
    assert pt1.spectrum_floor == 0.0


def test_rfa_point_mass(hamming2):
    src = SourceModel.iid([1.0, 0.0])
    for S in (0.0, 0.3, 1.0):
        assert rfa_evaluate(src, hamming2, 0.0, S, 4).R == 0.0


def test_rfa_is_max_of_components(hamming2):
    src = SourceModel.iid([0.7, 0.3])
    for D in (0.0, 0.05, 0.2):
        for S in (0.0, 0.3, 0.9):
            pt = rfa_evaluate(src, hamming2, D, S, 6)
            assert pt.R == max(pt.ba_component, pt.spectrum_floor)


def test_rfa_markov_block_rate():
    src = SourceModel.markov([[0.9, 0.1], [0.2, 0.8]], [2 / 3, 1 / 3])
    pt = rfa_evaluate(src, DistortionSpec.hamming(2), 0.05, 1.0, 3)
    assert 0 < pt.R < 1


def test_rfa_requires_zero_diagonal():
    with pytest.raises(ValueError):
        rfa_evaluate(SourceModel.iid([0.5, 0.5]), DistortionSpec([[0.1, 1], [1, 0]]),
                     0.2, 0.5, 2)


def test_tradeoff_point_invariants():
    with pytest.raises(ValueError):
        TradeoffPoint(-1.0, 0.1, 0.5, "va")
    with pytest.raises(ValueError):
        TradeoffPoint(1.0, 0.1, 1.5, "va")


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "delta.csv"
    path.write_text("0,1,2\n1,0,1\n2,1,0\n")
    spec = read_distortion_csv(str(path))
    assert spec.zero_diagonal and spec.matrix[0, 2] == 2
    buf = io.StringIO()
    write_tradeoff_csv([TradeoffPoint(0.5, 0.1, 0.2, "va", "exact", "exact")], buf)
    assert buf.getvalue().splitlines() == ["D,S,R,criterion,method,bound_type",
                                           "0.1,0.2,0.5,va,exact,exact"]
