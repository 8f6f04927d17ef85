"""Brute-force ground truth on tiny instances.

Nothing here shares code with the vertex-enumeration solver: the grid scan
walks channel matrices on a simplex lattice, the 2x2 solver intersects
half-planes in the two free channel parameters, and the deterministic search
enumerates every map between blocks.
"""

from __future__ import annotations

import itertools
import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

from .core import Channel, DistortionSpec, Pmf
from .errors import BudgetExceededError, InfeasibleError
from .info_measures import entropy, entropy_array, tv_distance
from .rdp_solvers import EntropySolution, expected_distortion, output_marginal

GRID_BUDGET = 10 ** 8
DETERMINISTIC_BUDGET = 2 * 10 ** 7
TIE_TOL = 1e-12
FEAS_TOL = 1e-12


def _compositions(k: int, total: int) -> np.ndarray:
    if k == 1:
        return np.array([[total]], dtype=np.int64)
    parts = []
    for first in range(total + 1):
        rest = _compositions(k - 1, total - first)
        parts.append(np.hstack([np.full((len(rest), 1), first, dtype=np.int64), rest]))
    return np.vstack(parts)


def simplex_lattice(k: int, steps: int) -> np.ndarray:
    """All probability vectors of length k with entries in {0, 1/steps, ..., 1}.

    Rows come out in lexicographic order.
    """
    return _compositions(k, steps) / steps


def _verify(p_x: Pmf, ch: Channel, delta: DistortionSpec, D: float, S: float) -> None:
    assert expected_distortion(p_x, ch, delta) <= D + 1e-9
    assert tv_distance(output_marginal(p_x, ch), p_x) <= S + 1e-9


def _better(h, w, best_h, best_w) -> bool:
    if best_w is None or h < best_h - TIE_TOL:
        return True
    return abs(h - best_h) <= TIE_TOL and tuple(w.ravel()) < tuple(best_w.ravel())


def grid_min_entropy(p_x: Pmf, delta: DistortionSpec, D: float, S: float,
                     resolution: float = 1e-3, base: float = 2.0,
                     reverse: bool = False) -> EntropySolution:
    """Exhaustive scan of row-stochastic matrices on a simplex lattice.

    The result is the best feasible lattice point, hence an upper bound on
    the true minimum.  ``error_bound`` is the largest entropy change caused
    by moving one lattice step in any single row from the optimum, a local
    estimate of how far the lattice can be from the continuum.
    ``reverse`` walks the lattice backwards; the answer must not change.
    """
    p = p_x.probs
    d = delta.matrix
    nx = ny = len(p)
    steps = int(round(1.0 / resolution))
    lattice = simplex_lattice(ny, steps)
    total = len(lattice) ** nx
    if total > GRID_BUDGET:
        raise BudgetExceededError(f"grid of {total} channels exceeds budget {GRID_BUDGET}")

    # prune rows whose own distortion contribution already exceeds D
    row_sets = []
    for x in range(nx):
        keep = p[x] * (lattice @ d[x]) <= D + FEAS_TOL
        row_sets.append(lattice[keep])
    if any(len(r) == 0 for r in row_sets):
        raise InfeasibleError(f"no lattice channel meets distortion {D}")
    if reverse:
        row_sets = [r[::-1] for r in row_sets]

    last = row_sets[-1]
    last_q = p[-1] * last
    last_d = p[-1] * (last @ d[-1])
    best_h, best_w = math.inf, None
    head_sets = row_sets[:-1]
    for head in itertools.product(*[range(len(r)) for r in head_sets]):
        head_rows = [head_sets[x][i] for x, i in enumerate(head)]
        q0 = sum((p[x] * r for x, r in enumerate(head_rows)), np.zeros(ny))
        d0 = sum(p[x] * (r @ d[x]) for x, r in enumerate(head_rows))
        q = q0[None, :] + last_q
        ok = (d0 + last_d <= D + FEAS_TOL) & (0.5 * np.abs(q - p).sum(axis=1) <= S + FEAS_TOL)
        if not np.any(ok):
            continue
        h = entropy_array(q[ok], base)
        cand = np.flatnonzero(ok)
        for j in cand[h <= h.min() + TIE_TOL]:
            w = np.vstack(head_rows + [last[j]])
            hj = float(entropy_array(q[j], base))
            if _better(hj, w, best_h, best_w):
                best_h, best_w = hj, w
    if best_w is None:
        raise InfeasibleError(f"no lattice channel meets D={D}, S={S}")

    ch = Channel(p_x.support, p_x.support, best_w)
    _verify(p_x, ch, delta, D, S)
    bound = 0.0
    for x in range(nx):
        for y_from, y_to in itertools.permutations(range(ny), 2):
            if best_w[x, y_from] < resolution:
                continue
            w2 = best_w.copy()
            w2[x, y_from] -= resolution
            w2[x, y_to] += resolution
            bound = max(bound, abs(float(entropy_array(p @ w2, base)) - best_h))
    return EntropySolution(entropy(output_marginal(p_x, ch), base), ch, "grid", "upper",
                           error_bound=bound)


def exact_min_entropy_2x2(p_x: Pmf, delta: DistortionSpec, D: float, S: float,
                          base: float = 2.0) -> EntropySolution:
    """Closed-form vertex enumeration for binary alphabets.

    With a = P(1|0) and b = P(0|1), every constraint is a half-plane in the
    (a, b) square once the sign of q0 - p0 is fixed.  Candidate vertices are
    the pairwise intersections of the boundary lines.
    """
    if len(p_x) != 2:
        raise ValueError("exact_min_entropy_2x2 needs a binary alphabet")
    p0, p1 = p_x.probs
    d = delta.matrix
    # rows (ca, cb, rhs) meaning ca*a + cb*b <= rhs
    common = [
        (-1.0, 0.0, 0.0), (1.0, 0.0, 1.0), (0.0, -1.0, 0.0), (0.0, 1.0, 1.0),
        (p0 * (d[0, 1] - d[0, 0]), p1 * (d[1, 0] - d[1, 1]), D - p0 * d[0, 0] - p1 * d[1, 1]),
    ]
    best_h, best_w = math.inf, None
    for s in (1.0, -1.0):
        # q0 - p0 = -p0 a + p1 b
        cons = np.array(common + [(s * p0, -s * p1, 0.0), (-s * p0, s * p1, S)])
        for i, j in itertools.combinations(range(len(cons)), 2):
            a_mat = cons[[i, j], :2]
            if abs(np.linalg.det(a_mat)) < 1e-14:
                continue
            a, b = np.linalg.solve(a_mat, cons[[i, j], 2])
            if np.any(cons[:, :2] @ np.array([a, b]) > cons[:, 2] + 1e-11):
                continue
            a, b = float(np.clip(a, 0.0, 1.0)) + 0.0, float(np.clip(b, 0.0, 1.0)) + 0.0
            w = np.array([[1 - a, a], [b, 1 - b]])
            h = float(entropy_array(p_x.probs @ w, base))
            if _better(h, w, best_h, best_w):
                best_h, best_w = h, w
    if best_w is None:
        raise InfeasibleError(f"no binary channel meets D={D}, S={S}")
    ch = Channel(p_x.support, p_x.support, best_w)
    return EntropySolution(best_h, ch, "exact2x2", "exact")


class DeterministicSolution(NamedTuple):
    H: float
    mapping: np.ndarray


def best_deterministic_encoder(block_pmf: Pmf, delta_n: DistortionSpec, D: float, S: float,
                               codebook: Sequence[int] | None = None,
                               base: float = 2.0) -> DeterministicSolution:
    """Minimum H(P_{m(X)}) over deterministic maps m subject to E delta <= D, TV <= S.

    Every map from blocks into ``codebook`` (default: all blocks) is tried.
    Raises InfeasibleError when no map qualifies.
    """
    p = block_pmf.probs
    d = delta_n.matrix
    N = len(p)
    cb = np.arange(N) if codebook is None else np.asarray(sorted(codebook), dtype=np.int64)
    C = len(cb)
    total = C ** N
    if total > DETERMINISTIC_BUDGET:
        raise BudgetExceededError(f"{total} deterministic maps exceed budget {DETERMINISTIC_BUDGET}")
    radix = C ** np.arange(N - 1, -1, -1, dtype=np.int64)
    best_h, best_map = math.inf, None
    chunk = 1 << 18
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % C
        maps = cb[digits]
        dist = (p[None, :] * d[np.arange(N)[None, :], maps]).sum(axis=1)
        q = np.zeros((len(idx), N))
        rows = np.arange(len(idx))
        for x in range(N):
            np.add.at(q, (rows, maps[:, x]), p[x])
        tv = 0.5 * np.abs(q - p[None, :]).sum(axis=1)
        ok = (dist <= D + FEAS_TOL) & (tv <= S + FEAS_TOL)
        if not np.any(ok):
            continue
        h = entropy_array(q[ok], base)
        j = int(np.flatnonzero(ok)[np.argmin(h)])
        hj = float(h.min())
        if hj < best_h - TIE_TOL:
            best_h, best_map = hj, maps[j].copy()
    if best_map is None:
        raise InfeasibleError(f"no deterministic map meets D={D}, S={S}")
    ch = Channel(block_pmf.support, block_pmf.support, np.eye(N)[best_map])
    _verify(block_pmf, ch, delta_n, D, S)
    return DeterministicSolution(best_h, best_map)


def exhaustive_support_tv(p: Pmf, M: int) -> float:
    """min TV(q, p) over q supported on at most M atoms, by LP over every support."""
    probs = p.probs
    N = len(probs)
    size = min(M, N)
    best = math.inf
    for supp in itertools.combinations(range(N), size):
        # variables q (N) then t (N) with t >= |q - p|; minimise sum(t) / 2
        c = np.concatenate([np.zeros(N), 0.5 * np.ones(N)])
        eye = np.eye(N)
        a_ub = np.vstack([np.hstack([eye, -eye]), np.hstack([-eye, -eye])])
        b_ub = np.concatenate([probs, -probs])
        a_eq = np.concatenate([np.ones(N), np.zeros(N)])[None, :]
        bounds = [(0, None) if i in supp else (0, 0) for i in range(N)] + [(0, None)] * N
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds,
                      method="highs")
        best = min(best, float(res.fun))
    return best
