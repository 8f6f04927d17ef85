"""Numerical evaluation of the rate-distortion-perception tradeoff functions.

Three families of solvers live here:

* ``blahut_arimoto`` -- the classical R(D) = min I(X;Y) by alternating
  minimisation over a sweep of Lagrange slopes.
* ``min_output_entropy`` -- minimum output entropy H(P_Y) over channels with
  bounded expected distortion and bounded variational distance between P_Y
  and P_X.  The objective is concave in the channel, so the exact method
  enumerates vertices of the feasible set.
* ``rfa_evaluate`` -- the fixed-length function, max of the R(D) term and the
  spectrum floor inf{R : F_n(R) <= S}.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, TextIO

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .core import Channel, DistortionSpec, Pmf
from .errors import ConfigError, ConvergenceError, InfeasibleError
from .info_measures import entropy, entropy_array, mutual_information, tv_distance
from .source_models import SourceModel, block_pmf

FEAS_TOL = 1e-10
EXACT_MAX_ALPHABET = 4
MULTISTART_STARTS = 64


@dataclass(frozen=True)
class TradeoffPoint:
    R: float
    D: float
    S: float
    criterion: str
    method: str = ""
    bound_type: str = ""
    ba_component: float | None = None
    spectrum_floor: float | None = None

    def __post_init__(self):
        if self.criterion not in ("va", "vm", "fa"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.R < 0 or self.D < 0 or not 0 <= self.S <= 1:
            raise ValueError(f"invalid tradeoff point R={self.R} D={self.D} S={self.S}")


@dataclass(frozen=True, eq=False)
class EntropySolution:
    """Result of a minimum-output-entropy solve.

    ``bound_type`` is ``"exact"`` when the solver certifies optimality of the
    finite problem and ``"upper"`` when the value is only an upper bound.
    """

    H: float
    channel: Channel
    method: str
    bound_type: str
    error_bound: float | None = None
    extra: dict = field(default_factory=dict)


def _check_dims(p_x: Pmf, channel: Channel | None = None, delta: DistortionSpec | None = None):
    k = len(p_x)
    if channel is not None and channel.x_support != p_x.support:
        raise ValueError("channel is not indexed by the source support")
    if delta is not None and len(delta) != k:
        raise ValueError(f"distortion matrix is {len(delta)}x{len(delta)}, alphabet has {k}")


def expected_distortion(p_x: Pmf, channel: Channel, delta: DistortionSpec) -> float:
    _check_dims(p_x, channel, delta)
    return float(np.sum(p_x.probs[:, None] * channel.rows * delta.matrix))


def output_marginal(p_x: Pmf, channel: Channel) -> Pmf:
    _check_dims(p_x, channel)
    q = p_x.probs @ channel.rows
    q = np.clip(q, 0.0, None)
    return Pmf(channel.y_support, q / q.sum())


# ---------------------------------------------------------------------------
# Blahut-Arimoto
# ---------------------------------------------------------------------------

def _ba_gap(log_c: np.ndarray, q_new: np.ndarray) -> float:
    finite = np.isfinite(log_c)
    mx = np.max(log_c[finite])
    avg = np.sum(q_new[finite] * log_c[finite])
    return float(mx - avg)


def _ba_fixed_slope(p, d, beta, logq, gap_tol, max_iter):
    """Iterate the Blahut-Arimoto map at slope ``beta`` until the gap closes.

    Returns (channel rows, log q).  All arithmetic is in the log domain so
    large slopes do not underflow.
    """
    gap = math.inf
    for _ in range(max_iter):
        logits = logq[None, :] - beta * d
        log_z = logsumexp(logits, axis=1)
        w = np.exp(logits - log_z[:, None])
        q_new = p @ w
        with np.errstate(divide="ignore"):
            log_q_new = np.log(q_new)
            log_c = log_q_new - logq
        gap = _ba_gap(log_c, q_new)
        logq = log_q_new
        if gap < gap_tol:
            logits = logq[None, :] - beta * d
            w = np.exp(logits - logsumexp(logits, axis=1)[:, None])
            return w, logq
    raise ConvergenceError(f"Blahut-Arimoto did not converge at slope {beta:.4g}", gap)


def _ba_min_distortion(p, d, gap_tol, max_iter):
    """Slope -> infinity limit: channels supported on per-row argmin sets."""
    allowed = d <= d.min(axis=1, keepdims=True) + 1e-12
    q = np.full(d.shape[1], 1.0 / d.shape[1])
    gap = math.inf
    for _ in range(max_iter):
        w = np.where(allowed, q[None, :], 0.0)
        w /= w.sum(axis=1, keepdims=True)
        q_new = p @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            log_c = np.log(q_new) - np.log(q)
        log_c[q == 0] = -np.inf
        gap = _ba_gap(log_c, q_new) if np.any(np.isfinite(log_c)) else 0.0
        q = q_new
        if gap < gap_tol:
            w = np.where(allowed, q[None, :], 0.0)
            w /= w.sum(axis=1, keepdims=True)
            return w
    raise ConvergenceError("Blahut-Arimoto did not converge at the minimum distortion", gap)


def blahut_arimoto(p_x: Pmf, delta: DistortionSpec, D: float, tol: float = 1e-6,
                   base: float = 2.0, max_iter: int = 10_000) -> tuple[float, Channel]:
    """Rate-distortion function R(D) = min I(X;Y) s.t. E delta(X,Y) <= D.

    The Lagrange slope is located on a geometric grid and refined by
    bisection until the returned channel has distortion in [D - tol, D] and
    the tangent-line bound certifies the rate to within ``tol``.
    """
    _check_dims(p_x, delta=delta)
    if D < 0:
        raise ValueError("distortion level must be nonnegative")
    p = p_x.probs
    d = delta.matrix
    support = p_x.support
    d_min = float(np.sum(p * d.min(axis=1)))
    col = p @ d
    d_max = float(col.min())
    gap_tol = tol * math.log(base) * 1e-2

    if D < d_min - 1e-12:
        raise InfeasibleError(f"distortion {D} is below the minimum achievable {d_min}")
    if D >= d_max:
        return 0.0, Channel.constant(support, support[int(np.argmin(col))])

    def solve(beta, logq):
        w, logq = _ba_fixed_slope(p, d, beta, logq, gap_tol, max_iter)
        return w, logq, float(np.sum(p[:, None] * w * d))

    def finish(w):
        w = np.clip(w, 0.0, None)
        ch = Channel(support, support, w / w.sum(axis=1, keepdims=True))
        return mutual_information(p_x, ch, base), ch

    if D <= d_min + 1e-12:
        return finish(_ba_min_distortion(p, d, gap_tol, max_iter))

    logq = np.full(len(p), -math.log(len(p)))
    lo = hi = None
    hi_sol = None
    scale = float(np.max(d))
    for k in range(-4, 45):
        beta = 2.0 ** k / scale
        try:
            w, logq_k, dist = solve(beta, logq)
        except ConvergenceError:
            # only slopes near the critical value converge slowly; the
            # solution there is still at high distortion
            lo = beta
            continue
        if dist <= D:
            hi, hi_sol = beta, (w, logq_k, dist)
            break
        lo, logq = beta, logq_k
    if hi is None:
        # D sits within numerical reach of the minimum distortion
        return finish(_ba_min_distortion(p, d, gap_tol, max_iter))
    if lo is None:
        lo = 0.0

    ln_base = math.log(base)
    for _ in range(200):
        w, logq_h, dist = hi_sol
        slack = D - dist
        if slack <= tol and hi * slack / ln_base <= tol:
            break
        mid = math.sqrt(lo * hi) if lo > 0 else hi / 2
        try:
            w_m, logq_m, dist_m = solve(mid, logq_h)
        except ConvergenceError:
            lo = mid
            continue
        if dist_m <= D:
            hi, hi_sol = mid, (w_m, logq_m, dist_m)
        else:
            lo = mid
        if hi - lo <= 1e-14 * hi:
            break
    return finish(hi_sol[0])


# ---------------------------------------------------------------------------
# Minimum output entropy: exact vertex enumeration in output-marginal space
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _transport_dual_vertices(cost_bytes: bytes, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Vertices (u, v) of {u_x + v_y <= c_xy, u_0 = 0}.

    Basic dual solutions of the transportation problem correspond to spanning
    trees of the complete bipartite graph on rows and columns, so the
    vertices are found by enumerating those trees and keeping the feasible
    potential vectors.
    """
    nx, ny = shape
    c = np.frombuffer(cost_bytes, dtype=float).reshape(shape)
    edges = [(x, y) for x in range(nx) for y in range(ny)]
    m = nx + ny - 1
    scale = max(1.0, float(np.abs(c).max()))
    us, vs = [], []
    for tree in itertools.combinations(range(len(edges)), m):
        parent = list(range(nx + ny))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        acyclic = True
        for e in tree:
            x, y = edges[e]
            ra, rb = find(x), find(nx + y)
            if ra == rb:
                acyclic = False
                break
            parent[ra] = rb
        if not acyclic:
            continue
        u = np.full(nx, np.nan)
        v = np.full(ny, np.nan)
        u[0] = 0.0
        pending = [edges[e] for e in tree]
        while pending:
            rest = []
            for x, y in pending:
                if not np.isnan(u[x]):
                    v[y] = c[x, y] - u[x]
                elif not np.isnan(v[y]):
                    u[x] = c[x, y] - v[y]
                else:
                    rest.append((x, y))
            pending = rest
        if np.all(u[:, None] + v[None, :] <= c + 1e-12 * scale):
            us.append(u)
            vs.append(v)
    u_arr = np.array(us)
    v_arr = np.array(vs)
    _, keep = np.unique(np.round(np.hstack([u_arr, v_arr]), 12), axis=0, return_index=True)
    keep.sort()
    return u_arr[keep], v_arr[keep]


def transport_cost(p: np.ndarray, q: np.ndarray, cost: np.ndarray) -> float:
    """Minimum of sum pi_xy c_xy over couplings pi of (p, q), via the dual vertices."""
    u, v = _transport_dual_vertices(np.ascontiguousarray(cost, dtype=float).tobytes(), cost.shape)
    return float(np.max(u @ p + v @ q))


def _output_polytope_vertices(p: np.ndarray, cost: np.ndarray, budget: float, S: float) -> np.ndarray:
    """Vertices of {q : transport_cost(p, q) <= budget, TV(q, p) <= S}.

    The TV ball is split into cells by the sign pattern of q - p; in each
    cell the constraint is linear, and the union of the cells' vertex sets
    contains every vertex of the full feasible set.
    """
    ny = len(p)
    if ny == 1:
        return np.ones((1, 1))
    u, v = _transport_dual_vertices(np.ascontiguousarray(cost, dtype=float).tobytes(), cost.shape)
    base_g = [-np.eye(ny), v]
    base_h = [np.zeros(ny), budget - u @ p]
    d = ny - 1
    found = []
    for signs in itertools.product((1.0, -1.0), repeat=ny):
        s = np.array(signs)
        g = np.vstack(base_g + [-np.diag(s), s[None, :]])
        h = np.concatenate(base_h + [-s * p, [2 * S + s @ p]])
        combos = np.array(list(itertools.combinations(range(len(h)), d)))
        a = np.empty((len(combos), ny, ny))
        a[:, 0, :] = 1.0
        a[:, 1:, :] = g[combos]
        b = np.empty((len(combos), ny))
        b[:, 0] = 1.0
        b[:, 1:] = h[combos]
        ok = np.abs(np.linalg.det(a)) > 1e-12
        if not np.any(ok):
            continue
        q = np.linalg.solve(a[ok], b[ok][..., None])[..., 0]
        feasible = np.all(q @ g.T <= h + FEAS_TOL, axis=1)
        found.append(q[feasible])
    if not found:
        return np.empty((0, ny))
    verts = np.vstack(found)
    if len(verts) == 0:
        return verts
    verts = np.clip(verts, 0.0, None)
    verts /= verts.sum(axis=1, keepdims=True)
    return np.unique(np.round(verts, 13), axis=0)


def _channel_for_marginal(p: np.ndarray, q: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Cheapest channel W with p W = q (rows with p_x = 0 are set to identity)."""
    nx, ny = cost.shape
    live = np.flatnonzero(p > 0)
    w = np.eye(nx, ny)
    if len(live) == 0:
        return w
    k = len(live)
    c = (p[live, None] * cost[live]).ravel()
    a_rows = np.kron(np.eye(k), np.ones((1, ny)))
    a_cols = np.kron(p[live][None, :], np.eye(ny))
    res = linprog(c, A_eq=np.vstack([a_rows, a_cols]), b_eq=np.concatenate([np.ones(k), q]),
                  bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise InfeasibleError(f"no channel realises the output marginal: {res.message}")
    sub = np.clip(res.x.reshape(k, ny), 0.0, None)
    w[live] = sub / sub.sum(axis=1, keepdims=True)
    return w


def _solve_exact(p_x: Pmf, cost: np.ndarray, budget: float, S: float, base: float) -> EntropySolution:
    p = p_x.probs
    verts = _output_polytope_vertices(p, cost, budget, S)
    if len(verts) == 0:
        raise InfeasibleError(f"no channel meets distortion budget {budget} with TV <= {S}")
    h = entropy_array(verts, base)
    best = np.flatnonzero(h <= h.min() + 1e-12)
    # lexsort keys are last-major; the smallest q in lexicographic order wins
    order = np.lexsort(verts[best].T[::-1])
    q = verts[best[order[0]]]
    w = _channel_for_marginal(p, q, cost)
    ch = Channel(p_x.support, p_x.support, w)
    return EntropySolution(entropy(output_marginal(p_x, ch), base), ch, "exact", "exact",
                           extra={"n_vertices": int(len(verts))})


# ---------------------------------------------------------------------------
# Minimum output entropy: multistart successive linear programming
# ---------------------------------------------------------------------------

def _lp_data(p: np.ndarray, cost: np.ndarray, budget: float, S: float):
    nx, ny = cost.shape
    nw = nx * ny
    # variables: W (row-major) then t_y >= |q_y - p_y|
    a_eq = np.hstack([np.kron(np.eye(nx), np.ones((1, ny))), np.zeros((nx, ny))])
    b_eq = np.ones(nx)
    qmap = np.kron(p[None, :], np.eye(ny))  # q = qmap @ W
    rows = [
        np.concatenate([(p[:, None] * cost).ravel(), np.zeros(ny)])[None, :],
        np.hstack([qmap, -np.eye(ny)]),
        np.hstack([-qmap, -np.eye(ny)]),
        np.concatenate([np.zeros(nw), np.ones(ny)])[None, :],
    ]
    b_ub = np.concatenate([[budget], p, -p, [2 * S]])
    return a_eq, b_eq, np.vstack(rows), b_ub, nw


def _solve_multistart(p_x: Pmf, cost: np.ndarray, budget: float, S: float, base: float,
                      seed: int = 0, starts: int = MULTISTART_STARTS,
                      max_rounds: int = 200) -> EntropySolution:
    p = p_x.probs
    nx, ny = cost.shape
    a_eq, b_eq, a_ub, b_ub, nw = _lp_data(p, cost, budget, S)

    def lp(obj):
        c = np.concatenate([obj, np.zeros(ny)])
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                      method="highs")
        if res.status == 2:
            raise InfeasibleError(f"no channel meets distortion budget {budget} with TV <= {S}")
        if res.status != 0:
            raise ConvergenceError(f"LP failed: {res.message}", math.nan)
        w = np.clip(res.x[:nw].reshape(nx, ny), 0.0, None)
        return w / w.sum(axis=1, keepdims=True)

    def h_of(w):
        return float(entropy_array(p @ w, base))

    def descend(w):
        h = h_of(w)
        for _ in range(max_rounds):
            q = p @ w
            grad_q = -(np.log(np.maximum(q, 1e-300)) + 1.0)
            w_new = lp((p[:, None] * grad_q[None, :]).ravel())
            h_new = h_of(w_new)
            if h_new >= h - 1e-13:
                break
            w, h = w_new, h_new
        return w, h

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(starts)]
    best_w, best_h = None, math.inf
    for i, rng in enumerate(rngs):
        obj = np.zeros(nw) if i == 0 else rng.standard_normal(nw)
        w, h = descend(lp(obj))
        if h < best_h - 1e-12 or (abs(h - best_h) <= 1e-12 and
                                  tuple(w.ravel()) < tuple(best_w.ravel())):
            best_w, best_h = w, h
    ch = Channel(p_x.support, p_x.support, best_w)
    return EntropySolution(entropy(output_marginal(p_x, ch), base), ch, "multistart", "upper")


def _dispatch(p_x: Pmf, cost: np.ndarray, budget: float, S: float, method: str,
              base: float, resolution: float, seed: int) -> EntropySolution:
    if not 0 <= S <= 1:
        raise ValueError("perception level S must lie in [0, 1]")
    if budget < 0:
        raise ValueError("distortion level must be nonnegative")
    k = len(p_x)
    if method == "auto":
        method = "exact" if k <= EXACT_MAX_ALPHABET else "multistart"
    if method == "exact":
        if k > EXACT_MAX_ALPHABET:
            raise ValueError(f"exact method supports alphabets of at most {EXACT_MAX_ALPHABET}")
        return _solve_exact(p_x, cost, budget, S, base)
    if method == "multistart":
        return _solve_multistart(p_x, cost, budget, S, base, seed=seed)
    if method == "grid":
        from .nletter_oracle import grid_min_entropy
        return grid_min_entropy(p_x, DistortionSpec(cost), budget, S, resolution, base=base)
    raise ValueError(f"unknown method {method!r}")


def min_output_entropy(p_x: Pmf, delta: DistortionSpec, D: float, S: float,
                       method: str = "auto", base: float = 2.0, resolution: float = 1e-3,
                       seed: int = 0) -> EntropySolution:
    """Minimise H(P_Y) subject to E delta(X,Y) <= D and TV(P_Y, P_X) <= S.

    ``method`` is ``"exact"`` (alphabets up to 4), ``"grid"`` (simplex lattice
    scan, an upper bound), ``"multistart"`` (local descent, an upper bound)
    or ``"auto"``.
    """
    _check_dims(p_x, delta=delta)
    return _dispatch(p_x, delta.matrix, D, S, method, base, resolution, seed)


def min_output_entropy_excess(p_xn: Pmf, delta_n: DistortionSpec, D: float, eps: float,
                              S: float, n: int = 1, method: str = "auto", base: float = 2.0,
                              seed: int = 0) -> EntropySolution:
    """Excess-distortion variant, reported per symbol.

    Pr[delta_n(X^n, Y^n) / n > D] <= eps replaces the average-distortion
    constraint; the event is an indicator cost, so the problem keeps the
    same linear structure.  The returned ``H`` is block entropy divided by n.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    _check_dims(p_xn, delta=delta_n)
    excess = (delta_n.matrix / n > D + 1e-12).astype(float)
    sol = _dispatch(p_xn, excess, eps, S, method, base, 1e-3, seed)
    return EntropySolution(sol.H / n, sol.channel, sol.method, sol.bound_type,
                           extra={**sol.extra, "block_entropy": sol.H})


def mixture_upper_bound(p_xn: Pmf, q_yn: Pmf, S: float, base: float = 2.0) -> float:
    """Entropy of (1 - S) P + S Q, a source within TV distance S of P."""
    if not 0 <= S <= 1:
        raise ValueError("S must lie in [0, 1]")
    if p_xn.support != q_yn.support:
        raise ValueError("mixture components must share a support ordering")
    mix = Pmf(p_xn.support, (1 - S) * p_xn.probs + S * q_yn.probs)
    h = entropy(mix, base)
    assert tv_distance(mix, p_xn) <= S + 1e-12
    h2 = entropy(Pmf.from_probs([S, 1 - S]), base)
    assert h <= (1 - S) * entropy(p_xn, base) + S * entropy(q_yn, base) + h2 + 1e-9
    return h


# ---------------------------------------------------------------------------
# Fixed-length function
# ---------------------------------------------------------------------------

def rfa_evaluate(source: SourceModel, delta: DistortionSpec, D: float, S: float, n: int,
                 base: float = 2.0, tol: float = 1e-6) -> TradeoffPoint:
    """max{R(D), inf{R : F_n(R) <= S}} for a concrete source at blocklength n.

    For i.i.d. sources the R(D) term is single-letter; for Markov sources it
    is the n-block rate-distortion function divided by n.
    """
    from .spectrum import rate_for_perception

    if not delta.zero_diagonal:
        raise ValueError("fixed-length evaluation requires a zero-diagonal distortion")
    if source.kind == "iid":
        ba, _ = blahut_arimoto(source.symbol_pmf, delta, D, tol=tol, base=base)
    else:
        ba, _ = blahut_arimoto(block_pmf(source, n), delta.additive(n), n * D,
                               tol=tol * n, base=base)
        ba /= n
    floor = rate_for_perception(source, n, S, base)
    return TradeoffPoint(max(ba, floor), D, S, "fa", method="ba+spectrum",
                         bound_type="finite-n", ba_component=ba, spectrum_floor=floor)


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def read_distortion_csv(path_or_stream) -> DistortionSpec:
    try:
        m = np.loadtxt(path_or_stream, delimiter=",", ndmin=2, comments="#")
        return DistortionSpec.certify(m)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read distortion matrix: {exc}") from exc


TRADEOFF_COLUMNS = ("D", "S", "R", "criterion", "method", "bound_type")


def write_tradeoff_csv(points: Iterable[TradeoffPoint], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRADEOFF_COLUMNS)
    for pt in points:
        writer.writerow([repr(pt.D), repr(pt.S), repr(pt.R), pt.criterion, pt.method,
                         pt.bound_type])
