"""Working codecs for lossy source coding experiments.

The variable-length codec draws a reconstruction block from a channel row
(the stochastic encoder), then transmits it with a K-ary Huffman code built
for the channel's output law.  The decoder is the Huffman decoder, so the
decoded block is exactly the drawn block and its law is the output marginal.

The fixed-length codec maps each source block deterministically to one of
M indices and back to a reproduction block.

Randomness: every simulation takes a master seed; trial chunk ``c`` draws
from ``default_rng([seed, c])``, so results do not depend on how chunks are
scheduled across workers.
"""

from __future__ import annotations

import heapq
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .core import Channel, DistortionSpec, Pmf
from .errors import ConfigError, DecodeError
from .info_measures import empirical_pmf_from_indices, entropy, p_limsup_estimate, tv_distance
from .rdp_solvers import output_marginal
from .source_models import Block, SourceModel, block_pmf
from .spectrum import best_support_tv

CHUNK_SIZE = 8192
Z_RADIUS = 3.0


@dataclass(frozen=True, eq=False)
class CodeTable:
    """Prefix-free K-ary code; codewords are tuples of digits in range(K).

    ``padding_lengths`` holds the depths of the zero-probability dummy leaves
    added so that the K-ary tree is full.
    """

    K: int
    codewords: dict
    padding_lengths: tuple = ()
    _lookup: dict = field(init=False, repr=False)
    _max_len: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("code alphabet needs at least two symbols")
        lookup = {cw: idx for idx, cw in self.codewords.items()}
        if len(lookup) != len(self.codewords):
            raise ValueError("duplicate codewords")
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "_max_len", max((len(c) for c in self.codewords.values()), default=0))

    def length(self, idx: int) -> int:
        return len(self.codewords[idx])

    def kraft_sum(self, include_padding: bool = False) -> float:
        total = math.fsum(self.K ** -len(c) for c in self.codewords.values())
        if include_padding:
            total += math.fsum(self.K ** -ell for ell in self.padding_lengths)
        return total

    def expected_length(self, p: Pmf) -> float:
        return float(sum(p.probs[i] * len(c) for i, c in self.codewords.items()))

    def is_prefix_free(self) -> bool:
        words = sorted(self.codewords.values())
        return all(words[i + 1][:len(words[i])] != words[i] for i in range(len(words) - 1))


def build_huffman(p: Pmf, K: int = 2) -> CodeTable:
    """Optimal prefix-free K-ary code for the positive-probability atoms of ``p``.

    Ties are broken by probability, then by block index; internal nodes rank
    after all leaves of equal probability in creation order.
    """
    if K < 2:
        raise ValueError("code alphabet needs at least two symbols")
    live = [int(i) for i in np.flatnonzero(p.probs > 0)]
    if not live:
        raise ValueError("pmf has no positive-probability symbol")
    if len(live) == 1:
        return CodeTable(K, {live[0]: ()})
    n_pad = (K - 1 - (len(live) - 1) % (K - 1)) % (K - 1)
    # heap entries: (prob, rank, node); a node is ("leaf", idx) / ("pad",) / ("node", children)
    heap = [(0.0, -n_pad + j, ("pad",)) for j in range(n_pad)]
    heap += [(float(p.probs[i]), i, ("leaf", i)) for i in live]
    heapq.heapify(heap)
    rank = len(p)
    while len(heap) > 1:
        kids = [heapq.heappop(heap) for _ in range(K)]
        heapq.heappush(heap, (sum(k[0] for k in kids), rank, ("node", [k[2] for k in kids])))
        rank += 1
    codewords, pads = {}, []
    stack = [(heap[0][2], ())]
    while stack:
        node, prefix = stack.pop()
        if node[0] == "leaf":
            codewords[node[1]] = prefix
        elif node[0] == "pad":
            pads.append(len(prefix))
        else:
            for digit, child in enumerate(node[1]):
                stack.append((child, prefix + (digit,)))
    return CodeTable(K, dict(sorted(codewords.items())), tuple(sorted(pads)))


def encode_lossless(table: CodeTable, block_index: int) -> tuple:
    try:
        return table.codewords[block_index]
    except KeyError:
        raise KeyError(f"block {block_index} has no codeword (zero probability)") from None


def decode_stream(table: CodeTable, code: Sequence[int], count: int | None = None) -> list[int]:
    """Parse a concatenation of codewords into block indices."""
    if table._max_len == 0:
        if len(code):
            raise DecodeError("degenerate code carries no symbols", 0)
        if count is None:
            raise ValueError("a zero-length code needs an explicit block count")
        return [next(iter(table.codewords))] * count
    out = []
    prefix = ()
    start = 0
    for pos, sym in enumerate(code):
        if not 0 <= sym < table.K:
            raise DecodeError(f"symbol {sym!r} outside the code alphabet", pos)
        prefix += (sym,)
        hit = table._lookup.get(prefix)
        if hit is not None:
            out.append(hit)
            prefix = ()
            start = pos + 1
        elif len(prefix) >= table._max_len:
            raise DecodeError("no codeword matches", start)
    if prefix:
        raise DecodeError("truncated codeword", start)
    if count is not None and len(out) != count:
        raise DecodeError(f"expected {count} blocks, parsed {len(out)}", len(code))
    return out


def decode_lossless(table: CodeTable, code: Sequence[int]) -> int:
    """Decode exactly one codeword."""
    return decode_stream(table, code, count=1)[0]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stochastic_encode(x, channel: Channel, table: CodeTable, seed):
    """Draw y from the channel row of x and return (codeword of y, y).

    ``x`` may be a support index or a :class:`Block`; ``y`` is returned in
    the same form.
    """
    as_block = isinstance(x, Block)
    xi = channel.x_support.index(x.symbols) if as_block else int(x)
    row = channel.rows[xi]
    u = _rng(seed).random()
    yi = min(int(np.searchsorted(np.cumsum(row), u, side="right")), len(row) - 1)
    while row[yi] == 0:  # guard against cdf rounding at the upper end
        yi -= 1
    cw = encode_lossless(table, yi)
    label = channel.y_support[yi]
    y = Block(label if isinstance(label, tuple) else (label,)) if as_block else yi
    return cw, y


@dataclass
class SimulationReport:
    n: int
    trials: int
    seed: int
    K: int
    code_kind: str
    avg_len_per_symbol: float
    avg_len_radius: float
    empirical_distortion: float
    distortion_radius: float
    empirical_tv: float
    tv_bias_bound: float
    exact_tv: float
    max_distortion_quantile: float
    chi2_pvalue: float | None = None
    theory_entropy_per_symbol: float | None = None
    theory_len_per_symbol: float | None = None
    theory_distortion: float | None = None
    M: int | None = None
    best_support_tv: float | None = None

    def __post_init__(self):
        for k, v in asdict(self).items():
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"report field {k} is not finite")
        if min(self.avg_len_radius, self.distortion_radius, self.tv_bias_bound) < 0:
            raise ValueError("confidence radii must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _block_distortion(delta: DistortionSpec, source: SourceModel, n: int) -> np.ndarray:
    if len(delta) == source.k ** n:
        return delta.matrix
    if len(delta) == source.k:
        return delta.additive(n).matrix
    raise ValueError("distortion matrix matches neither the symbol nor the block alphabet")


def _chunks(trials: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK_SIZE, trials - c * CHUNK_SIZE))
            for c in range(math.ceil(trials / CHUNK_SIZE))]


def _run_chunks(fn, trials: int, workers: int) -> list:
    jobs = _chunks(trials)
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def _sample_from(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = cdf.copy()
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def _mean_radius(x: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(Z_RADIUS * x.std(ddof=1) / math.sqrt(x.size))


def _tv_warning(support: int, trials: int) -> None:
    if support * 10 > trials:
        warnings.warn(f"plug-in TV over {support} blocks from {trials} trials is heavily "
                      "biased; increase trials", RuntimeWarning, stacklevel=3)


def _chi2_pvalue(counts: np.ndarray, q: np.ndarray) -> float:
    live = q > 0
    if np.any(counts[~live] > 0):
        return 0.0
    if live.sum() < 2:
        return 1.0
    expected = q[live] * counts.sum()
    return float(stats.chisquare(counts[live], expected).pvalue)


def simulate_variable_length(source: SourceModel, channel: Channel, delta: DistortionSpec,
                             n: int, trials: int, K: int = 2, seed: int = 0,
                             workers: int = 1) -> SimulationReport:
    """Run the stochastic-encoder + Huffman codec for ``trials`` blocks.

    ``channel`` acts on blocks of length n (use ``Channel.power`` for a
    memoryless extension); ``delta`` may be per-letter (extended additively)
    or block-level.  Lengths are counted in K-ary code symbols.
    """
    p_xn = block_pmf(source, n)
    if channel.x_support != p_xn.support:
        raise ValueError("channel must act on the length-n block alphabet")
    dmat = _block_distortion(delta, source, n)
    q = output_marginal(p_xn, channel)
    table = build_huffman(q, K)
    cdf_x = np.cumsum(p_xn.probs)
    cdf_rows = np.cumsum(channel.rows, axis=1)
    _tv_warning(len(p_xn), trials)

    def run(c, size):
        rng = np.random.default_rng([seed, c])
        x = _sample_from(cdf_x, rng.random(size))
        u = rng.random(size)
        y = np.minimum((cdf_rows[x] <= u[:, None]).sum(axis=1), len(q) - 1)
        # cdf rounding can land on a zero-probability column; step back
        bad = channel.rows[x, y] == 0
        while np.any(bad):
            y[bad] -= 1
            bad = channel.rows[x, y] == 0
        words = [encode_lossless(table, int(yi)) for yi in y]
        stream = [s for w in words for s in w]
        decoded = np.array(decode_stream(table, stream, count=size), dtype=np.int64)
        if not np.array_equal(decoded, y):
            raise AssertionError("lossless stage failed to reproduce the encoder output")
        lengths = np.array([len(w) for w in words], dtype=float)
        return x, decoded, lengths

    parts = _run_chunks(run, trials, workers)
    x = np.concatenate([pt[0] for pt in parts])
    y = np.concatenate([pt[1] for pt in parts])
    lengths = np.concatenate([pt[2] for pt in parts]) / n
    dist = dmat[x, y] / n

    avg_len, len_r = _mean_radius(lengths)
    avg_d, d_r = _mean_radius(dist)
    counts = np.bincount(y, minlength=len(q)).astype(float)
    emp = empirical_pmf_from_indices(y, p_xn.support)
    return SimulationReport(
        n=n, trials=trials, seed=seed, K=K, code_kind="variable",
        avg_len_per_symbol=avg_len, avg_len_radius=len_r,
        empirical_distortion=avg_d, distortion_radius=d_r,
        empirical_tv=tv_distance(emp, p_xn), tv_bias_bound=math.sqrt(len(q) / trials),
        exact_tv=tv_distance(q, p_xn),
        max_distortion_quantile=p_limsup_estimate(dist, 0.01),
        chi2_pvalue=_chi2_pvalue(counts, q.probs),
        theory_entropy_per_symbol=entropy(q, K) / n,
        theory_len_per_symbol=table.expected_length(q) / n,
        theory_distortion=float(np.sum(p_xn.probs[:, None] * channel.rows * dmat)) / n,
    )


def simulate_fixed_length(source: SourceModel, quantizer: Sequence[int],
                          reproduction: Sequence[int], delta: DistortionSpec, n: int,
                          trials: int, seed: int = 0, K: int = 2,
                          workers: int = 1) -> SimulationReport:
    """Run a deterministic M-index quantizer; the rate is log_K(M) / n exactly.

    Raises AssertionError if the measured TV falls below the support-size
    bound by more than three estimation radii.
    """
    p_xn = block_pmf(source, n)
    quantizer = np.asarray(quantizer, dtype=np.int64)
    reproduction = np.asarray(reproduction, dtype=np.int64)
    M = len(reproduction)
    if M < 1:
        raise ValueError("need at least one reproduction block")
    if quantizer.shape != (len(p_xn),) or quantizer.min() < 0 or quantizer.max() >= M:
        raise ValueError("quantizer must map every block to an index in range(M)")
    dmat = _block_distortion(delta, source, n)
    decoder = reproduction[quantizer]
    cdf_x = np.cumsum(p_xn.probs)
    _tv_warning(len(p_xn), trials)

    def run(c, size):
        rng = np.random.default_rng([seed, c])
        x = _sample_from(cdf_x, rng.random(size))
        return x, decoder[x]

    parts = _run_chunks(run, trials, workers)
    x = np.concatenate([pt[0] for pt in parts])
    y = np.concatenate([pt[1] for pt in parts])
    dist = dmat[x, y] / n
    avg_d, d_r = _mean_radius(dist)

    emp = empirical_pmf_from_indices(y, p_xn.support)
    law = np.bincount(decoder, weights=p_xn.probs, minlength=len(p_xn))
    exact = Pmf(p_xn.support, law / law.sum())
    radius = math.sqrt(len(p_xn) / trials)
    emp_tv = tv_distance(emp, p_xn)
    floor = best_support_tv(p_xn, M)
    if emp_tv < floor - Z_RADIUS * radius:
        raise AssertionError(f"measured TV {emp_tv} beats the support bound {floor}")
    return SimulationReport(
        n=n, trials=trials, seed=seed, K=K, code_kind="fixed",
        avg_len_per_symbol=math.log(M, K) / n, avg_len_radius=0.0,
        empirical_distortion=avg_d, distortion_radius=d_r,
        empirical_tv=emp_tv, tv_bias_bound=radius, exact_tv=tv_distance(exact, p_xn),
        max_distortion_quantile=p_limsup_estimate(dist, 0.01),
        theory_distortion=float(np.dot(p_xn.probs, dmat[np.arange(len(p_xn)), decoder])) / n,
        M=M, best_support_tv=floor,
    )


def design_greedy_quantizer(p_xn: Pmf, delta_n: DistortionSpec, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Greedy M-point codebook and nearest-reproduction quantizer.

    Reproduction blocks are added one at a time, each time picking the block
    that most lowers the expected distortion (ties to the lowest index).
    Returns (quantizer, reproduction) with the reproduction sorted by block
    index, so assignment ties also go to the lowest index.
    """
    d = delta_n.matrix
    N = len(p_xn)
    if not 1 <= M <= N:
        raise ValueError(f"M must lie in [1, {N}]")
    p = p_xn.probs
    cur = np.full(N, np.inf)
    chosen: list[int] = []
    for _ in range(M):
        cand = (p[:, None] * np.minimum(cur[:, None], d)).sum(axis=0)
        cand[chosen] = np.inf
        best = int(np.argmin(cand))
        chosen.append(best)
        cur = np.minimum(cur, d[:, best])
    reproduction = np.array(sorted(chosen), dtype=np.int64)
    quantizer = np.argmin(d[:, reproduction], axis=1)
    return quantizer, reproduction


def parse_sim_config(text: str) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg
