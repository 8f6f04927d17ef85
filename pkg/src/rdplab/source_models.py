"""Finite-alphabet i.i.d. and Markov sources.

Blocks are indexed lexicographically over the source alphabet (first symbol
most significant); that index is shared by every block-level Pmf, Channel and
DistortionSpec in the package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .core import PROB_TOL, Pmf, block_labels
from .errors import (ConfigError, EnumerationTooLargeError,
                     InfiniteSelfInformationError,
                     MultipleStationaryDistributionsError)
from .info_measures import entropy

DEFAULT_ENUMERATION_CAP = 2 ** 24


@dataclass(frozen=True)
class Block:
    symbols: tuple

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(self.symbols) < 1:
            raise ValueError("a block needs at least one symbol")

    @property
    def n(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True, eq=False)
class SourceModel:
    """An i.i.d. or first-order Markov source over an ordered alphabet."""

    kind: str
    alphabet: tuple
    symbol_pmf: Pmf | None = None
    transition: np.ndarray | None = None
    initial: Pmf | None = None

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        if self.kind == "iid":
            if self.symbol_pmf is None or self.symbol_pmf.support != self.alphabet:
                raise ValueError("iid source needs a symbol pmf over its alphabet")
        elif self.kind == "markov":
            t = np.array(self.transition, dtype=float)
            k = len(self.alphabet)
            if t.shape != (k, k):
                raise ValueError(f"transition matrix must be {k}x{k}")
            if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > PROB_TOL):
                raise ValueError("transition matrix must be row-stochastic")
            if self.initial is None or self.initial.support != self.alphabet:
                raise ValueError("markov source needs an initial pmf over its alphabet")
            t.setflags(write=False)
            object.__setattr__(self, "transition", t)
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    @classmethod
    def iid(cls, probs: Sequence[float], alphabet: Sequence[Hashable] | None = None) -> SourceModel:
        pmf = Pmf.from_probs(probs, alphabet)
        return cls("iid", pmf.support, symbol_pmf=pmf)

    @classmethod
    def markov(cls, transition, initial: Sequence[float],
               alphabet: Sequence[Hashable] | None = None) -> SourceModel:
        init = Pmf.from_probs(initial, alphabet)
        return cls("markov", init.support, transition=np.asarray(transition, dtype=float),
                   initial=init)

    @property
    def k(self) -> int:
        return len(self.alphabet)

    def first_symbol_pmf(self) -> Pmf:
        return self.symbol_pmf if self.kind == "iid" else self.initial

    def block_support(self, n: int) -> tuple:
        return block_labels(self.alphabet, n)

    def symbol_indices(self, block: Block) -> np.ndarray:
        try:
            return np.array([self.alphabet.index(s) for s in block.symbols], dtype=np.int64)
        except ValueError as exc:
            raise ValueError(f"block {block.symbols!r} has symbols outside the alphabet") from exc


def _check_cap(source: SourceModel, n: int, cap: int) -> None:
    if n < 1:
        raise ValueError("block length must be positive")
    size = source.k ** n
    if size > cap:
        raise EnumerationTooLargeError(size, cap)


def block_probs(source: SourceModel, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Probabilities of all blocks of length n, lexicographic order."""
    _check_cap(source, n, cap)
    if source.kind == "iid":
        p = source.symbol_pmf.probs
        out = np.ones(1)
        for _ in range(n):
            out = np.outer(out, p).ravel()
        return out
    t = source.transition
    k = source.k
    out = source.initial.probs.copy()
    for _ in range(n - 1):
        last = np.arange(out.shape[0]) % k
        out = (out[:, None] * t[last]).ravel()
    return out


def block_pmf(source: SourceModel, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Pmf:
    probs = block_probs(source, n, cap)
    return Pmf(source.block_support(n), probs / probs.sum())


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_symbol_indices(source: SourceModel, n: int, size: int, seed) -> np.ndarray:
    """Draw ``size`` independent blocks as an (size, n) array of symbol indices."""
    rng = _rng(seed)
    k = source.k
    if source.kind == "iid":
        cdf = np.cumsum(source.symbol_pmf.probs)
        u = rng.random((size, n))
        return np.minimum(np.searchsorted(cdf, u, side="right"), k - 1)
    cdf0 = np.cumsum(source.initial.probs)
    cdf_t = np.cumsum(source.transition, axis=1)
    u = rng.random((size, n))
    out = np.empty((size, n), dtype=np.int64)
    out[:, 0] = np.minimum(np.searchsorted(cdf0, u[:, 0], side="right"), k - 1)
    for i in range(1, n):
        rows = cdf_t[out[:, i - 1]]
        out[:, i] = np.minimum((rows <= u[:, i, None]).sum(axis=1), k - 1)
    return out


def block_index(symbol_indices: np.ndarray, k: int) -> np.ndarray:
    """Lexicographic block index of each row of symbol indices."""
    symbol_indices = np.atleast_2d(symbol_indices)
    n = symbol_indices.shape[1]
    weights = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return symbol_indices @ weights


def sample_block(source: SourceModel, n: int, seed) -> Block:
    if n < 1:
        raise ValueError("block length must be positive")
    idx = sample_symbol_indices(source, n, 1, seed)[0]
    return Block(tuple(source.alphabet[i] for i in idx))


def stationary_distribution(transition: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Unique stationary law of a row-stochastic matrix.

    Raises MultipleStationaryDistributionsError when eigenvalue 1 is not simple.
    """
    t = np.asarray(transition, dtype=float)
    vals, vecs = np.linalg.eig(t.T)
    ones = np.flatnonzero(np.abs(vals - 1.0) < 1e-9)
    if len(ones) > 1:
        raise MultipleStationaryDistributionsError(
            f"eigenvalue 1 has multiplicity {len(ones)}")
    pi = None
    if len(ones) == 1:
        v = np.real(vecs[:, ones[0]])
        v = v / v.sum()
        if np.all(v > -tol):
            pi = np.clip(v, 0.0, None)
    if pi is None:
        # power iteration on the lazy chain, which is aperiodic
        lazy = 0.5 * (t + np.eye(t.shape[0]))
        pi = np.full(t.shape[0], 1.0 / t.shape[0])
        for _ in range(1_000_000):
            nxt = pi @ lazy
            if np.max(np.abs(nxt - pi)) < tol:
                pi = nxt
                break
            pi = nxt
        else:
            raise MultipleStationaryDistributionsError("power iteration did not settle")
    return pi / pi.sum()


def entropy_rate(source: SourceModel, base: float = 2.0) -> float:
    if base <= 1:
        raise ValueError("log base must exceed 1")
    if source.kind == "iid":
        return entropy(source.symbol_pmf, base)
    pi = stationary_distribution(source.transition)
    row_h = [entropy(Pmf.from_probs(row, source.alphabet), base) for row in source.transition]
    return float(np.dot(pi, row_h))


def block_log_prob(source: SourceModel, block: Block) -> float:
    """Natural log of P_{X^n}(block); -inf for impossible blocks."""
    idx = source.symbol_indices(block)
    with np.errstate(divide="ignore"):
        if source.kind == "iid":
            return float(np.sum(np.log(source.symbol_pmf.probs[idx])))
        lp = np.log(source.initial.probs[idx[0]])
        lp += np.sum(np.log(source.transition[idx[:-1], idx[1:]]))
    return float(lp)


def self_information_block(source: SourceModel, block: Block, base: float = 2.0) -> float:
    """Per-symbol self-information (1/n) log(1/P(block))."""
    lp = block_log_prob(source, block)
    if not np.isfinite(lp):
        raise InfiniteSelfInformationError(f"block {block.symbols!r} has probability zero")
    return -lp / (block.n * math.log(base))


def parse_source(text: str) -> SourceModel:
    """Parse ``iid:p0,p1,...`` (brackets optional) or ``markov:init=[...];rows=[[...],...]``."""
    kind, _, body = text.strip().partition(":")
    try:
        if kind == "iid":
            probs = [float(tok) for tok in body.strip().strip("[]").split(",") if tok.strip()]
            return SourceModel.iid(probs)
        if kind == "markov":
            fields = {}
            for part in body.split(";"):
                key, _, value = part.partition("=")
                fields[key.strip()] = json.loads(value)
            return SourceModel.markov(fields["rows"], fields["init"])
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad source spec {text!r}: {exc}") from exc
    raise ConfigError(f"unknown source kind in {text!r}")
