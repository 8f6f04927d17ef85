"""Immutable value types: pmfs, channels and distortion matrices.

All arrays stored on these types are made read-only at construction so the
objects can be shared freely between threads.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

PROB_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function over an ordered finite alphabet."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        probs = _frozen(self.probs)
        if probs.ndim != 1 or len(support) != probs.shape[0]:
            raise ValueError("support and probs must have equal length")
        if len(set(support)) != len(support):
            raise ValueError("support labels must be distinct")
        if len(support) == 0:
            raise ValueError("empty support")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_probs(cls, probs: Sequence[float], support: Sequence[Hashable] | None = None) -> Pmf:
        probs = np.asarray(probs, dtype=float)
        if support is None:
            support = range(len(probs))
        return cls(tuple(support), probs)

    @classmethod
    def uniform(cls, support: Sequence[Hashable]) -> Pmf:
        support = tuple(support)
        return cls(support, np.full(len(support), 1.0 / len(support)))

    @classmethod
    def point_mass(cls, support: Sequence[Hashable], label: Hashable) -> Pmf:
        support = tuple(support)
        probs = np.zeros(len(support))
        probs[support.index(label)] = 1.0
        return cls(support, probs)

    def __len__(self) -> int:
        return len(self.support)

    def __repr__(self) -> str:
        body = ", ".join(f"{s!r}: {p:.6g}" for s, p in zip(self.support, self.probs))
        return f"Pmf({{{body}}})"

    def index(self, label: Hashable) -> int:
        return self.support.index(label)

    def prob(self, label: Hashable) -> float:
        return float(self.probs[self.index(label)])

    def same_support(self, other: Pmf) -> bool:
        return self.support == other.support


@dataclass(frozen=True, eq=False)
class JointPmf:
    x_support: tuple
    y_support: tuple
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.shape != (len(self.x_support), len(self.y_support)):
            raise ValueError("joint probability matrix has wrong shape")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("joint probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "x_support", tuple(self.x_support))
        object.__setattr__(self, "y_support", tuple(self.y_support))
        object.__setattr__(self, "probs", probs)

    def x_marginal(self) -> Pmf:
        return Pmf(self.x_support, _clean(self.probs.sum(axis=1)))

    def y_marginal(self) -> Pmf:
        return Pmf(self.y_support, _clean(self.probs.sum(axis=0)))


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic conditional law P(y|x); rows are indexed by x.

    Source and reconstruction alphabets coincide, so ``x_support`` and
    ``y_support`` must be identical.
    """

    x_support: tuple
    y_support: tuple
    rows: np.ndarray

    def __post_init__(self):
        x_support = tuple(self.x_support)
        y_support = tuple(self.y_support)
        if x_support != y_support:
            raise ValueError("channel input and output alphabets must coincide")
        rows = _frozen(self.rows)
        if rows.shape != (len(x_support), len(y_support)):
            raise ValueError(f"channel matrix has shape {rows.shape}, expected "
                             f"{(len(x_support), len(y_support))}")
        if np.any(rows < 0) or not np.all(np.isfinite(rows)):
            raise ValueError("channel entries must be finite and nonnegative")
        bad = np.abs(rows.sum(axis=1) - 1.0) > PROB_TOL
        if np.any(bad):
            raise ValueError(f"channel rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        object.__setattr__(self, "x_support", x_support)
        object.__setattr__(self, "y_support", y_support)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_rows(cls, rows, support: Sequence[Hashable] | None = None) -> Channel:
        rows = np.asarray(rows, dtype=float)
        support = tuple(range(rows.shape[0])) if support is None else tuple(support)
        return cls(support, support, rows)

    @classmethod
    def identity(cls, support: Sequence[Hashable]) -> Channel:
        support = tuple(support)
        return cls(support, support, np.eye(len(support)))

    @classmethod
    def constant(cls, support: Sequence[Hashable], label: Hashable) -> Channel:
        support = tuple(support)
        rows = np.zeros((len(support), len(support)))
        rows[:, support.index(label)] = 1.0
        return cls(support, support, rows)

    @classmethod
    def bsc(cls, crossover: float) -> Channel:
        q = crossover
        return cls.from_rows([[1 - q, q], [q, 1 - q]])

    def __len__(self) -> int:
        return len(self.x_support)

    def power(self, n: int) -> Channel:
        """Memoryless extension to blocks of length n (lexicographic order)."""
        rows = np.ones((1, 1))
        for _ in range(n):
            rows = np.kron(rows, self.rows)
        support = block_labels(self.x_support, n)
        return Channel(support, support, rows)


@dataclass(frozen=True, eq=False)
class DistortionSpec:
    """Nonnegative distortion matrix delta(x, y).

    ``zero_diagonal`` certifies delta(x, x) == 0; it is checked, never assumed.
    """

    matrix: np.ndarray
    zero_diagonal: bool = False

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("distortion matrix must be square")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("distortion entries must be finite and nonnegative")
        if self.zero_diagonal and np.any(np.diag(m) != 0):
            raise ValueError("zero_diagonal certified but diagonal is nonzero")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def certify(cls, matrix) -> DistortionSpec:
        """Build a spec, setting ``zero_diagonal`` iff the diagonal vanishes."""
        m = np.asarray(matrix, dtype=float)
        return cls(m, zero_diagonal=bool(np.all(np.diag(m) == 0)))

    @classmethod
    def hamming(cls, k: int) -> DistortionSpec:
        return cls(1.0 - np.eye(k), zero_diagonal=True)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def additive(self, n: int) -> DistortionSpec:
        """Block distortion delta_n(x^n, y^n) = sum_i delta(x_i, y_i)."""
        k = len(self)
        m = np.zeros((1, 1))
        for _ in range(n):
            m = (m[:, None, :, None] + self.matrix[None, :, None, :]).reshape(
                m.shape[0] * k, m.shape[1] * k)
        return DistortionSpec(m, zero_diagonal=self.zero_diagonal)


def block_labels(alphabet: Sequence[Hashable], n: int) -> tuple:
    """All length-n blocks over ``alphabet`` as tuples, lexicographically ordered."""
    return tuple(itertools.product(tuple(alphabet), repeat=n))


def _clean(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    return p / p.sum()
