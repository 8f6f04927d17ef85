"""Information-spectrum quantities at finite blocklength.

``Z_n = (1/n) log 1/P_{X^n}(X^n)`` is the normalised self-information of a
block.  Its tail F_n(R) = Pr[Z_n >= R] and the perception floor
inf{R : F_n(R) <= S} are computed exactly from the law of Z_n, which for
i.i.d. sources is an n-fold convolution of the per-symbol self-information
values and for Markov sources comes from block enumeration.
"""

from __future__ import annotations

import csv
import math
from typing import TextIO

import numpy as np

from .core import Pmf
from .source_models import (DEFAULT_ENUMERATION_CAP, SourceModel, block_probs,
                            sample_symbol_indices)
from .errors import EnumerationTooLargeError

MERGE_TOL = 1e-12
# slack on Z >= R comparisons; sums of n logs carry rounding noise
COMPARE_TOL = 1e-10


def _merge(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    gaps = np.diff(values) > MERGE_TOL * np.maximum(1.0, np.abs(values[1:]))
    starts = np.concatenate([[0], np.flatnonzero(gaps) + 1])
    return values[starts], np.add.reduceat(probs, starts)


def self_information_law(source: SourceModel, n: int, base: float = 2.0,
                         cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Support points (ascending) and probabilities of Z_n, in log-``base`` units."""
    if n < 1:
        raise ValueError("block length must be positive")
    if source.kind == "iid":
        p = source.symbol_pmf.probs
        live = p > 0
        step_v, step_p = -np.log(p[live]), p[live]
        values, probs = np.zeros(1), np.ones(1)
        for _ in range(n):
            values = (values[:, None] + step_v[None, :]).ravel()
            probs = (probs[:, None] * step_p[None, :]).ravel()
            values, probs = _merge(values, probs)
            if len(values) > cap:
                raise EnumerationTooLargeError(len(values), cap)
    else:
        bp = block_probs(source, n, cap)
        live = bp > 0
        values, probs = _merge(-np.log(bp[live]), bp[live])
    return values / (n * math.log(base)), probs


def f_spectrum_mc(source: SourceModel, n: int, R: float, base: float = 2.0,
                  trials: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of F_n(R) and its binomial standard error."""
    if trials < 1:
        raise ValueError("trials must be positive")
    idx = sample_symbol_indices(source, n, trials, seed)
    with np.errstate(divide="ignore"):
        if source.kind == "iid":
            logp = np.log(source.symbol_pmf.probs)[idx].sum(axis=1)
        else:
            logt = np.log(source.transition)
            logp = np.log(source.initial.probs)[idx[:, 0]]
            logp = logp + logt[idx[:, :-1], idx[:, 1:]].sum(axis=1)
    z = -logp / (n * math.log(base))
    est = float(np.mean(z >= R - COMPARE_TOL))
    return est, math.sqrt(est * (1 - est) / trials)


def f_spectrum(source: SourceModel, n: int, R: float, base: float = 2.0, mode: str = "exact",
               trials: int = 10_000, seed: int = 0) -> float:
    """F_n(R) = Pr[(1/n) log 1/P(X^n) >= R]."""
    if mode == "mc":
        return f_spectrum_mc(source, n, R, base, trials, seed)[0]
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    values, probs = self_information_law(source, n, base)
    return float(min(1.0, probs[values >= R - COMPARE_TOL].sum()))


def rate_for_perception(source: SourceModel, n: int, S: float, base: float = 2.0) -> float:
    """Perception floor inf{R : F_n(R) <= S}.

    F_n is a left-continuous step function, so the infimum is the smallest
    attainable value z with Pr[Z_n > z] <= S.  At S = 1 every R qualifies and
    the floor is defined as 0.
    """
    if not 0 <= S <= 1:
        raise ValueError("S must lie in [0, 1]")
    if S >= 1:
        return 0.0
    values, probs = self_information_law(source, n, base)
    tail_above = np.append(np.cumsum(probs[::-1])[::-1][1:], 0.0)
    j = int(np.flatnonzero(tail_above <= S + 1e-12)[0])
    return max(0.0, float(values[j]))


def best_support(p: Pmf, M: int) -> np.ndarray:
    """Indices of the M most probable atoms (ties to the lower index)."""
    if M < 1:
        raise ValueError("M must be positive")
    order = np.argsort(-p.probs, kind="stable")
    return np.sort(order[:M])


def best_support_tv(p: Pmf, M: int) -> float:
    """min TV(q, p) over q with at most M atoms = 1 - (mass of the M largest atoms)."""
    kept = p.probs[best_support(p, M)].sum()
    return max(0.0, 1.0 - float(kept))


def spectrum_rows(source: SourceModel, n: int, base: float = 2.0) -> list[tuple[float, float]]:
    """Breakpoints (z, F_n(z)) of the staircase, closed by (inf, 0)."""
    values, probs = self_information_law(source, n, base)
    tails = np.clip(np.cumsum(probs[::-1])[::-1], 0.0, 1.0)
    tails[0] = 1.0
    rows = [(float(v), float(t)) for v, t in zip(values, tails)]
    rows.append((math.inf, 0.0))
    return rows


def write_spectrum_csv(rows, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["R", "F_n"])
    for r, f in rows:
        writer.writerow([repr(r), repr(f)])
