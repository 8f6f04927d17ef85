"""Entropy, divergences, mutual information and empirical estimators.

Everything is computed in natural logs and converted at the end, with the
convention 0 log 0 = 0.
"""

from __future__ import annotations

import math
from typing import Hashable, Iterable, Sequence

import numpy as np

from .core import Channel, JointPmf, Pmf
from .errors import AlphabetMismatchError, DivergenceInfiniteError, EmptySamplesError


def entropy_nats(probs: np.ndarray) -> float:
    p = np.asarray(probs, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p))) + 0.0


def entropy(p: Pmf, base: float = 2.0) -> float:
    return entropy_nats(p.probs) / math.log(base)


def entropy_array(probs: np.ndarray, base: float = 2.0, axis: int = -1) -> np.ndarray:
    """Vectorised entropy along ``axis`` for raw probability arrays."""
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=axis) / math.log(base)


def _check_common(p: Pmf, q: Pmf) -> None:
    if p.support != q.support:
        raise AlphabetMismatchError("distributions are defined on different alphabets")


def tv_distance(p: Pmf, q: Pmf) -> float:
    """Variational distance (1/2) sum |p - q| on a common ordered alphabet."""
    _check_common(p, q)
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def kl_divergence(p: Pmf, q: Pmf, base: float = 2.0) -> float:
    _check_common(p, q)
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        raise DivergenceInfiniteError("p is not absolutely continuous w.r.t. q")
    pm, qm = p.probs[mask], q.probs[mask]
    return max(0.0, float(np.sum(pm * np.log(pm / qm))) / math.log(base))


def joint_pmf(p_x: Pmf, channel: Channel) -> JointPmf:
    if channel.x_support != p_x.support:
        raise AlphabetMismatchError("channel rows are not indexed by the source support")
    return JointPmf(p_x.support, channel.y_support, p_x.probs[:, None] * channel.rows)


def mutual_information(p_x: Pmf, channel: Channel, base: float = 2.0) -> float:
    joint = joint_pmf(p_x, channel).probs
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    mask = joint > 0
    ratio = joint[mask] / np.outer(px, py)[mask]
    return max(0.0, float(np.sum(joint[mask] * np.log(ratio))) / math.log(base))


def empirical_pmf(samples: Iterable[Hashable], alphabet: Sequence[Hashable]) -> Pmf:
    alphabet = tuple(alphabet)
    lookup = {s: i for i, s in enumerate(alphabet)}
    counts = np.zeros(len(alphabet))
    total = 0
    for s in samples:
        try:
            counts[lookup[s]] += 1
        except KeyError:
            raise ValueError(f"sample {s!r} is not in the alphabet") from None
        total += 1
    if total == 0:
        raise EmptySamplesError("cannot form an empirical pmf from no samples")
    return Pmf(alphabet, counts / total)


def empirical_pmf_from_indices(indices: np.ndarray, support: Sequence[Hashable]) -> Pmf:
    """Fast path of :func:`empirical_pmf` when samples are already support indices."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise EmptySamplesError("cannot form an empirical pmf from no samples")
    counts = np.bincount(indices, minlength=len(support)).astype(float)
    return Pmf(tuple(support), counts / indices.size)


def p_limsup_estimate(samples: Sequence[float], eps: float = 0.01) -> float:
    """Finite-sample surrogate of the limit superior in probability.

    Returns the smallest sample value alpha such that the fraction of samples
    strictly greater than alpha is at most ``eps``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    z = np.sort(np.asarray(samples, dtype=float))
    m = z.size
    if m == 0:
        raise EmptySamplesError("p-limsup estimate needs samples")
    # fraction strictly above z[i] is (m - number of samples <= z[i]) / m
    above = m - np.searchsorted(z, z, side="right")
    ok = np.flatnonzero(above <= eps * m)
    return float(z[ok[0]])
