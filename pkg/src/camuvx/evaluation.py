"""Scoring discovery output against a known graph.

Unknown predictions get the expected value of a random guess: each such
ordered pair adds ``0.5 * P / (P + N)`` to TP and to FN and ``0.5 * N / (P + N)``
to TN and to FP, with ``P`` and ``N`` the true positive and negative counts.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .discovery import DiscoveryResult
from .graph import CausalGraph

CSV_FIELDS = (
    "task",
    "mode",
    "tp",
    "fp",
    "tn",
    "fn",
    "precision",
    "recall",
    "f1",
    "n_unknown",
    "degenerate",
)


@dataclass(frozen=True)
class MetricReport:
    task: str
    mode: str
    tp: float
    fp: float
    tn: float
    fn: float
    precision: float
    recall: float
    f1: float
    n_unknown: int
    degenerate: bool

    def row(self) -> dict:
        return asdict(self)


def _report(task: str, mode: str, truth: np.ndarray, pred: np.ndarray, unknown: np.ndarray) -> MetricReport:
    """Score boolean ``pred`` against ``truth`` over off-diagonal cells, crediting ``unknown`` cells by halves."""
    p = truth.shape[0]
    off = ~np.eye(p, dtype=bool)
    t, pr, un = truth[off], pred[off], unknown[off]
    pos = float(t.sum())
    neg = float(t.size - t.sum())
    total = pos + neg
    known = ~un
    tp = float(np.sum(known & t & pr))
    fp = float(np.sum(known & ~t & pr))
    tn = float(np.sum(known & ~t & ~pr))
    fn = float(np.sum(known & t & ~pr))
    k = int(un.sum())
    if k and total:
        half_p = 0.5 * pos / total
        half_n = 0.5 * neg / total
        tp += k * half_p
        fn += k * half_p
        tn += k * half_n
        fp += k * half_n
    degenerate = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, degenerate = 1.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, degenerate = 1.0, True
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricReport(task, mode, tp, fp, tn, fn, precision, recall, f1, k, degenerate)


def true_parents(truth: CausalGraph) -> np.ndarray:
    """``T[i, j]`` is True when observed column ``j`` is a parent of column ``i``."""
    obs = truth.observed
    p = len(obs)
    t = np.zeros((p, p), dtype=bool)
    for i in range(p):
        for j in range(p):
            t[i, j] = (obs[j], obs[i]) in truth.edges
    return t


def true_ancestors(truth: CausalGraph) -> np.ndarray:
    """``T[b, a]`` is True when column ``a`` is an ancestor of column ``b``."""
    obs = truth.observed
    p = len(obs)
    t = np.zeros((p, p), dtype=bool)
    for b in range(p):
        anc = truth._ancestors[obs[b]]
        for a in range(p):
            t[b, a] = obs[a] in anc
    return t


def _check_dims(p: int, truth: CausalGraph) -> None:
    if p != len(truth.observed):
        raise ValueError(f"prediction covers {p} variables, truth has {len(truth.observed)} observed")


def score_adjacency(predicted: np.ndarray, truth: CausalGraph, mode: str = "half") -> MetricReport:
    """Score a tri-adjacency (``1`` / ``0`` / ``NaN``) over ordered pairs.

    ``mode="strict"`` treats Unknown entries as predicted absences.
    """
    a = np.asarray(predicted, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    _check_dims(a.shape[0], truth)
    unknown = np.isnan(a)
    pred = a == 1.0
    if mode == "strict":
        unknown = np.zeros_like(unknown)
    elif mode != "half":
        raise ValueError("mode must be 'half' or 'strict'")
    return _report("adjacency", mode, true_parents(truth), pred, unknown)


def _closure(rel: np.ndarray) -> np.ndarray:
    """Transitive closure of ``rel[b, a]`` = "a precedes b"."""
    c = rel.copy()
    p = c.shape[0]
    for k in range(p):
        c |= c[:, [k]] & c[[k], :]
    np.fill_diagonal(c, False)
    return c


def predicted_ancestors(result: DiscoveryResult | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(positive, negative)`` ancestor predictions, both indexed ``[b, a]``.

    Positive: closure of Edge entries and ``M`` sets. Negative: ``a`` in
    ``H[b]``, ``b`` a predicted ancestor of ``a``, or no chain of Edge or
    Unknown entries (nor ``M`` links) leading from ``a`` to ``b``.
    """
    if isinstance(result, DiscoveryResult):
        a, m, h = result.A, result.M, result.H
    else:
        a = np.asarray(result, dtype=float)
        m = h = [set() for _ in range(a.shape[0])]
    p = a.shape[0]
    sure = a == 1.0
    for b in range(p):
        for x in m[b]:
            sure[b, x] = True
    np.fill_diagonal(sure, False)
    pos = _closure(sure)
    possible = _closure(sure | np.isnan(a))
    neg = ~possible | pos.T
    for b in range(p):
        for x in h[b]:
            neg[b, x] = True
    neg &= ~pos
    np.fill_diagonal(neg, False)
    return pos, neg


def score_ancestors(predicted: DiscoveryResult | np.ndarray, truth: CausalGraph, mode: str = "half") -> MetricReport:
    """Score the predicted ancestor relation over ordered observed pairs.

    Pairs neither certified positive nor ruled out are undetermined: they
    get half credit in ``"half"`` mode and count as absences in ``"strict"``.
    """
    pos, neg = predicted_ancestors(predicted)
    _check_dims(pos.shape[0], truth)
    if mode == "strict":
        unknown = np.zeros_like(pos)
    elif mode == "half":
        unknown = ~pos & ~neg
    else:
        raise ValueError("mode must be 'half' or 'strict'")
    return _report("ancestor", mode, true_ancestors(truth), pos, unknown)


__all__ = [
    "CSV_FIELDS",
    "MetricReport",
    "predicted_ancestors",
    "score_adjacency",
    "score_ancestors",
    "true_ancestors",
    "true_parents",
]
