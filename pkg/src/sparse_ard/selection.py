"""Model scoring and selection over parameter sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ard import negative_log_evidence
from .errors import LengthMismatchError
from .sparsifiers import SparseFit


@dataclass(frozen=True)
class SupportReport:
    """Support mismatch and coefficient error against a known truth."""

    added: int
    missed: int
    l1_error: float
    l2_error: float


@dataclass(frozen=True)
class SelectionOutcome:
    """A chosen sweep parameter plus the full score table behind it."""

    chosen_param: float
    score_table: tuple
    criterion: str


def support_report(learned, truth):
    """Count added and missed nonzeros and coefficient-error norms."""
    learned = np.asarray(learned, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if learned.shape != truth.shape:
        raise LengthMismatchError("learned and truth must have equal length")
    added = int(np.sum((learned != 0) & (truth == 0)))
    missed = int(np.sum((learned == 0) & (truth != 0)))
    diff = learned - truth
    return SupportReport(
        added=added,
        missed=missed,
        l1_error=float(np.sum(np.abs(diff))),
        l2_error=float(np.linalg.norm(diff)),
    )


def aicc_score(problem, fit, corrected=True):
    """Information-criterion score of a fit: 2k plus the evidence loss.

    ``k`` counts the surviving scales plus the noise variance. The loss is
    evaluated at the fit's own noise variance with regularization terms
    excluded, so scores are comparable across methods. The small-sample
    correction ``2k(k+1)/(m-k-1)`` is added unless ``corrected`` is False;
    inadmissible sizes (``m <= k + 1``) score infinity.
    """
    base = fit.base if isinstance(fit, SparseFit) else fit
    k = int(np.sum(base.gamma > 0)) + 1
    m = problem.m
    if corrected and m <= k + 1:
        return math.inf
    loss = negative_log_evidence(problem.with_sigma2(base.sigma2), base.gamma)
    score = 2.0 * k + loss
    if corrected:
        score += 2.0 * k * (k + 1) / (m - k - 1)
    return float(score)


def _param_key(fit):
    param = fit.spec.param if isinstance(fit, SparseFit) else None
    return math.inf if param is None else float(param)


def select_by_aicc(problem, candidates, corrected=True):
    """Pick the sweep parameter with the lowest information score.

    Ties break toward fewer surviving terms, then the smaller parameter.
    """
    table = []
    for fit in candidates:
        base = fit.base if isinstance(fit, SparseFit) else fit
        size = int(np.sum(base.gamma > 0))
        table.append((_param_key(fit), aicc_score(problem, fit, corrected), size))
    order = sorted(
        range(len(table)), key=lambda i: (table[i][1], table[i][2], table[i][0])
    )
    best = order[0]
    return SelectionOutcome(
        chosen_param=table[best][0], score_table=tuple(table), criterion="aicc"
    ), candidates[best]


def oracle_select(candidates, xi_true):
    """Pick the candidate with the fewest added plus missed terms.

    Requires the true coefficient vector; ties break by the smaller l2
    coefficient error, then by the smaller sweep parameter.
    """
    if not len(candidates):
        raise ValueError("candidates must be nonempty")
    xi_true = np.asarray(xi_true, dtype=float)
    table = []
    for fit in candidates:
        base = fit.base if isinstance(fit, SparseFit) else fit
        report = support_report(base.mu_xi, xi_true)
        size = int(np.sum(base.gamma > 0))
        table.append(
            (_param_key(fit), report.added + report.missed, report.l2_error, size)
        )
    order = sorted(
        range(len(table)), key=lambda i: (table[i][1], table[i][2], table[i][0])
    )
    best = order[0]
    score_table = tuple((p, float(s), n) for p, s, _, n in table)
    return SelectionOutcome(
        chosen_param=table[best][0], score_table=score_table, criterion="oracle"
    ), candidates[best]
