"""Pearson correlation and the chi-square independence test used by the correlation rule."""

from __future__ import annotations

import math
import statistics
from collections import Counter
from datetime import date
from typing import Any, Hashable, Sequence

from ..values import Timestamp

DEFAULT_PEARSON_THRESHOLD = 0.1
DEFAULT_ALPHA = 0.05

# upper 5% points of the chi-square distribution, df = 1..30
_CHI2_CRITICAL_05 = (
    3.841459, 5.991465, 7.814728, 9.487729, 11.070498, 12.591587, 14.067140, 15.507313, 16.918978, 18.307038,
    19.675138, 21.026070, 22.362032, 23.684791, 24.995790, 26.296228, 27.587112, 28.869299, 30.143527, 31.410433,
    32.670573, 33.924438, 35.172462, 36.415029, 37.652484, 38.885139, 40.113272, 41.337138, 42.556968, 43.772972,
)


class Degenerate(ValueError):
    """A column has zero variance or a single category, so the pair cannot be tested."""


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError("pearson needs equal-length samples")
    if len(xs) < 2:
        raise Degenerate("fewer than two observations")
    try:
        return statistics.correlation([float(x) for x in xs], [float(y) for y in ys])
    except statistics.StatisticsError as exc:
        raise Degenerate(str(exc)) from None


def contingency(xs: Sequence[Hashable], ys: Sequence[Hashable]) -> list[list[int]]:
    """Observed counts; rows and columns ordered by first appearance."""
    if len(xs) != len(ys):
        raise ValueError("contingency needs equal-length samples")
    rows = list(dict.fromkeys(xs))
    cols = list(dict.fromkeys(ys))
    counts = Counter(zip(xs, ys))
    return [[counts[(r, c)] for c in cols] for r in rows]


def chi_square_statistic(table: Sequence[Sequence[float]]) -> float:
    """Pearson's statistic, sum of (O - E)^2 / E without continuity correction."""
    if len(table) < 2 or len(table[0]) < 2:
        raise Degenerate("contingency table needs at least two rows and two columns")
    row_totals = [math.fsum(r) for r in table]
    col_totals = [math.fsum(c) for c in zip(*table)]
    total = math.fsum(row_totals)
    if total <= 0 or any(t == 0 for t in row_totals) or any(t == 0 for t in col_totals):
        raise Degenerate("contingency table has an empty margin")
    terms = []
    for i, r in enumerate(table):
        for j, observed in enumerate(r):
            expected = row_totals[i] * col_totals[j] / total
            terms.append((observed - expected) ** 2 / expected)
    return math.fsum(terms)


def chi_square_critical(df: int, alpha: float = DEFAULT_ALPHA) -> float:
    """Critical value: embedded table for alpha 0.05 and df <= 30, Wilson-Hilferty otherwise."""
    if df < 1:
        raise ValueError("degrees of freedom must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if alpha == DEFAULT_ALPHA and df <= len(_CHI2_CRITICAL_05):
        return _CHI2_CRITICAL_05[df - 1]
    z = statistics.NormalDist().inv_cdf(1 - alpha)
    h = 2.0 / (9.0 * df)
    return df * (1 - h + z * math.sqrt(h)) ** 3


def chi_square_dependent(xs: Sequence[Hashable], ys: Sequence[Hashable], alpha: float = DEFAULT_ALPHA) -> tuple[bool, float, float]:
    """(independence rejected, statistic, critical value)."""
    table = contingency(xs, ys)
    stat = chi_square_statistic(table)
    df = (len(table) - 1) * (len(table[0]) - 1)
    crit = chi_square_critical(df, alpha)
    return stat > crit, stat, crit


def as_number(value: Any) -> float | None:
    """Numeric view for correlation: numbers, dates as ordinals, timestamps as epoch seconds."""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, date):
        return float(value.toordinal())
    if isinstance(value, Timestamp):
        return float(value.seconds)
    return None
