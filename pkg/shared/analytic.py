"""Closed-form scalability model: maintenance, query and storage cost per node.

Direct sums over the hierarchy are authoritative; the published closed forms
are carried next to them with their relative deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, List, Tuple

import numpy as np
from scipy import integrate

from shared.grid import LevelOutOfRange

DEFAULT_HOP_PROGRESS = 200.0
# mean distance between two uniform points of the unit square, (2 + sqrt2 + 5 ln(1 + sqrt2)) / 15
UNIT_SQUARE_MEAN_DISTANCE = 0.5214054331647207


class NonPositiveR(ValueError):
    pass


def _check_side(R: float) -> None:
    if R <= 0:
        raise NonPositiveR(f"level-0 side length must be positive, got {R}")


@dataclass(frozen=True)
class AnalyticParams:
    A: float
    N: int
    H: int
    R: float
    v: float
    z: float = DEFAULT_HOP_PROGRESS
    c: float = UNIT_SQUARE_MEAN_DISTANCE
    level_scale_exponent: int = 4
    normalize_hit_probs: bool = False

    def __post_init__(self) -> None:
        _check_side(self.R)
        if self.A <= 0 or self.N < 1 or self.z <= 0 or self.c <= 0:
            raise ValueError(f"A, N, z and c must be positive: {self}")
        if self.v < 0:
            raise ValueError(f"speed must be >= 0, got {self.v}")
        if self.H < 0:
            raise LevelOutOfRange(f"H must be >= 0, got {self.H}")
        if self.level_scale_exponent not in (2, 4):
            raise ValueError(f"level_scale_exponent must be 2 or 4, got {self.level_scale_exponent}")


@dataclass(frozen=True)
class LevelCost:
    level: int
    crossing_rate: float
    expected_hops: float
    hit_probability: float


@dataclass(frozen=True)
class CostReport:
    C_m: float
    C_q: float
    C_s: int
    C_m_closed_form: float
    C_q_closed_form: float
    levels: List[LevelCost] = field(default_factory=list)

    @property
    def C_m_deviation(self) -> float:
        return _relative_deviation(self.C_m_closed_form, self.C_m)

    @property
    def C_q_deviation(self) -> float:
        return _relative_deviation(self.C_q_closed_form, self.C_q)


def _relative_deviation(closed: float, direct: float) -> float:
    if direct == 0:
        return 0.0 if closed == 0 else math.inf
    return (closed - direct) / direct


def mean_chord(R: float) -> float:
    """Mean chord through a circle of diameter R for a uniform entry angle: 2R/pi."""
    _check_side(R)
    return 2.0 * R / math.pi


def crossing_rate(i: int, v: float, R: float) -> float:
    _check_side(R)
    if v < 0 or i < 0:
        raise ValueError(f"need v >= 0 and i >= 0, got v={v}, i={i}")
    return 4.0 ** (-i) * math.pi * v / (2.0 * R)


def expected_hops(i: int, params: AnalyticParams) -> float:
    return params.level_scale_exponent ** i * params.R * params.c / params.z


def hit_probability_exact(i: int, H: int, normalized: bool = False) -> Fraction:
    if not 0 <= i <= H:
        raise LevelOutOfRange(f"level {i} outside [0, {H}]")
    if i == 0:
        return Fraction(1, 4 ** H)
    exponent = H - i + 1 if normalized else H - i
    return Fraction(3, 4 ** exponent)


def hit_probability(i: int, H: int, normalized: bool = False) -> float:
    """Probability a query is satisfied at level i.

    The raw values are the published ones and sum to 4 - 3/4^H; the
    normalized values sum to 1.
    """
    return float(hit_probability_exact(i, H, normalized))


def maintenance_cost(params: AnalyticParams) -> float:
    return sum(crossing_rate(i, params.v, params.R) * expected_hops(i, params) for i in range(params.H + 1))


def query_cost(params: AnalyticParams) -> float:
    return sum(
        hit_probability(i, params.H, params.normalize_hit_probs) * expected_hops(i, params)
        for i in range(params.H + 1)
    )


def storage_cost(H: int) -> int:
    if H < 0:
        raise LevelOutOfRange(f"H must be >= 0, got {H}")
    return H + 1


def maintenance_closed_form(params: AnalyticParams) -> float:
    return params.v * math.pi * params.c * params.H / (2.0 * params.z)


def query_closed_form(params: AnalyticParams) -> float:
    return 3.0 * 4 ** params.H * params.c * params.R / params.z


def cost_report(params: AnalyticParams) -> CostReport:
    levels = [
        LevelCost(
            level=i,
            crossing_rate=crossing_rate(i, params.v, params.R),
            expected_hops=expected_hops(i, params),
            hit_probability=hit_probability(i, params.H, params.normalize_hit_probs),
        )
        for i in range(params.H + 1)
    ]
    return CostReport(
        C_m=maintenance_cost(params),
        C_q=query_cost(params),
        C_s=storage_cost(params.H),
        C_m_closed_form=maintenance_closed_form(params),
        C_q_closed_form=query_closed_form(params),
        levels=levels,
    )


def _triangular(u: float) -> float:
    # density of the difference of two uniforms on [0, 1]
    return 1.0 - abs(u)


def unit_square_constant() -> float:
    """Mean distance between two uniform points in the unit square, by 2-D quadrature.

    The 4-D integral reduces to the difference vector (u, w) weighted by the
    triangular density on each axis; by symmetry only the positive quadrant
    is integrated.
    """
    value, _ = integrate.dblquad(
        lambda w, u: math.hypot(u, w) * _triangular(u) * _triangular(w),
        0.0, 1.0, 0.0, 1.0,
        epsabs=1e-10, epsrel=1e-10,
    )
    return 4.0 * value


def unit_interval_constant() -> float:
    """1-D analogue of :func:`unit_square_constant`: mean |x1 - x2| on [0, 1] = 1/3."""
    value, _ = integrate.quad(lambda u: abs(u) * _triangular(u), -1.0, 1.0, points=[0.0], epsabs=1e-12)
    return value


def monte_carlo_unit_square(samples: int = 10 ** 7, seed: int = 0, batch: int = 10 ** 6) -> Tuple[float, float]:
    """Independent oracle for the unit-square constant: (mean, standard error)."""
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    remaining = samples
    while remaining > 0:
        n = min(batch, remaining)
        p, q = rng.random((n, 2)), rng.random((n, 2))
        d = np.hypot(p[:, 0] - q[:, 0], p[:, 1] - q[:, 1])
        total += float(d.sum())
        total_sq += float((d * d).sum())
        remaining -= n
    mean = total / samples
    variance = total_sq / samples - mean * mean
    return mean, math.sqrt(variance / samples)


def monte_carlo_chord(R: float, samples: int = 10 ** 6, seed: int = 0) -> float:
    _check_side(R)
    theta = np.random.default_rng(seed).uniform(0.0, math.pi / 2.0, samples)
    return float(np.mean(R * np.cos(theta)))


def depth_for_network(N: int, density: float, R: float) -> int:
    """Hierarchy depth for N nodes at fixed density and level-0 side R (at least 1)."""
    if N < 1 or density <= 0:
        raise ValueError(f"need N >= 1 and density > 0, got N={N}, density={density}")
    _check_side(R)
    area = N / density
    ratio = math.sqrt(area) / R
    # tolerate float noise on exact powers of two
    return max(1, math.ceil(math.log2(ratio) - 1e-9))


def params_for_network(N: int, density: float, R: float, v: float, **overrides) -> AnalyticParams:
    return AnalyticParams(A=N / density, N=N, H=depth_for_network(N, density, R), R=R, v=v, **overrides)


def scaling_slope(metric: str, n_values: Iterable[int], template: AnalyticParams, density: float) -> float:
    """Slope of log10(cost) against log10(N), with H derived from N at fixed density."""
    costs = {"maintenance": maintenance_cost, "query": query_cost, "storage": lambda p: storage_cost(p.H)}
    if metric not in costs:
        raise ValueError(f"unknown metric {metric!r}")
    ns = np.asarray(list(n_values), dtype=float)
    values = []
    for n in ns:
        params = replace(template, N=int(n), A=n / density, H=depth_for_network(int(n), density, template.R))
        values.append(costs[metric](params))
    slope, _ = np.polyfit(np.log10(ns), np.log10(np.asarray(values, dtype=float)), 1)
    return float(slope)


ANALYTIC_COLUMNS = [
    "N", "v", "H", "level", "crossing_rate", "expected_hops", "hit_probability",
    "C_m", "C_q", "C_s", "C_m_closed_form", "C_q_closed_form",
]


def report_rows(
    n_values: Iterable[int],
    v_values: Iterable[float],
    density: float,
    R: float,
    z: float = DEFAULT_HOP_PROGRESS,
    level_scale_exponent: int = 4,
    normalize_hit_probs: bool = False,
) -> List[dict]:
    """Per-level breakdown plus a ``total`` row for every (N, v) pair."""
    rows: List[dict] = []
    for n in sorted(n_values):
        for v in sorted(v_values):
            params = params_for_network(
                n, density, R, v, z=z,
                level_scale_exponent=level_scale_exponent, normalize_hit_probs=normalize_hit_probs,
            )
            report = cost_report(params)
            base = {"N": n, "v": v, "H": params.H}
            for level in report.levels:
                rows.append({
                    **base,
                    "level": level.level,
                    "crossing_rate": level.crossing_rate,
                    "expected_hops": level.expected_hops,
                    "hit_probability": level.hit_probability,
                })
            rows.append({
                **base,
                "level": "total",
                "C_m": report.C_m,
                "C_q": report.C_q,
                "C_s": report.C_s,
                "C_m_closed_form": report.C_m_closed_form,
                "C_q_closed_form": report.C_q_closed_form,
            })
    return rows
