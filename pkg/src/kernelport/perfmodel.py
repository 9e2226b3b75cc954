"""Closed-form work models, iteration scaling, GFLOPS, and roofline placement.

Flop counts are computed in exact arithmetic (Python ints, Fractions for
the models with irrational factors) so that counts stay exact for sizes
up to 1e7 and beyond.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Union

from .errors import NonPositiveTime, UnknownKernel

FlopCount = Union[int, Fraction]

CG_ITERATION_CAP = 25  # inner solver iterations per outer step


def _nnz_tridiagonal(n: int) -> int:
    return 3 * n - 2


def flops(kernel_id: str, n: int, r: int) -> FlopCount:
    """Exact flop count for one kernel invocation at size n with r repetitions.

    CG carries an additive setup term outside the repetition factor; all
    other kernels are linear in r. EP excludes transcendental costs
    (sqrt/log) by default; pass them via :func:`flops_ep` if needed.
    """
    if n < 1 or r < 1:
        raise ValueError("n and r must be >= 1")
    k = kernel_id.upper()
    if k == "CG":
        nnz = _nnz_tridiagonal(n)
        per_rep = 2 * nnz + 3 * n + CG_ITERATION_CAP * (2 * nnz + 10 * n)
        return r * per_rep + (2 * nnz + 3 * n)
    if k == "EP":
        return flops_ep(n, r)
    if k == "MG":
        return r * 576 * n**3
    if k == "FT":
        # 5 n^3 log2(n^3); log2 is irrational for non-power-of-two cubes,
        # kept exact as the Fraction of its binary floating value.
        return r * 5 * n**3 * Fraction(math.log2(n**3)) if n > 1 else 0
    if k == "DGEMM":
        return r * (2 * n**3 + 3 * n**2)
    raise UnknownKernel(kernel_id)


def flops_ep(n: int, r: int, include_transcendental: bool = False,
             transcendental_cost_per_sample: int = 40) -> Fraction:
    """Polar-method work model: 19 ops per candidate pair plus 8 per
    accepted sample, acceptance rate pi/4. Transcendental costs (sqrt,
    log) are excluded by default; when included, a documented per-sample
    surcharge is added at the same acceptance rate.
    """
    base = r * (19 * 2 ** (n + 1) + 2 * Fraction(math.pi) * 2**n)
    if include_transcendental:
        base += r * transcendental_cost_per_sample * Fraction(math.pi) / 4 * 2**n
    return base


class ScalingPolicy(str, Enum):
    INVERSE_SCALE = "inverse_scale"
    FIXED_AT_MIN_THEN_TWO = "fixed_at_min_then_two"
    FIXED_CAP = "fixed_cap"


@dataclass(frozen=True)
class IterationPolicy:
    kernel_id: str
    policy: ScalingPolicy
    iter_min: int
    iter_max: int


#: Per-kernel program-iteration policies matching the default runtime settings.
DEFAULT_ITERATION_POLICIES = {
    "CG": IterationPolicy("CG", ScalingPolicy.FIXED_CAP, 10, 10),
    "EP": IterationPolicy("EP", ScalingPolicy.INVERSE_SCALE, 2, 5),
    "MG": IterationPolicy("MG", ScalingPolicy.INVERSE_SCALE, 2, 10),
    "FT": IterationPolicy("FT", ScalingPolicy.INVERSE_SCALE, 2, 5),
    "DGEMM": IterationPolicy("DGEMM", ScalingPolicy.FIXED_AT_MIN_THEN_TWO, 2, 5),
}


def scaled_iterations(policy: IterationPolicy, n: int, n_min: int, n_max: int) -> int:
    """Effective per-size iteration count.

    inverse_scale: round(iter_max * n_min / n), clamped to [2, iter_max].
    fixed_at_min_then_two: iter_max at n_min, 2 for every larger size.
    fixed_cap: always iter_max.
    """
    if not (n_min <= n <= n_max):
        raise ValueError(f"n={n} outside [{n_min}, {n_max}]")
    if policy.policy is ScalingPolicy.INVERSE_SCALE:
        raw = round(policy.iter_max * n_min / n)
        return max(2, min(policy.iter_max, raw))
    if policy.policy is ScalingPolicy.FIXED_AT_MIN_THEN_TWO:
        return policy.iter_max if n == n_min else 2
    return policy.iter_max


def gflops(kernel_id: str, n: int, i_hat: int, r: int, t_kernel: float) -> float:
    """GFLOPS = i_hat * flops(n, r) / (t_kernel * 1e9).

    The effective count composes the closed-form model with the scaled
    per-size iteration count; t_kernel is the wall time of the full
    repetition loop.
    """
    if t_kernel <= 0:
        raise NonPositiveTime(f"t_kernel={t_kernel}")
    total = i_hat * Fraction(flops(kernel_id, n, r))
    return float(total / (Fraction(t_kernel) * 10**9))


class BoundClass(str, Enum):
    MEMORY_BOUND = "memory_bound"
    COMPUTE_BOUND = "compute_bound"


@dataclass(frozen=True)
class RooflinePoint:
    achieved_flops_per_s: float
    arithmetic_intensity: float
    peak_flops_per_s: float
    ridge_point: float
    percent_of_peak: float
    bound_class: BoundClass

    @property
    def implied_bandwidth(self) -> float:
        """peak/ridge in byte/s; reported for context, never asserted."""
        return self.peak_flops_per_s / self.ridge_point


def roofline_point(achieved: float, ai: float, peak: float, ridge: float) -> RooflinePoint:
    """Place an achieved (FLOP/s, FLOP/byte) point against the machine roofs.

    ai == ridge classifies as compute bound.
    """
    if achieved <= 0 or ai <= 0 or peak <= 0 or ridge <= 0:
        raise ValueError("all roofline inputs must be > 0")
    bound = BoundClass.MEMORY_BOUND if ai < ridge else BoundClass.COMPUTE_BOUND
    return RooflinePoint(
        achieved_flops_per_s=achieved,
        arithmetic_intensity=ai,
        peak_flops_per_s=peak,
        ridge_point=ridge,
        percent_of_peak=achieved / peak * 100.0,
        bound_class=bound,
    )


def write_roofline_csv(rows, path) -> None:
    """Emit a roofline table: one row per (kernel, size, RooflinePoint)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "kernel", "size", "achieved_flops_per_s", "arithmetic_intensity",
            "percent_of_peak", "bound_class",
        ])
        for kernel, size, point in rows:
            writer.writerow([
                kernel, size,
                f"{point.achieved_flops_per_s:.6e}",
                f"{point.arithmetic_intensity:.6g}",
                f"{point.percent_of_peak:.1f}",
                point.bound_class.value,
            ])
