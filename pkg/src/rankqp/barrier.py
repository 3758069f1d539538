"""Self-concordant barriers for interval blocks and the local metrics they induce.

Every variable block handled by this package is a one-dimensional interval,
so barriers, gradients and Hessians are scalar per block and the weighted
Hessian H_{w,x} is diagonal.  The auxiliary coordinate introduced by the
initial-point augmentation lives on the half line [0, inf) and uses a
one-sided log barrier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ValidationError

BOX = "box"
HALF_LINE = "half_line"


@dataclass(frozen=True)
class BlockDomain:
    """One variable block: an interval (lo, hi) or the half line (lo, inf).

    ``nu`` is the self-concordance parameter of the block barrier: 2 for a
    bounded box (sum of two log terms), 1 for the half line.
    """

    kind: str
    lo: float
    hi: float
    nu: float

    @staticmethod
    def box(lo, hi):
        if not lo < hi:
            raise ValidationError(f"box requires lo < hi, got [{lo}, {hi}]")
        return BlockDomain(BOX, float(lo), float(hi), 2.0)

    @staticmethod
    def nonneg_box(cap):
        if not cap > 0:
            raise ValidationError(f"cap must be positive, got {cap}")
        return BlockDomain(BOX, 0.0, float(cap), 2.0)

    @staticmethod
    def unit_interval02():
        return BlockDomain(BOX, 0.0, 2.0, 2.0)

    @staticmethod
    def half_line():
        return BlockDomain(HALF_LINE, 0.0, math.inf, 1.0)


def barrier_eval(domain: BlockDomain, x: float):
    """Value, gradient and Hessian of the block barrier at a strictly interior x.

    Box barrier: -log(x - lo) - log(hi - x); half line: -log(x - lo).
    """
    a = x - domain.lo
    if domain.kind == HALF_LINE:
        if a <= 0:
            raise DomainError(f"point {x} not interior to [{domain.lo}, inf)")
        return -math.log(a), -1.0 / a, 1.0 / a**2
    b = domain.hi - x
    if a <= 0 or b <= 0:
        raise DomainError(f"point {x} not interior to [{domain.lo}, {domain.hi}]")
    value = -math.log(a) - math.log(b)
    grad = -1.0 / a + 1.0 / b
    hess = 1.0 / a**2 + 1.0 / b**2
    return value, grad, hess


def barrier_third_derivative(domain: BlockDomain, x: float):
    # Used only by self-concordance spot checks.
    a = x - domain.lo
    if domain.kind == HALF_LINE:
        return -2.0 / a**3
    b = domain.hi - x
    return -2.0 / a**3 + 2.0 / b**3


def analytic_center(domain: BlockDomain) -> float:
    """Minimizer of the block barrier (midpoint of a box)."""
    if domain.kind == HALF_LINE:
        raise DomainError("half-line barrier has no analytic center")
    return 0.5 * (domain.lo + domain.hi)


# Vectorized interface.  Blocks are packed into lo/hi arrays once per
# instance; hi = +inf marks half-line blocks.

def pack_bounds(blocks):
    lo = np.array([d.lo for d in blocks], dtype=float)
    hi = np.array([d.hi for d in blocks], dtype=float)
    nu = np.array([d.nu for d in blocks], dtype=float)
    return lo, hi, nu


def check_interior(lo, hi, x, margin=0.0):
    a = x - lo
    b = hi - x
    ok = (a > margin) & ((b > margin) | np.isinf(hi))
    if not ok.all():
        i = int(np.argmin(ok))
        raise DomainError(f"coordinate {i} = {x[i]} not interior to [{lo[i]}, {hi[i]}]")


def grad_vec(lo, hi, x):
    g = -1.0 / (x - lo)
    upper = np.isfinite(hi)
    g[upper] += 1.0 / (hi[upper] - x[upper])
    return g


def hess_vec(lo, hi, x):
    h = 1.0 / (x - lo) ** 2
    upper = np.isfinite(hi)
    h[upper] += 1.0 / (hi[upper] - x[upper]) ** 2
    return h


@dataclass(frozen=True)
class LocalMetric:
    """Weighted barrier Hessian at a point, stored as diagonals.

    ``hdiag`` holds the unweighted per-block Hessians H_{x,i}; ``whdiag``
    is the diagonal of H_{w,x}, i.e. w_i * H_{x,i} blockwise.
    """

    hdiag: np.ndarray
    whdiag: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if np.any(self.hdiag <= 0):
            raise DomainError("singular barrier Hessian: point not strictly interior")


def metric_at(lo, hi, w, x) -> LocalMetric:
    check_interior(lo, hi, x)
    h = hess_vec(lo, hi, x)
    return LocalMetric(hdiag=h, whdiag=w * h, w=w)


def local_norms(metric: LocalMetric, i: int, v: float):
    """Per-block local norm ||v||_{x_i} and its dual ||v||*_{x_i}."""
    h = metric.hdiag[i]
    return abs(v) * math.sqrt(h), abs(v) / math.sqrt(h)


def weighted_norm(metric: LocalMetric, v):
    """||v||_{w,x} = ||H_{w,x}^{1/2} v||_2 over the whole domain."""
    return math.sqrt(float(np.sum(metric.whdiag * v * v)))


def weighted_dual_norm(metric: LocalMetric, v):
    """||v||*_{w,x} = ||H_{w,x}^{-1/2} v||_2 over the whole domain."""
    return math.sqrt(float(np.sum(v * v / metric.whdiag)))
