"""Nystrom discretization of det(I - P K P) on unions of intervals.

The determinant of the symmetrized matrix I - W^{1/2} K W^{1/2} over
composite Gauss-Legendre nodes approximates the Fredholm determinant; error
estimates come from half-order and shrunk-domain reruns (Richardson-style
comparison, reported, never extrapolated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError
from .kernel import ExtendedKernelEval, KernelSpec, kernel_eval
from .quad import Scheme, build_scheme


def build_quadrature(intervals, order: int = 40, splits=(),
                     max_panel=None) -> Scheme:
    """Composite Gauss-Legendre scheme over intervals with mandatory split
    points (panels never straddle a split)."""
    return build_scheme(intervals, order=order, splits=splits,
                        max_panel=max_panel)


@dataclass(frozen=True)
class NystromSystem:
    """Assembled discretization of I - K over per-line intervals.

    ``block_fn(i, j, x, y)`` returns the kernel matrix between line i nodes x
    and line j nodes y; plain one-line kernels ignore (i, j).  ``pad_side``
    says which end of each interval is the truncation of an infinite tail
    (used by the shrunk-domain error rerun).
    """

    intervals: tuple
    order: int
    block_fn: object
    splits: tuple = ()
    max_panel: float | None = None
    pad_side: str = "lower"
    schemes: tuple = None

    def __post_init__(self):
        if self.schemes is None:
            schemes = tuple(
                build_scheme([iv], order=self.order, splits=self.splits,
                             max_panel=self.max_panel)
                for iv in self.intervals)
            object.__setattr__(self, "schemes", schemes)

    @property
    def size(self) -> int:
        return sum(s.size for s in self.schemes)

    def matrix(self) -> np.ndarray:
        """I - W^{1/2} K W^{1/2} over the concatenated nodes."""
        sizes = [s.size for s in self.schemes]
        n = sum(sizes)
        offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        out = np.eye(n)
        roots = [np.sqrt(s.weights) for s in self.schemes]
        for i, si in enumerate(self.schemes):
            for j, sj in enumerate(self.schemes):
                kij = self.block_fn(i, j, si.nodes, sj.nodes)
                out[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] -= \
                    roots[i][:, None] * kij * roots[j][None, :]
        return out

    def det(self) -> float:
        sign, logabs = np.linalg.slogdet(self.matrix())
        return float(sign * np.exp(logabs))

    def _shrunk(self, amount: float) -> "NystromSystem":
        if self.pad_side == "lower":
            iv = tuple((lo + amount, hi) for lo, hi in self.intervals)
        else:
            iv = tuple((lo, hi - amount) for lo, hi in self.intervals)
        return replace(self, intervals=iv, schemes=None)

    def _half_order(self) -> "NystromSystem":
        return replace(self, order=max(4, self.order // 2), schemes=None)


@dataclass(frozen=True)
class DetResult:
    value: float
    error_estimate: float
    order_used: int
    pad_used: float


def fredholm_det(system: NystromSystem, shrink: float = 2.0) -> DetResult:
    """Determinant of the system with an error estimate from a half-order
    run and a domain shrunk by ``shrink``."""
    value = system.det()
    if not math.isfinite(value):
        raise ConvergenceError("singular or non-finite Nystrom determinant",
                               value=value, error_estimate=math.inf)
    v_half = system._half_order().det()
    v_pad = system._shrunk(shrink).det()
    err = abs(value - v_half) + abs(value - v_pad)
    pad = min(hi - lo for lo, hi in system.intervals)
    return DetResult(value=value, error_estimate=float(err),
                     order_used=system.order, pad_used=float(pad))


def _extended_block_fn(kern: ExtendedKernelEval, indices):
    def block(i, j, x, y):
        return kern.block(indices[i], indices[j], x, y)
    return block


def rbm_probability(spec: KernelSpec, a, target: float = 1e-6,
                    order: int = 40, pad: float | None = None,
                    max_rounds: int = 4,
                    kern: ExtendedKernelEval | None = None) -> DetResult:
    """P(X_t(n_j) >= a_j for all j) as a Fredholm determinant.

    Each half-line (-inf, a_j] is truncated to [a_j - pad, a_j]; the
    conjugated kernel decays exponentially below the levels, so moderate
    pads converge.  Order doubles and the pad grows until the internal error
    estimate is below ``target``.
    """
    a = [float(v) for v in np.atleast_1d(a)]
    if len(a) != len(spec.indices):
        raise ValueError("need one threshold per index")
    t = spec.t
    if pad is None:
        pad = 10.0 * math.sqrt(t) + (spec.ic.max_level - spec.ic.min_level)
    if kern is None:
        kern = kernel_eval(spec)
    # panels resolve the bulk oscillation of psi_n in the z variables
    max_panel = 1.5 * math.pi * math.sqrt(t / spec.n_max)
    splits = tuple(spec.ic.levels)
    # the kernel's mass lives between the lowest particle's reach and the
    # levels; a threshold far above it must not drag the window away
    reach = spec.ic.min_level - 2.0 * math.sqrt(spec.n_max * t)
    last_exc = None
    for round_ in range(max_rounds):
        intervals = tuple((min(aj, reach) - pad, aj) for aj in a)
        system = NystromSystem(intervals=intervals, order=order,
                               block_fn=_extended_block_fn(kern, spec.indices),
                               splits=splits, max_panel=max_panel,
                               pad_side="lower")
        res = fredholm_det(system, shrink=max(2.0, 0.1 * pad))
        if res.error_estimate < target:
            tol = 10.0 * max(res.error_estimate, 1e-14)
            if not (-tol <= res.value <= 1.0 + tol):
                raise ConvergenceError(
                    f"determinant {res.value} outside [0, 1] beyond "
                    f"tolerance {tol}", value=res.value,
                    error_estimate=res.error_estimate)
            return DetResult(res.value, res.error_estimate, order, pad)
        order = 2 * order
        pad = pad + 3.0 * math.sqrt(t) + 2.0
        last_exc = res
    raise ConvergenceError(
        f"determinant refinement stalled at error "
        f"{last_exc.error_estimate:.3e} (target {target:.1e}); last value "
        f"{last_exc.value!r}", value=last_exc.value,
        error_estimate=last_exc.error_estimate)
