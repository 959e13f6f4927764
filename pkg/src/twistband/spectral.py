"""Discrete spectrum of the twisted strip below the essential-spectrum edge.

The number of eigenvalues below the transverse threshold grows by one each
time the half-overlap length crosses a critical value 0 < l_1 < l_2 < ...;
this module counts those eigenvalues on the truncated window and brackets the
critical lengths by bisecting the count.  All comparisons are made against the
*discrete* threshold slice_threshold(h2) minus a fixed spectral gap, which
removes the leading transverse discretization shift from the counting rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from .discrete import SparseOperator, assemble_operator, build_grid, slice_threshold
from .geometry import OverlapRegime, make_geometry

#: margin below the discrete threshold that an eigenvalue must clear to count
DELTA_GAP = 1e-4

#: largest half-overlap the critical-length scan will consider
SCAN_LIMIT = 20.0

_DENSE_LIMIT = 6000


@dataclass(frozen=True)
class CountingGridSpec:
    """Window/grid used for eigenvalue counting."""

    truncation: float = 60.0
    n2: int = 17
    target_h1: float = 0.035
    kmax: int = 6

    def refined(self) -> "CountingGridSpec":
        return CountingGridSpec(self.truncation, self.n2, self.target_h1 / 2, self.kmax)

    def widened(self, extra: float = 5.0) -> "CountingGridSpec":
        return CountingGridSpec(self.truncation + extra, self.n2, self.target_h1, self.kmax)


def eigenvalues_below(op: SparseOperator, threshold: float, kmax: int = 6) -> np.ndarray:
    """Sorted eigenvalues of the symmetrized operator strictly below threshold.

    Shift-invert Lanczos about 0 (the operator is positive definite), with an
    explicit residual gate on every returned pair; falls back to a dense solve
    on small problems if ARPACK stalls.  Raises if the request saturates kmax,
    so a too-small subspace can never silently undercount.
    """
    if op.radiation is not None:
        raise ValueError("eigenvalue counting requires the hard-truncated operator")
    A = op.matrix
    n = op.n_unknown
    k = min(kmax, n - 2)
    # deterministic, symmetry-free start vector: ARPACK's internal seed is
    # process-stateful, and a symmetric start could hide odd-parity states
    v0 = np.random.default_rng(1876423).standard_normal(n)
    try:
        vals, vecs = eigsh(A, k=k, sigma=0.0, which="LM", v0=v0)
    except (ArpackError, ArpackNoConvergence):
        if n > _DENSE_LIMIT:
            raise
        vals, vecs = sla.eigh(A.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    scale = float(np.abs(A.diagonal()).max())
    for i in range(vals.size):
        r = A @ vecs[:, i] - vals[i] * vecs[:, i]
        if np.linalg.norm(r) > 1e-8 * scale:
            raise RuntimeError(f"eigenpair residual {np.linalg.norm(r):.2e} fails gate")
    below = vals[vals < threshold]
    if below.size == vals.size:
        raise RuntimeError("kmax saturated: increase kmax to count reliably")
    return below


def count_bound_states(half_overlap: float, spec: CountingGridSpec = CountingGridSpec()) -> int:
    """Number of discrete eigenvalues below slice_threshold(h2) - DELTA_GAP
    for the twisted strip with the given half-overlap."""
    geo, part = make_geometry(OverlapRegime(half_overlap), spec.truncation)
    grid = build_grid(geo, spec.n2, spec.target_h1)
    op = assemble_operator(grid, part)
    thr = slice_threshold(grid.h2) - DELTA_GAP
    kmax = spec.kmax
    while True:
        try:
            return int(eigenvalues_below(op, thr, kmax=kmax).size)
        except RuntimeError:
            if kmax >= 4 * spec.kmax:
                raise
            kmax *= 2


@dataclass(frozen=True)
class CriticalLength:
    """Bracketed n-th critical half-overlap."""

    index: int
    value: float
    bracket: tuple[float, float]
    spec: CountingGridSpec

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]


def find_critical_length(
    n: int,
    tol: float = 1e-3,
    spec: CountingGridSpec = CountingGridSpec(),
    coarse_step: float = 0.25,
) -> CriticalLength:
    """Bisect the bound-state count to bracket the n-th critical half-overlap.

    Scans outward in steps of coarse_step until the count first reaches n,
    then bisects the jump to width <= tol.  The returned value is the bracket
    midpoint.  Counts are monotone in the overlap, so the scan is safe.
    """
    if n < 1:
        raise ValueError("critical-length index must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")

    lo, c_lo = 0.0, count_bound_states(0.0, spec)
    if c_lo >= n:
        raise RuntimeError("count at zero overlap already >= n; widen the gap margin")
    hi = 0.0
    while True:
        hi += coarse_step
        if hi > SCAN_LIMIT:
            raise RuntimeError(f"no count jump to {n} found below overlap {SCAN_LIMIT}")
        c_hi = count_bound_states(hi, spec)
        if c_hi >= n:
            break
        lo, c_lo = hi, c_hi

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count_bound_states(mid, spec) >= n:
            hi = mid
        else:
            lo = mid
    return CriticalLength(index=n, value=0.5 * (lo + hi), bracket=(lo, hi), spec=spec)
