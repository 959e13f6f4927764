"""Vanishing-width sweeps: strip resolvent vs. the effective line models.

The thin strip of height eps is rescaled to the unit strip, the resolvent is
applied at the shifted spectral point E_resc + eps^2 * lam, and the result is
compared (in thin-strip norms) against the matching one-dimensional effective
resolvent embedded back onto the strip with the first transverse profile of
each region.  Everything here works in rescaled coordinates; the bookkeeping
back to the thin strip is

    ||D||_L2(strip)  = eps * ||D_resc||_L2(window),
    ||D||_H1(strip)^2 = eps^2 * ||D_resc||^2 + ||grad D_resc||^2,

both provided by :func:`twistband.geometry.scaled_norms`.

Test inputs are fixed functions of the *original* (thin-strip) variables:
smooth longitudinal bumps times a transverse mode profile of the local
region.  Keeping the family fixed while eps shrinks is what makes the error
ratios across eps measure a convergence rate rather than a moving target.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .discrete import (
    FactorizedResolvent,
    Grid,
    RadiationSpec,
    assemble_operator,
    build_grid,
    slice_threshold,
)
from .effective import (
    DIRICHLET_AT_ZERO,
    FREE_LINE,
    EffectiveKind,
    apply_effective_resolvent,
    dirichlet_at_pm_l,
    effective_term_field,
    twisted_at_zero,
)
from .geometry import (
    TRANSVERSE_THRESHOLD,
    BoundaryPartition,
    Geometry,
    GridField,
    LineFunction,
    OverlapRegime,
    WindowRegime,
    field_norm,
    make_geometry,
    project_mode,
    scaled_norms,
    transverse_mode,
)
from .threshold import ThresholdGridSpec, solve_virtual_level

__all__ = [
    "DEFAULT_LAMBDA",
    "EPS_DEFAULT",
    "BumpComponent",
    "ErrorTable",
    "GridPolicy",
    "OverlapCase",
    "RateFit",
    "SweepRow",
    "TestFunctionSpec",
    "WindowCase",
    "bounded_ratio",
    "default_test_family",
    "discretization_guard",
    "fit_rate",
    "run_case",
    "sample_input",
    "smooth_bump",
    "window_test_family",
]

#: Default shrinking-width ladder: eps^2 halves at every step.
EPS_DEFAULT: tuple[float, ...] = (0.2, 0.141, 0.1, 0.071, 0.05)

#: Default spectral offset from the channel threshold (must stay off the
#: real axis: the models are compared in the resolvent set).
DEFAULT_LAMBDA: complex = 1.0j


def smooth_bump(u: np.ndarray) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1-u^2)) on |u| < 1, zero outside, max 1."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    mask = np.abs(u) < 1.0
    out[mask] = np.exp(1.0 - 1.0 / (1.0 - u[mask] ** 2))
    return out


@dataclass(frozen=True)
class BumpComponent:
    """One separated input component, in thin-strip (original) coordinates.

    Longitudinal factor: smooth bump centered at `center`, support radius
    5 * width.  Transverse factor: the `mode`-th profile of whichever region
    owns the column, so a single component excites exactly one channel.
    """

    mode: int
    center: float
    width: float
    amplitude: complex = 1.0

    def __post_init__(self) -> None:
        if self.mode < 1:
            raise ValueError("mode index starts at 1")
        if self.width <= 0:
            raise ValueError("width must be positive")

    @property
    def support_radius(self) -> float:
        return abs(self.center) + 5.0 * self.width


@dataclass(frozen=True)
class TestFunctionSpec:
    """A labeled sum of bump components used as sweep input."""

    __test__ = False  # pytest: not a test class, despite the name

    label: str
    components: tuple[BumpComponent, ...]

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("label must be nonempty")
        if not self.components:
            raise ValueError("at least one component required")

    @property
    def modes(self) -> frozenset[int]:
        return frozenset(c.mode for c in self.components)

    @property
    def support_radius(self) -> float:
        return max(c.support_radius for c in self.components)


def default_test_family() -> tuple[TestFunctionSpec, ...]:
    """Sweep inputs for the fixed-junction (rescaled-overlap) regime.

    Covers a centered and an offset first-channel bump, a pure second-channel
    bump (whose effective term vanishes identically), and a two-mode mix.
    Supports fit inside the default window down to eps = 0.05.
    """
    return (
        TestFunctionSpec("m1-even", (BumpComponent(1, 0.0, 0.1),)),
        TestFunctionSpec("m1-offset", (BumpComponent(1, 0.25, 0.07),)),
        TestFunctionSpec("m2-even", (BumpComponent(2, 0.0, 0.1),)),
        TestFunctionSpec(
            "m1m2-mix",
            (BumpComponent(1, -0.2, 0.06), BumpComponent(2, 0.15, 0.06, 0.7)),
        ),
    )


def window_test_family(window_half_length: float) -> tuple[TestFunctionSpec, ...]:
    """Sweep inputs for the fixed-window regime.

    Mid-window bumps drive the constant middle channel; the outer pair sits
    just past the junctions and drives the decaying side channels, which is
    the interesting input once the spectral shift moves to the side threshold.
    """
    L = window_half_length
    return (
        TestFunctionSpec("m1-window", (BumpComponent(1, 0.0, 0.1),)),
        TestFunctionSpec("m2-window", (BumpComponent(2, 0.0, 0.1),)),
        TestFunctionSpec("m1-right", (BumpComponent(1, L + 0.25, 0.05),)),
        TestFunctionSpec("m1-left", (BumpComponent(1, -(L + 0.25), 0.05),)),
    )


# ---------------------------------------------------------------------------
# sweep cases and grid policy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OverlapCase:
    """Junction fixed in rescaled coordinates (overlap half-length ell).

    critical_index selects the bound-branch parity when ell is meant to sit
    at a critical length: the case is then re-polished to the discrete
    critical length of each grid it runs on, and the effective model is the
    free line (odd index) or the sign-twisted line (even index).  Leave None
    for a noncritical ell, where the effective model is Dirichlet at zero.
    """

    half_overlap: float
    critical_index: int | None = None

    def __post_init__(self) -> None:
        if self.half_overlap <= 0:
            raise ValueError("half_overlap must be positive")
        if self.critical_index is not None and self.critical_index < 1:
            raise ValueError("critical_index starts at 1")


@dataclass(frozen=True)
class WindowCase:
    """Junction fixed in original coordinates (window half-length L).

    energy_shift picks the channel whose threshold the spectral point tracks:
    0.0 for the constant middle channel (effective model: interval [-L, L]
    with Dirichlet ends), or the side-channel threshold pi^2/4 (effective
    model: the two half-lines beyond +-L with Dirichlet ends).
    """

    window_half_length: float
    energy_shift: float

    def __post_init__(self) -> None:
        if self.window_half_length <= 0:
            raise ValueError("window_half_length must be positive")
        ok = math.isclose(self.energy_shift, 0.0, abs_tol=1e-12) or math.isclose(
            self.energy_shift, TRANSVERSE_THRESHOLD, rel_tol=1e-12
        )
        if not ok:
            raise ValueError(
                "energy_shift must be 0 or the transverse threshold pi^2/4"
            )


@dataclass(frozen=True)
class GridPolicy:
    """Resolution policy shared by every cell of a sweep.

    target_h1 is capped at 0.25 so the thin strip is always resolved by at
    least four cells per eps in original-variable terms (h_orig = eps * h1).
    The fixed-window truncation grows like junction + window_margin, i.e.
    linearly in 1/eps.
    """

    n2: int = 17
    target_h1: float = 0.05
    overlap_truncation: float = 20.0
    window_margin: float = 14.0

    def __post_init__(self) -> None:
        if self.n2 < 5:
            raise ValueError("n2 must be at least 5")
        if not 0 < self.target_h1 <= 0.25:
            raise ValueError("target_h1 must lie in (0, 0.25]")
        if self.window_margin < 10.0:
            raise ValueError("window_margin must leave the decay margin plus room")

    def refined(self) -> "GridPolicy":
        """Same windows, both mesh spacings halved."""
        return GridPolicy(
            n2=2 * (self.n2 - 1) + 1,
            target_h1=self.target_h1 / 2.0,
            overlap_truncation=self.overlap_truncation,
            window_margin=self.window_margin,
        )


# ---------------------------------------------------------------------------
# result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    """One (eps, input) cell: relative errors in thin-strip norms."""

    eps: float
    f_id: str
    err_l2: float
    err_h1: float
    f_norm: float
    h1: float
    n2: int
    truncation: float
    junction: float


@dataclass(frozen=True)
class ErrorTable:
    """Sweep results, rows grouped by eps (strictly decreasing) then input."""

    case: OverlapCase | WindowCase
    lam: complex
    rows: tuple[SweepRow, ...]

    def __post_init__(self) -> None:
        for f_id in self.f_ids:
            eps = [r.eps for r in self.rows_for(f_id)]
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ValueError("eps must be strictly decreasing per input")

    @property
    def f_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.rows:
            seen.setdefault(r.f_id, None)
        return tuple(seen)

    @property
    def eps_values(self) -> tuple[float, ...]:
        seen: dict[float, None] = {}
        for r in self.rows:
            seen.setdefault(r.eps, None)
        return tuple(seen)

    def rows_for(self, f_id: str) -> tuple[SweepRow, ...]:
        return tuple(r for r in self.rows if r.f_id == f_id)

    def errors(self, f_id: str, norm: Literal["l2", "h1"] = "l2") -> tuple[np.ndarray, np.ndarray]:
        """(eps, err) arrays for one input, eps decreasing."""
        rows = self.rows_for(f_id)
        if not rows:
            raise KeyError(f"no rows for input {f_id!r}")
        eps = np.array([r.eps for r in rows])
        err = np.array([r.err_l2 if norm == "l2" else r.err_h1 for r in rows])
        return eps, err


@dataclass(frozen=True)
class RateFit:
    """Least-squares power law err ~ C * eps^slope on log-log axes."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_rate(table: ErrorTable, f_id: str, norm: Literal["l2", "h1"] = "l2") -> RateFit:
    """Fit log err against log eps for one input; needs at least 4 cells."""
    eps, err = table.errors(f_id, norm)
    if eps.size < 4:
        raise ValueError("rate fit needs at least 4 sweep points")
    if np.any(err <= 0):
        raise ValueError("rate fit needs strictly positive errors")
    x = np.log(eps)
    y = np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = y - y.mean()
    denom = float(total @ total)
    r2 = 1.0 if denom == 0.0 else 1.0 - float(resid @ resid) / denom
    return RateFit(float(slope), float(intercept), r2, int(eps.size))


def bounded_ratio(
    table: ErrorTable, f_id: str, p: float, norm: Literal["l2", "h1"] = "l2"
) -> float:
    """max/min over eps of err/eps^p — the upper-bound conformance measure."""
    eps, err = table.errors(f_id, norm)
    ratios = err / eps**p
    return float(ratios.max() / ratios.min())


# ---------------------------------------------------------------------------
# sampling the inputs on a rescaled grid
# ---------------------------------------------------------------------------


def sample_input(spec: TestFunctionSpec, eps: float, grid: Grid) -> GridField:
    """Sample the rescaled input f(eps * y1, y2) on the grid.

    Each component's transverse factor is the profile of the region owning
    the column, so region changes inside a support show up as transverse
    jumps — plain L2 data, exactly what the channel projections expect.
    """
    geo = grid.geometry
    regions = np.array([geo.region_of(float(x)) for x in grid.x1])
    vals = np.zeros((grid.n1, grid.n2), dtype=complex)
    for comp in spec.components:
        long = smooth_bump((eps * grid.x1 - comp.center) / (5.0 * comp.width))
        cols = np.nonzero(long)[0]
        if cols.size == 0:
            continue
        for region in ("right", "left", "middle"):
            sel = cols[regions[cols] == region]
            if sel.size:
                prof = transverse_mode(comp.mode, region).profile(grid.x2)
                vals[sel, :] += comp.amplitude * np.outer(long[sel], prof)
    return grid.field(vals)


# ---------------------------------------------------------------------------
# case realization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Realized:
    geometry: Geometry
    partition: BoundaryPartition
    target_h1: float
    kind: EffectiveKind
    shift_to_side_threshold: bool


def _realize(case: OverlapCase | WindowCase, policy: GridPolicy, eps: float) -> _Realized:
    if isinstance(case, OverlapCase):
        if case.critical_index is None:
            ell = case.half_overlap
            target = policy.target_h1
            kind = DIRICHLET_AT_ZERO
        else:
            tspec = ThresholdGridSpec(
                truncation=policy.overlap_truncation,
                n2=policy.n2,
                target_h1=policy.target_h1,
            )
            vl = solve_virtual_level(case.half_overlap, case.critical_index, tspec)
            ell = vl.ell
            # reuse the polished junction cell count so the sweep grid snaps
            # to exactly the grid the criticality was certified on
            target = vl.ell / vl.junction_cells
            kind = FREE_LINE if vl.parity_sign > 0 else twisted_at_zero(-1)
        geo, part = make_geometry(OverlapRegime(ell), policy.overlap_truncation)
        return _Realized(geo, part, target, kind, True)
    L = case.window_half_length
    truncation = L / eps + policy.window_margin
    geo, part = make_geometry(WindowRegime(L, eps), truncation)
    to_side = not math.isclose(case.energy_shift, 0.0, abs_tol=1e-12)
    kind = dirichlet_at_pm_l(L, "outside" if to_side else "inside")
    return _Realized(geo, part, policy.target_h1, kind, to_side)


def _sweep_cell(
    realized: _Realized,
    lam: complex,
    specs: Sequence[TestFunctionSpec],
    eps: float,
    n2: int,
) -> list[SweepRow]:
    grid = build_grid(realized.geometry, n2, realized.target_h1)
    e_resc = slice_threshold(grid.h2) if realized.shift_to_side_threshold else 0.0
    X_geo = realized.geometry.truncation
    for spec in specs:
        if spec.support_radius > eps * (X_geo - 2.0) + 1e-12:
            raise ValueError(
                f"input {spec.label!r} (radius {spec.support_radius:g}) leaves "
                f"the window at eps={eps:g} (limit {eps * (X_geo - 2.0):g})"
            )
    # exact per-channel closure at the complex shift: the first channel
    # decays at rate ~ eps there, far too slowly for any hard truncation
    rad = RadiationSpec(energy=e_resc, musq=-(eps**2) * lam)
    op = assemble_operator(grid, realized.partition, radiation=rad)
    z = e_resc + eps**2 * lam
    solver = FactorizedResolvent(op, z)
    rows: list[SweepRow] = []
    for spec in specs:
        f = sample_input(spec, eps, grid)
        f_norm = eps * field_norm(f)
        if f_norm <= 0:
            raise ValueError(f"input {spec.label!r} vanishes on the grid")
        v = solver.solve(f)
        p1 = project_mode(f, 1, grid.geometry)
        g = LineFunction(x=eps * grid.x1, values=math.sqrt(eps) * p1.values)
        U = apply_effective_resolvent(realized.kind, lam, g)
        term = effective_term_field(U, eps, grid)
        diff = grid.field(eps**2 * v.values - term.values)
        l2, h1n = scaled_norms(diff, eps)
        rows.append(
            SweepRow(
                eps=eps,
                f_id=spec.label,
                err_l2=l2 / f_norm,
                err_h1=h1n / f_norm,
                f_norm=f_norm,
                h1=grid.h1,
                n2=grid.n2,
                truncation=grid.truncation,
                junction=realized.geometry.junction,
            )
        )
    return rows


def _validate_sweep_args(
    lam: complex, specs: Sequence[TestFunctionSpec], eps_list: Sequence[float]
) -> None:
    if lam.imag == 0:
        raise ValueError("lam must have nonzero imaginary part")
    if not specs:
        raise ValueError("at least one input spec required")
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ValueError("input labels must be unique")
    if len(eps_list) < 4:
        raise ValueError("sweep needs at least 4 eps values")
    for e in eps_list:
        if not 0 < e <= 0.3:
            raise ValueError("eps values must lie in (0, 0.3]")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps values must be strictly decreasing")


def run_case(
    case: OverlapCase | WindowCase,
    lam: complex = DEFAULT_LAMBDA,
    specs: Sequence[TestFunctionSpec] | None = None,
    eps_list: Sequence[float] = EPS_DEFAULT,
    policy: GridPolicy = GridPolicy(),
    threads: int = 1,
) -> ErrorTable:
    """Run the full sweep: one resolvent comparison per (eps, input) cell.

    Cells are independent; each eps cell assembles and factors its operator
    once and reuses it across the input family.  Results are reduced in
    (eps, input) order regardless of scheduling, so tables are reproducible.
    Critical overlap cases re-polish the critical length for the policy grid
    before sweeping (and again on the refined grid inside the guard).
    """
    if specs is None:
        specs = (
            default_test_family()
            if isinstance(case, OverlapCase)
            else window_test_family(case.window_half_length)
        )
    _validate_sweep_args(lam, specs, eps_list)
    if isinstance(case, OverlapCase):
        # the rescaled-junction realization (and any critical re-polish) does
        # not depend on eps; pay for it once per sweep
        shared = _realize(case, policy, eps_list[0])
        realized = {eps: shared for eps in eps_list}
    else:
        realized = {eps: _realize(case, policy, eps) for eps in eps_list}

    def cell(eps: float) -> list[SweepRow]:
        return _sweep_cell(realized[eps], lam, specs, eps, policy.n2)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(cell, eps_list))
    else:
        chunks = [cell(eps) for eps in eps_list]
    rows = [row for chunk in chunks for row in chunk]
    return ErrorTable(case=case, lam=lam, rows=tuple(rows))


def discretization_guard(
    case: OverlapCase | WindowCase,
    lam: complex = DEFAULT_LAMBDA,
    specs: Sequence[TestFunctionSpec] | None = None,
    eps: float = EPS_DEFAULT[-1],
    policy: GridPolicy = GridPolicy(),
) -> float:
    """Worst relative movement of err_L2 when both mesh spacings are halved.

    Run at the smallest eps of a sweep; a value over ~0.1 says the table is
    measuring the grid, not the width.  Critical cases re-polish on each of
    the two grids, so both sit at their own discrete critical length.
    """
    if specs is None:
        specs = (
            default_test_family()
            if isinstance(case, OverlapCase)
            else window_test_family(case.window_half_length)
        )
    if lam.imag == 0:
        raise ValueError("lam must have nonzero imaginary part")
    fine_policy = policy.refined()
    coarse = _sweep_cell(_realize(case, policy, eps), lam, specs, eps, policy.n2)
    fine = _sweep_cell(_realize(case, fine_policy, eps), lam, specs, eps, fine_policy.n2)
    worst = 0.0
    for rc, rf in zip(coarse, fine):
        worst = max(worst, abs(rc.err_l2 - rf.err_l2) / rf.err_l2)
    return worst
