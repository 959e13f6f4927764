"""Closed-form 1D effective resolvents and their embedding into the strip.

Four limiting operators -d^2/dx^2 on the line appear, distinguished only by
their interface condition at the origin or at +-L: a Dirichlet point, no
condition at all, a sign-twisted matching u(+0) = -u(-0), u'(+0) = -u'(-0),
or Dirichlet endpoints at +-L.  Each resolvent is a short exponential kernel;
this module evaluates them, applies them by trapezoid quadrature, embeds the
results into the strip as chi_1-profiles, and carries the explicit
prefix-integral construction of the twisted solution as an independent path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .discrete import Grid
from .geometry import GridField, LineFunction, transverse_mode, trapezoid_weights

KindName = Literal["DirichletAtZero", "FreeLine", "TwistedAtZero", "DirichletAtPmL"]

_CHUNK = 512


@dataclass(frozen=True)
class EffectiveKind:
    """Which effective 1D operator a kernel/resolvent call refers to.

    parity_sign applies to TwistedAtZero only (+1 aliases to FreeLine);
    half_length and region ('inside' for the [-L, L] indicator, 'outside' for
    its complement) apply to DirichletAtPmL only.
    """

    name: KindName
    parity_sign: int = 1
    half_length: float | None = None
    region: Literal["inside", "outside"] | None = None

    def __post_init__(self) -> None:
        if self.name == "TwistedAtZero" and self.parity_sign not in (-1, 1):
            raise ValueError("parity_sign must be +1 or -1")
        if self.name == "DirichletAtPmL":
            if self.half_length is None or self.half_length <= 0:
                raise ValueError("DirichletAtPmL requires half_length > 0")
            if self.region not in ("inside", "outside"):
                raise ValueError("DirichletAtPmL requires region inside|outside")


DIRICHLET_AT_ZERO = EffectiveKind("DirichletAtZero")
FREE_LINE = EffectiveKind("FreeLine")


def twisted_at_zero(parity_sign: int) -> EffectiveKind:
    return EffectiveKind("TwistedAtZero", parity_sign=parity_sign)


def dirichlet_at_pm_l(half_length: float, region: Literal["inside", "outside"]) -> EffectiveKind:
    return EffectiveKind("DirichletAtPmL", half_length=half_length, region=region)


def _sgn(x: np.ndarray) -> np.ndarray:
    """Sign with the origin assigned to the right half-line (right-limit
    convention, matching the explicit twisted construction)."""
    return np.where(np.asarray(x) < 0, -1.0, 1.0)


def green_kernel(kind: EffectiveKind, mu: complex, x, t):
    """Resolvent kernel G(x, t) of the effective operator at -mu^2.

    Requires Re mu > 0.  Broadcasts over array x, t.  All kinds are symmetric
    in (x, t); every exponent is nonpositive, so evaluation is overflow-free
    on arbitrarily wide windows.
    """
    if complex(mu).real <= 0:
        raise ValueError("green_kernel requires Re mu > 0")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    d = np.abs(x - t)
    if kind.name == "FreeLine" or (kind.name == "TwistedAtZero" and kind.parity_sign == 1):
        return np.exp(-mu * d) / (2 * mu)
    if kind.name == "DirichletAtZero":
        same = _sgn(x) == _sgn(t)
        return np.where(same, np.exp(-mu * d) - np.exp(-mu * (np.abs(x) + np.abs(t))), 0.0) / (
            2 * mu
        )
    if kind.name == "TwistedAtZero":
        dist = np.where(_sgn(x) == _sgn(t), d, np.abs(x) + np.abs(t))
        return _sgn(x) * _sgn(t) * np.exp(-mu * dist) / (2 * mu)
    # DirichletAtPmL
    L = float(kind.half_length)
    if kind.region == "inside":
        inside = (np.abs(x) <= L) & (np.abs(t) <= L)
        s = x + t
        num = (
            np.exp(-mu * d)
            + np.exp(-mu * (4 * L - d))
            - np.exp(-mu * (2 * L - s))
            - np.exp(-mu * (2 * L + s))
        )
        g = num / (2 * mu * (1.0 - np.exp(-4 * mu * L)))
        return np.where(inside, g, 0.0)
    right = (x >= L) & (t >= L)
    left = (x <= -L) & (t <= -L)
    g_r = np.exp(-mu * d) - np.exp(-mu * (x + t - 2 * L))
    g_l = np.exp(-mu * d) - np.exp(-mu * (-x - t - 2 * L))
    return np.where(right, g_r, np.where(left, g_l, 0.0)) / (2 * mu)


def _indicator_mask(kind: EffectiveKind, x: np.ndarray) -> np.ndarray:
    if kind.name != "DirichletAtPmL":
        return np.ones_like(x, dtype=bool)
    L = float(kind.half_length)
    return np.abs(x) <= L if kind.region == "inside" else np.abs(x) >= L


def apply_effective_resolvent(kind: EffectiveKind, lam: complex, g: LineFunction) -> LineFunction:
    """U(x) = integral G(x, t) [E g](t) dt on g's own grid, mu = sqrt(-lam).

    For DirichletAtPmL the input is masked by the indicator of the kind's
    region first, and the output vanishes identically on the complement.
    Trapezoid quadrature; the |x-t| kink always sits on a node, so the rule
    keeps its clean second order.
    """
    if complex(lam).imag == 0:
        raise ValueError("effective resolvent requires Im(lam) != 0")
    mu = np.sqrt(complex(-lam))
    t = g.x
    vals = np.where(_indicator_mask(kind, t), g.values, 0.0)
    w = trapezoid_weights(t.size, g.spacing) * vals
    out = np.empty(t.size, dtype=complex)
    for lo in range(0, t.size, _CHUNK):
        hi = min(lo + _CHUNK, t.size)
        K = green_kernel(kind, mu, t[lo:hi, None], t[None, :])
        out[lo:hi] = K @ w
    return LineFunction(x=t.copy(), values=out)


def effective_term_field(U: LineFunction, eps: float, grid: Grid) -> GridField:
    """Embed the original-scale line function U into the rescaled strip as
    eps^{-1/2} chi_1(x2) U(eps x1), with the lowest transverse profile of each
    column's region.  U must be sampled exactly at eps * grid.x1."""
    if U.x.size != grid.n1 or not np.allclose(U.x, eps * grid.x1, atol=1e-9 * max(eps, 1e-12)):
        raise ValueError("U must be sampled at eps * grid.x1")
    geo = grid.geometry
    profiles = {r: transverse_mode(1, r).profile(grid.x2) for r in ("right", "left", "middle")}
    vals = np.empty((grid.n1, grid.n2), dtype=complex)
    for i, x1 in enumerate(grid.x1):
        vals[i, :] = U.values[i] * profiles[geo.region_of(float(x1))]
    vals *= eps ** (-0.5)
    return grid.field(vals)


# ---------------------------------------------------------------------------
# explicit twisted construction (independent of the kernel path)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwistedData:
    """Half-line moments of the projected source and their twisted combination.

    f_plus/f_minus are (1/(2 mu)) integral of e^{-mu |t|} f1(t) dt over the
    right/left half-lines, with the origin node's quadrature weight assigned
    entirely to the right half (right-limit convention; this makes the
    explicit path agree with kernel quadrature to rounding for every input).
    t0 = sqrt(2) (f_plus + sigma f_minus); the solution's jump amplitude at the
    origin is t0 / sqrt(2).
    """

    f_plus: complex
    f_minus: complex
    t0: complex
    eps: float
    lam: complex
    parity_sign: int


def _cumtrapz(y: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(y, dtype=complex)
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]))
    return out


def twisted_data(f1: LineFunction, eps: float, lam: complex, n: int) -> TwistedData:
    """Moments F_+- of f1 = (projected source, original scale) against
    e^{-mu |t|} / (2 mu), mu = sqrt(-lam), and their parity combination."""
    mu = np.sqrt(complex(-lam))
    sigma = (-1) ** (n - 1)
    x, v, h = f1.x, f1.values, f1.spacing
    i0 = int(np.argmin(np.abs(x)))
    if abs(x[i0]) > 1e-9 * max(1.0, h):
        raise ValueError("f1 grid must contain the origin")
    wr = trapezoid_weights(x.size - i0, h)
    f_plus = (wr @ (np.exp(-mu * x[i0:]) * v[i0:]) + 0.5 * h * v[i0]) / (2 * mu)
    wl = trapezoid_weights(i0 + 1, h)
    f_minus = (wl @ (np.exp(mu * x[: i0 + 1]) * v[: i0 + 1]) - 0.5 * h * v[i0]) / (2 * mu)
    return TwistedData(
        f_plus=complex(f_plus),
        f_minus=complex(f_minus),
        t0=complex(math.sqrt(2) * (f_plus + sigma * f_minus)),
        eps=eps,
        lam=lam,
        parity_sign=sigma,
    )


def twisted_explicit_solution(f1: LineFunction, eps: float, lam: complex, n: int) -> LineFunction:
    """Critical-case effective solution on the original scale, built from the
    explicit prefix-integral representation rather than kernel quadrature.

    The origin-Dirichlet part is assembled from running integrals of
    sinh(mu t) f1 / mu and e^{-mu t} f1 on each half-line; the matching
    exponential e^{-mu |x|} carries the amplitude f_plus + sigma f_minus,
    with the left branch multiplied by sigma = (-1)^{n-1}.  The result
    satisfies U(+0) = sigma U(-0) and U'(+0) = sigma U'(-0); the origin node
    stores the right limit.
    """
    mu = np.sqrt(complex(-lam))
    sigma = (-1) ** (n - 1)
    data = twisted_data(f1, eps, lam, n)
    x, v, h = f1.x, f1.values, f1.spacing
    i0 = int(np.argmin(np.abs(x)))

    out = np.zeros(x.size, dtype=complex)

    # right half: U1 = e^{-mu x} A(x) + sinh(mu x)/mu * B(x)
    xr, vr = x[i0:], v[i0:]
    A = _cumtrapz(np.sinh(mu * xr) * vr / mu, h)
    B = _cumtrapz((np.exp(-mu * xr) * vr)[::-1], h)[::-1]  # backward: exact 0 past support
    out[i0:] = np.exp(-mu * xr) * A + np.sinh(mu * xr) / mu * B

    # left half: U1 = -sinh(mu x)/mu * C(x) - e^{mu x} D(x)
    xl, vl = x[: i0 + 1], v[: i0 + 1]
    C = _cumtrapz(np.exp(mu * xl) * vl, h)
    D = _cumtrapz((np.sinh(mu * xl) * vl / mu)[::-1], h)[::-1]
    out[: i0 + 1] = -np.sinh(mu * xl) / mu * C - np.exp(mu * xl) * D

    amp = data.f_plus + sigma * data.f_minus
    out[i0:] += amp * np.exp(-mu * xr)
    out[:i0] += sigma * amp * np.exp(mu * x[:i0])
    return LineFunction(x=x.copy(), values=out)
