"""Strip geometry, boundary partitions, transverse modes, projections, norms.

The computational domain is the rescaled unit strip {0 < x2 < 1} truncated to a
window [-X, X] in x1.  The boundary partition swaps Dirichlet between the two
faces across a central overlap window: Dirichlet on the bottom face right of the
junction, on the top face left of it, Neumann elsewhere.  Everything downstream
(sparse operators, eigensolves, rate sweeps) consumes the objects defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

# Bottom of the essential spectrum of the rescaled operator: lowest eigenvalue
# of the mixed (Dirichlet/Neumann) transverse slice.
TRANSVERSE_THRESHOLD = math.pi**2 / 4

# Decay rate of the second transverse branch relative to the first,
# sqrt(E_2 - E_1) = sqrt(2) * pi.
SECOND_MODE_RATE = math.sqrt(2.0) * math.pi

#: Minimal margin between the junction and the truncation cut.
DECAY_MARGIN = 8.0

Side = Literal["bottom", "top", "cut"]
Region = Literal["right", "left", "middle"]


class GeometryError(ValueError):
    """Raised for inconsistent window/junction configurations."""


@dataclass(frozen=True)
class OverlapRegime:
    """Unit-strip regime: junctions at +-half_overlap, fixed as the width shrinks."""

    half_overlap: float

    def __post_init__(self) -> None:
        if self.half_overlap < 0:
            raise GeometryError("half_overlap must be >= 0")

    @property
    def junction(self) -> float:
        return self.half_overlap


@dataclass(frozen=True)
class WindowRegime:
    """Fixed-window regime: junction distance window_half_length in original
    variables, hence window_half_length/eps after rescaling to the unit strip."""

    window_half_length: float
    eps: float

    def __post_init__(self) -> None:
        if self.window_half_length <= 0:
            raise GeometryError("window_half_length must be > 0")
        if self.eps <= 0:
            raise GeometryError("eps must be > 0")

    @property
    def junction(self) -> float:
        return self.window_half_length / self.eps


@dataclass(frozen=True)
class Segment:
    side: Side
    lo: float
    hi: float

    def covers(self, side: Side, x1: float, tol: float = 1e-9) -> bool:
        """Whether (side, x1) lies in the *closure* of this segment."""
        return side == self.side and self.lo - tol <= x1 <= self.hi + tol


@dataclass(frozen=True)
class BoundaryPartition:
    """Dirichlet/Neumann split of the truncated strip boundary.

    Nodes on the closure of the Dirichlet set count as Dirichlet (the form
    domain consists of functions vanishing on the closed set), so the
    changeover points themselves are Dirichlet.
    """

    dirichlet: tuple[Segment, ...]
    neumann: tuple[Segment, ...]

    def is_dirichlet(self, side: Side, x1: float, tol: float = 1e-9) -> bool:
        return any(s.covers(side, x1, tol) for s in self.dirichlet)

    def with_dirichlet_cut(self, x1: float) -> "BoundaryPartition":
        """Add an interior Dirichlet cut {x1} x (0,1); used to decouple the
        strip into independent half-strips for oracle comparisons."""
        return BoundaryPartition(
            dirichlet=self.dirichlet + (Segment("cut", x1, x1),),
            neumann=self.neumann,
        )

    @property
    def cuts(self) -> tuple[float, ...]:
        return tuple(s.lo for s in self.dirichlet if s.side == "cut")


@dataclass(frozen=True)
class Geometry:
    """Truncated rescaled strip with its boundary partition parameters."""

    regime: OverlapRegime | WindowRegime
    truncation: float  # window half-length X in rescaled coordinates

    def __post_init__(self) -> None:
        if self.truncation < self.junction + DECAY_MARGIN:
            raise GeometryError(
                f"truncation X={self.truncation} below junction+margin="
                f"{self.junction + DECAY_MARGIN}"
            )

    @property
    def junction(self) -> float:
        return self.regime.junction

    def region_of(self, x1: float) -> Region:
        """Region owning the column at x1 (window regime has three regions;
        the overlap regime none in the middle, so x1=junction=0 maps right)."""
        j = self.junction
        if isinstance(self.regime, WindowRegime):
            if x1 >= j:
                return "right"
            if x1 <= -j:
                return "left"
            return "middle"
        return "right" if x1 >= 0 else "left"


def make_geometry(
    regime: OverlapRegime | WindowRegime, truncation: float
) -> tuple[Geometry, BoundaryPartition]:
    """Build the geometry and its twisted boundary partition.

    Parameters
    ----------
    regime : OverlapRegime | WindowRegime
        Junction placement rule.
    truncation : float
        Window half-length X; must leave a decay margin of 8 past the junction.

    Returns
    -------
    (Geometry, BoundaryPartition)
        Dirichlet on {x2=0, x1>j} and {x2=1, x1<-j}, Neumann on the rest of the
        faces; the truncation cuts at x1=+-X are Dirichlet.
    """
    geo = Geometry(regime=regime, truncation=truncation)
    j, X = geo.junction, geo.truncation
    dirichlet = (
        Segment("bottom", j, X),
        Segment("top", -X, -j),
        Segment("cut", -X, -X),
        Segment("cut", X, X),
    )
    neumann = (
        Segment("bottom", -X, j),
        Segment("top", -j, X),
    )
    return geo, BoundaryPartition(dirichlet=dirichlet, neumann=neumann)


def single_junction_partition(truncation: float) -> BoundaryPartition:
    """Partition for the auxiliary problem: Dirichlet on the bottom face for
    x1 >= 0 only, Neumann on the whole top face and the left bottom face.
    The truncation cuts are *not* part of the physical partition here (the
    solver replaces them with mode-matched conditions)."""
    X = truncation
    return BoundaryPartition(
        dirichlet=(Segment("bottom", 0.0, X),),
        neumann=(Segment("bottom", -X, 0.0), Segment("top", -X, X)),
    )


# ---------------------------------------------------------------------------
# transverse modes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransverseMode:
    index: int
    region: Region
    profile: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    energy: float


def transverse_mode(m: int, region: Region) -> TransverseMode:
    """The m-th transverse profile of a region, L2(0,1)-orthonormal.

    right : sqrt(2) sin(pi (m-1/2) x2),     energy pi^2 (m-1/2)^2
    left  : sqrt(2) sin(pi (m-1/2) (1-x2)), energy pi^2 (m-1/2)^2
    middle: 1 for m=1, sqrt(2) cos(pi (m-1) x2) for m>=2, energy pi^2 (m-1)^2
    """
    if m < 1:
        raise ValueError("mode index must be >= 1")
    if region == "right":
        k = math.pi * (m - 0.5)
        return TransverseMode(m, region, lambda t, k=k: math.sqrt(2) * np.sin(k * t), k * k)
    if region == "left":
        k = math.pi * (m - 0.5)
        return TransverseMode(
            m, region, lambda t, k=k: math.sqrt(2) * np.sin(k * (1.0 - t)), k * k
        )
    if region == "middle":
        if m == 1:
            return TransverseMode(1, region, lambda t: np.ones_like(t), 0.0)
        k = math.pi * (m - 1)
        return TransverseMode(m, region, lambda t, k=k: math.sqrt(2) * np.cos(k * t), k * k)
    raise ValueError(f"unknown region {region!r}")


def mode_energy(m: int, region: Region) -> float:
    if region == "middle":
        return (math.pi * (m - 1)) ** 2
    return (math.pi * (m - 0.5)) ** 2


# ---------------------------------------------------------------------------
# spectral parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralParameter:
    """Complex shift bookkeeping.

    The square-root branch is the principal one (fixed by sqrt(1) = 1), so
    mu = eps*sqrt(-lam) has positive real part for lam off the real axis, and
    the longitudinal rates k_m = sqrt(E_m - E_1 - eps^2 lam) have positive real
    part for m >= 2.
    """

    lam: complex
    energy: float  # E in {0, pi^2/4}
    eps: float

    def __post_init__(self) -> None:
        if self.lam.imag == 0:
            raise ValueError("spectral parameter requires Im(lam) != 0")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.energy not in (0.0, TRANSVERSE_THRESHOLD):
            raise ValueError("energy must be 0 or pi^2/4")

    @property
    def mu(self) -> complex:
        return self.eps * np.sqrt(complex(-self.lam))

    def rate(self, m: int, region: Region = "right") -> complex:
        """Longitudinal rate sqrt(E_m(region) - E - eps^2 lam)."""
        return np.sqrt(complex(mode_energy(m, region) - self.energy - self.eps**2 * self.lam))


# ---------------------------------------------------------------------------
# grid-sampled fields and 1D line functions
# ---------------------------------------------------------------------------


@dataclass
class GridField:
    """Complex values on the tensor grid x1 (ascending) x x2 (ascending).

    Values at Dirichlet nodes are exactly zero; the solver enforces this by
    zero-extension after eliminating those unknowns.
    """

    values: np.ndarray  # shape (len(x1), len(x2))
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.shape != (self.x1.size, self.x2.size):
            raise ValueError("field shape does not match grid axes")

    @property
    def h1(self) -> float:
        return float(self.x1[1] - self.x1[0])

    @property
    def h2(self) -> float:
        return float(self.x2[1] - self.x2[0])

    def copy_like(self, values: np.ndarray) -> "GridField":
        return GridField(values=values, x1=self.x1, x2=self.x2)


@dataclass
class LineFunction:
    """Complex samples on a uniform 1D grid."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.x.size != self.values.size:
            raise ValueError("sample count mismatch")
        if self.x.size >= 2 and not np.allclose(np.diff(self.x), self.x[1] - self.x[0]):
            raise ValueError("line grid must be uniform")

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    def norm(self) -> float:
        return float(np.sqrt(trapezoid_weights(self.x.size, self.spacing) @ np.abs(self.values) ** 2))


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def field_norm(field: GridField) -> float:
    """L2 norm over the window by 2D trapezoid quadrature."""
    w1 = trapezoid_weights(field.x1.size, field.h1)
    w2 = trapezoid_weights(field.x2.size, field.h2)
    return float(np.sqrt(np.einsum("i,j,ij->", w1, w2, np.abs(field.values) ** 2).real))


def project_mode(field: GridField, m: int, geometry: Geometry) -> LineFunction:
    """Transverse projection onto the m-th profile of each column's region.

    Returns x1 -> integral_0^1 field(x1, x2) * profile_region(x2) dx2 by
    trapezoid quadrature in x2 (exact orthonormality for the sampled trig
    profiles on the vertex grid).  For m=1 this is the rescaled lowest-mode
    projection used by the effective approximations.
    """
    w2 = trapezoid_weights(field.x2.size, field.h2)
    profiles = {
        r: transverse_mode(m, r).profile(field.x2) for r in ("right", "left", "middle")
    }
    out = np.empty(field.x1.size, dtype=complex)
    for i, x1 in enumerate(field.x1):
        out[i] = (w2 * profiles[geometry.region_of(float(x1))]) @ field.values[i, :]
    return LineFunction(x=field.x1.copy(), values=out)


def scaled_norms(diff: GridField, eps: float) -> tuple[float, float]:
    """Thin-strip norms of w(x) = W(x/eps) for W sampled on the unit strip.

    l2 = eps * ||W||_L2(window);  h1 = sqrt(eps^2 ||W||^2 + ||grad W||^2).
    The gradient uses centered differences inside, one-sided at the edges.
    """
    w1 = trapezoid_weights(diff.x1.size, diff.h1)
    w2 = trapezoid_weights(diff.x2.size, diff.h2)
    sq = np.einsum("i,j,ij->", w1, w2, np.abs(diff.values) ** 2).real
    d1, d2 = np.gradient(diff.values, diff.h1, diff.h2)
    grad_sq = (
        np.einsum("i,j,ij->", w1, w2, np.abs(d1) ** 2)
        + np.einsum("i,j,ij->", w1, w2, np.abs(d2) ** 2)
    ).real
    l2 = eps * math.sqrt(sq)
    h1 = math.sqrt(eps**2 * sq + grad_sq)
    return l2, h1
