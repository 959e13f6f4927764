import math

import numpy as np
import pytest

from twistband.discrete import build_grid
from twistband.effective import (
    DIRICHLET_AT_ZERO,
    FREE_LINE,
    EffectiveKind,
    apply_effective_resolvent,
    dirichlet_at_pm_l,
    effective_term_field,
    green_kernel,
    twisted_at_zero,
    twisted_data,
    twisted_explicit_solution,
)
from twistband.geometry import LineFunction, OverlapRegime, make_geometry, scaled_norms

# frozen kernel point values
FREE_ORIGIN = 0.5  # e^0 / 2 at mu=1
DIR_ONE_ONE = 0.43233235838169365  # (1 - e^{-2})/2
TWIST_CROSS = -0.06766764161830635  # -e^{-2}/2
BOX_CENTER = 0.38079707797788237  # sinh(1)^2 / sinh(2)


def test_kernel_point_values():
    assert complex(green_kernel(FREE_LINE, 1.0 + 0j, 0.0, 0.0)) == pytest.approx(FREE_ORIGIN)
    assert complex(green_kernel(DIRICHLET_AT_ZERO, 1.0 + 0j, 1.0, 1.0)) == pytest.approx(
        DIR_ONE_ONE, abs=1e-15
    )
    assert complex(green_kernel(twisted_at_zero(-1), 1.0 + 0j, 1.0, -1.0)) == pytest.approx(
        TWIST_CROSS, abs=1e-15
    )
    k_in = dirichlet_at_pm_l(1.0, "inside")
    assert complex(green_kernel(k_in, 1.0 + 0j, 0.0, 0.0)) == pytest.approx(BOX_CENTER, abs=1e-15)


def test_kind_validation():
    with pytest.raises(ValueError):
        EffectiveKind("TwistedAtZero", parity_sign=0)
    with pytest.raises(ValueError):
        EffectiveKind("DirichletAtPmL", half_length=-1.0, region="inside")
    with pytest.raises(ValueError):
        EffectiveKind("DirichletAtPmL", half_length=1.0, region=None)
    with pytest.raises(ValueError):
        green_kernel(FREE_LINE, -1.0 + 0.5j, 0.0, 0.0)


def test_kernel_symmetry_all_kinds():
    rng = np.random.default_rng(31)
    mu = 0.8 - 0.3j
    kinds = [
        FREE_LINE,
        DIRICHLET_AT_ZERO,
        twisted_at_zero(-1),
        dirichlet_at_pm_l(1.5, "inside"),
        dirichlet_at_pm_l(1.5, "outside"),
    ]
    x = rng.normal(scale=3.0, size=400)
    t = rng.normal(scale=3.0, size=400)
    for kind in kinds:
        np.testing.assert_allclose(
            green_kernel(kind, mu, x, t), green_kernel(kind, mu, t, x), atol=1e-15
        )


def test_sign_conjugation_exact():
    # twisted(-1) = sgn . free . sgn, bit-exact on 1000 random pairs
    rng = np.random.default_rng(1811)
    mu = 0.6 + 0.2j
    x = rng.normal(scale=5.0, size=1000)
    t = rng.normal(scale=5.0, size=1000)
    tw = green_kernel(twisted_at_zero(-1), mu, x, t)
    sgn = np.where(x < 0, -1.0, 1.0) * np.where(t < 0, -1.0, 1.0)
    free = sgn * green_kernel(FREE_LINE, mu, x, t)
    assert np.array_equal(tw, free)
    # parity +1 aliases the free line exactly
    assert np.array_equal(
        green_kernel(twisted_at_zero(1), mu, x, t), green_kernel(FREE_LINE, mu, x, t)
    )


def test_box_kernel_against_sinh_form():
    rng = np.random.default_rng(7)
    mu = 0.9 + 0.4j
    L = 1.3
    k_in = dirichlet_at_pm_l(L, "inside")
    for _ in range(50):
        x, t = rng.uniform(-L, L, size=2)
        lo, hi = min(x, t), max(x, t)
        want = np.sinh(mu * (L + lo)) * np.sinh(mu * (L - hi)) / (mu * np.sinh(2 * mu * L))
        assert complex(green_kernel(k_in, mu, x, t)) == pytest.approx(complex(want), rel=1e-12)
    # Dirichlet endpoints and zero continuation
    assert abs(complex(green_kernel(k_in, mu, L, 0.3))) < 1e-15
    assert complex(green_kernel(k_in, mu, L + 0.5, 0.0)) == 0
    k_out = dirichlet_at_pm_l(L, "outside")
    assert abs(complex(green_kernel(k_out, mu, L, L + 2.0))) < 1e-15
    assert complex(green_kernel(k_out, mu, 0.0, L + 2.0)) == 0
    assert complex(green_kernel(k_out, mu, -L - 1.0, L + 1.0)) == 0  # across components


def _line(h=0.01, T=12.0, fn=None):
    x = np.arange(-round(T / h), round(T / h) + 1) * h
    v = fn(x) if fn is not None else np.zeros_like(x, dtype=complex)
    return LineFunction(x=x, values=v.astype(complex))


def _bump(x, c, w, amp=1.0):
    u = (x - c) / w
    out = np.zeros_like(x, dtype=complex)
    m = np.abs(u) < 1
    out[m] = amp * np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))
    return out


def test_apply_resolvent_residual_and_bc():
    lam = 1j
    mu = np.sqrt(complex(-lam))
    g = _line(h=0.01, T=12.0, fn=lambda x: _bump(x, 2.0, 1.5) + _bump(x, -3.0, 1.0, amp=0.5j))
    for kind in (DIRICHLET_AT_ZERO, FREE_LINE, twisted_at_zero(-1)):
        U = apply_effective_resolvent(kind, lam, g)
        # origin condition
        i0 = int(np.argmin(np.abs(U.x)))
        if kind.name == "DirichletAtZero":
            assert abs(U.values[i0]) < 1e-14
        # interior residual -U'' - lam U = g, away from the origin kink
        h = U.spacing
        d2 = (2 * U.values[1:-1] - U.values[:-2] - U.values[2:]) / h**2
        res = d2 - lam * U.values[1:-1] - g.values[1:-1]
        away = np.abs(U.x[1:-1]) > 0.05
        assert np.abs(res[away]).max() < 5e-3 * np.abs(g.values).max()
        # far field decays
        assert np.abs(U.values[-1]) < 5e-3 * np.abs(U.values).max()
    assert abs(mu**2 + lam) < 1e-15


def test_apply_resolvent_box_masks():
    lam = 0.5 + 1j
    L = 1.0
    g = _line(h=0.005, T=4.0, fn=lambda x: _bump(x, 0.0, 0.8) + _bump(x, 2.5, 0.9, amp=2.0))
    U_in = apply_effective_resolvent(dirichlet_at_pm_l(L, "inside"), lam, g)
    out_mask = np.abs(U_in.x) > L
    assert np.abs(U_in.values[out_mask]).max() == 0.0  # identically zero outside
    iL = int(np.argmin(np.abs(U_in.x - L)))
    assert abs(U_in.values[iL]) < 1e-13
    U_out = apply_effective_resolvent(dirichlet_at_pm_l(L, "outside"), lam, g)
    in_mask = np.abs(U_out.x) < L
    assert np.abs(U_out.values[in_mask]).max() == 0.0
    # the inside solve must ignore the outside bump: compare with truncated g
    g2 = LineFunction(x=g.x, values=np.where(np.abs(g.x) <= L, g.values, 0.0))
    U_in2 = apply_effective_resolvent(dirichlet_at_pm_l(L, "inside"), lam, g2)
    np.testing.assert_allclose(U_in.values, U_in2.values, atol=1e-15)


def test_effective_term_field_embedding():
    eps = 0.2
    geo, _ = make_geometry(OverlapRegime(0.0), truncation=10.0)
    grid = build_grid(geo, n2=17, target_h1=0.1)
    U = LineFunction(
        x=eps * grid.x1, values=_bump(eps * grid.x1, 0.4, 0.7) + 0.3j * _bump(eps * grid.x1, -0.5, 0.6)
    )
    fld = effective_term_field(U, eps, grid)
    # bottom-right boundary nodes carry chi_1 = 0 (x1 = 0 counts as right)
    right = grid.x1 >= 0
    assert np.abs(fld.values[right, 0]).max() == 0.0
    assert np.abs(fld.values[~right, -1]).max() == 0.0
    # embedded thin-strip L2 norm equals the line L2 norm (exact transverse
    # normalization on the vertex grid)
    l2, _ = scaled_norms(fld, eps)
    assert l2 == pytest.approx(U.norm(), rel=1e-12)
    # zero input -> zero field
    U0 = LineFunction(x=eps * grid.x1, values=np.zeros(grid.n1, dtype=complex))
    assert np.abs(effective_term_field(U0, eps, grid).values).max() == 0.0
    with pytest.raises(ValueError):
        effective_term_field(LineFunction(x=U.x + 0.01, values=U.values), eps, grid)


def test_twisted_dual_path_exact():
    lam = 1j
    eps = 0.1
    cases = [
        lambda x: _bump(x, 3.0, 2.0),
        lambda x: _bump(x, -2.0, 1.5, amp=1 - 0.7j) + _bump(x, 4.0, 1.0, amp=0.4),
        lambda x: _bump(x, 0.0, 2.5),  # straddles the origin: f1(0) != 0
    ]
    for n, kind in ((1, FREE_LINE), (2, twisted_at_zero(-1)), (3, twisted_at_zero(1))):
        for fn in cases:
            f1 = _line(h=0.02, T=15.0, fn=fn)
            U_exp = twisted_explicit_solution(f1, eps, lam, n)
            U_ker = apply_effective_resolvent(kind, lam, f1)
            scale = np.abs(U_ker.values).max()
            assert np.abs(U_exp.values - U_ker.values).max() < 1e-10 * scale


def test_twisted_matching_conditions():
    lam = 0.3 + 1.0j
    f1 = _line(h=0.005, T=12.0, fn=lambda x: _bump(x, 1.0, 2.4, amp=1.2) + _bump(x, -2.0, 1.1, 0.5j))
    for n in (1, 2):
        sigma = (-1) ** (n - 1)
        U = twisted_explicit_solution(f1, 0.1, lam, n)
        i0 = int(np.argmin(np.abs(U.x)))
        scale = np.abs(U.values).max()
        # cubic extrapolation of each one-sided limit
        right = U.values[i0] # stored value is the right limit
        left = 3 * U.values[i0 - 1] - 3 * U.values[i0 - 2] + U.values[i0 - 3]
        assert abs(right - sigma * left) < 2e-6 * scale
        # one-sided derivatives (second order).  The trapezoid rule assigns
        # the whole origin weight to the right half-line, so the discrete
        # derivative matching carries an exact O(h) defect of
        # -h * f1(0) * (1 - sigma) / 2; pin it rather than hide it.
        h = U.spacing
        dr = (-1.5 * U.values[i0] + 2 * U.values[i0 + 1] - 0.5 * U.values[i0 + 2]) / h
        ul0 = sigma * right  # exact left limit by construction
        dl = (1.5 * ul0 - 2 * U.values[i0 - 1] + 0.5 * U.values[i0 - 2]) / h
        defect = -0.5 * h * f1.values[i0] * (1 - sigma)
        assert abs(dr - sigma * dl - defect) < 5e-5 * max(scale, abs(dr))


def test_twisted_data_invariant_and_symmetry():
    lam = 1j
    f1 = _line(h=0.01, T=10.0, fn=lambda x: _bump(x, 0.0, 3.0))  # even source
    for n in (1, 2, 3):
        td = twisted_data(f1, 0.2, lam, n)
        sigma = (-1) ** (n - 1)
        assert td.t0 == pytest.approx(math.sqrt(2) * (td.f_plus + sigma * td.f_minus), abs=1e-15)
        assert td.parity_sign == sigma
    # even f1 with odd n: even solution
    U = twisted_explicit_solution(f1, 0.2, lam, 1)
    np.testing.assert_allclose(U.values, U.values[::-1], atol=1e-12 * np.abs(U.values).max())
    # even f1, even n: still even (the kernel maps t -> -t to x -> -x, and the
    # matching amplitude f_plus - f_minus vanishes for an even source that is
    # zero at the origin, so no sign-split branch survives)
    f2 = _line(h=0.01, T=10.0, fn=lambda x: _bump(x, 2.0, 1.5) + _bump(x, -2.0, 1.5))
    U2 = twisted_explicit_solution(f2, 0.2, lam, 2)
    np.testing.assert_allclose(
        U2.values, U2.values[::-1], atol=1e-10 * np.abs(U2.values).max()
    )
