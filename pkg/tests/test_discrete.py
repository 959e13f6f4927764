import math

import numpy as np
import pytest
import scipy.linalg as sla

from twistband.discrete import (
    FactorizedResolvent,
    ModeBump,
    RadiationSpec,
    assemble_operator,
    build_grid,
    bump_field,
    discrete_mode_energy,
    ghost_multipliers,
    mode_sum_reference,
    slice_threshold,
    solve_resolvent,
    transverse_family,
)
from twistband.geometry import (
    OverlapRegime,
    WindowRegime,
    make_geometry,
    trapezoid_weights,
    transverse_mode,
)

# Frozen slice eigenvalue: 128 * (1 - cos(pi/16)) for h2 = 1/8, lowest mixed mode.
THETA1_H2_EIGHTH = 2.459484108386505


def test_build_grid_alignment():
    geo, _ = make_geometry(OverlapRegime(1.3), truncation=10.0)
    g = build_grid(geo, n2=9, target_h1=0.3)
    assert g.h1 <= 0.3 + 1e-15
    assert np.isclose(g.x1, 1.3).any()
    assert np.isclose(g.x1, -1.3).any()
    assert np.isclose(g.x1, 0.0).any()
    assert g.truncation >= 10.0 - 1e-12
    assert g.truncation < 10.0 + g.h1
    np.testing.assert_allclose(g.x1, -g.x1[::-1], atol=1e-12)
    # window regime: both junctions on nodes
    geo2, _ = make_geometry(WindowRegime(1.0, 0.25), truncation=13.0)
    g2 = build_grid(geo2, n2=9, target_h1=0.25)
    assert np.isclose(g2.x1, 4.0).any() and np.isclose(g2.x1, -4.0).any()


def test_build_grid_rejects_bad_input():
    geo, _ = make_geometry(OverlapRegime(0.0), truncation=9.0)
    with pytest.raises(ValueError):
        build_grid(geo, n2=3, target_h1=0.1)
    with pytest.raises(ValueError):
        build_grid(geo, n2=9, target_h1=-0.1)


def test_slice_energies_match_tridiagonal_eigenvalues():
    # independent dense slice: Dirichlet bottom node, mirror-ghost Neumann top
    n2 = 9
    h2 = 1.0 / (n2 - 1)
    n = n2 - 1  # unknowns k = 1..n2-1
    A = np.zeros((n, n))
    for r in range(n):
        A[r, r] = 2.0 / h2**2
        if r > 0:
            A[r, r - 1] = -1.0 / h2**2
        if r < n - 1:
            A[r, r + 1] = -1.0 / h2**2
    A[n - 1, n - 2] = -2.0 / h2**2  # Neumann doubling at the top face
    s = np.ones(n)
    s[-1] = math.sqrt(0.5)
    Asym = np.diag(s) @ A @ np.diag(1.0 / s)
    ev = np.sort(sla.eigh(Asym, eigvals_only=True))
    expected = np.sort([discrete_mode_energy(m, "right", h2) for m in range(1, n2)])
    np.testing.assert_allclose(ev, expected, rtol=1e-12)
    assert slice_threshold(h2) == pytest.approx(THETA1_H2_EIGHTH, abs=1e-12)
    assert slice_threshold(1e-3) == pytest.approx(math.pi**2 / 4, abs=1e-6)


def test_transverse_family_orthonormal_and_complete():
    x2 = np.linspace(0.0, 1.0, 9)
    w2 = trapezoid_weights(9, 0.125)
    for fam, count in (("dn_right", 8), ("dn_left", 8), ("nn", 9), ("dd", 7)):
        V, theta = transverse_family(fam, x2)
        assert V.shape[1] == count
        G = V.T @ (w2[:, None] * V)
        np.testing.assert_allclose(G, np.eye(count), atol=1e-12)
        assert np.all(np.diff(theta) > 0)


def _apply_operator(op, fld):
    u = op.restrict(fld)
    y = op.matrix @ (op.scale * u)
    return op.embed(y / op.scale)


def test_assembled_operator_acts_modewise():
    # u = g(x1) * chi_1(x2) on the decoupled right half-strip: L u must equal
    # (discrete -g'' + theta_1 g) * chi_1 exactly, since the sampled profile is
    # an exact discrete transverse eigenvector.
    geo, part = make_geometry(OverlapRegime(0.0), truncation=10.0)
    part = part.with_dirichlet_cut(0.0)
    g = build_grid(geo, n2=9, target_h1=0.25)
    op = assemble_operator(g, part)
    assert op.symmetry_defect() == 0.0

    bump = ModeBump("right", 1, center=4.0, halfwidth=2.0)
    gl = bump.longitudinal(g.x1) * (g.x1 > 0)
    chi = transverse_mode(1, "right").profile(g.x2)
    fld = g.field(gl[:, None] * chi[None, :])
    out = _apply_operator(op, fld)

    d2 = np.zeros_like(gl)
    d2[1:-1] = (2 * gl[1:-1] - gl[:-2] - gl[2:]) / g.h1**2
    theta1 = slice_threshold(g.h2)
    expected = (d2 + theta1 * gl)[:, None] * chi[None, :]
    # compare away from the eliminated columns (cut, edges)
    interior = (np.abs(g.x1) > 1e-9) & (np.abs(np.abs(g.x1) - g.truncation) > 1e-9)
    np.testing.assert_allclose(
        out.values[interior, 1:], expected[interior, 1:], atol=1e-9
    )


def _tridiag_mode_solve(n_free, h1, theta, z, rhs, rho_edge=None):
    """1D oracle: (second difference + theta - z) U = rhs with Dirichlet at the
    left end and either Dirichlet or a one-step ghost closure at the right."""
    n = n_free
    A = np.zeros((n, n), dtype=complex)
    for r in range(n):
        A[r, r] = 2.0 / h1**2 + theta - z
        if r > 0:
            A[r, r - 1] = -1.0 / h1**2
        if r < n - 1:
            A[r, r + 1] = -1.0 / h1**2
    if rho_edge is not None:
        A[n - 1, n - 1] = (2.0 - rho_edge) / h1**2 + theta - z
    return np.linalg.solve(A, rhs)


def test_solver_matches_discrete_mode_oracle_exactly():
    geo, part = make_geometry(OverlapRegime(0.0), truncation=10.0)
    part = part.with_dirichlet_cut(0.0)
    g = build_grid(geo, n2=9, target_h1=0.25)
    op = assemble_operator(g, part)
    z = 2.0 + 0.7j

    bumps = [
        ModeBump("right", 1, 4.0, 2.0, amp=1.0),
        ModeBump("right", 2, 5.0, 2.5, amp=0.6 - 0.2j),
        ModeBump("left", 1, -4.5, 2.0, amp=-0.8j),
    ]
    rhs = bump_field(g, bumps)
    u = solve_resolvent(op, z, rhs)

    expected = np.zeros((g.n1, g.n2), dtype=complex)
    right = g.x1 > 1e-9
    left = g.x1 < -1e-9
    idx_r = np.where(right)[0][:-1]  # free nodes: cut and outer edge eliminated
    idx_l = np.where(left)[0][1:]
    for b in bumps:
        theta = discrete_mode_energy(b.m, b.region, g.h2)
        chi = transverse_mode(b.m, b.region).profile(g.x2)
        if b.region == "right":
            f = b.longitudinal(g.x1[idx_r])
            U = _tridiag_mode_solve(idx_r.size, g.h1, theta, z, f)
            expected[idx_r, :] += U[:, None] * chi[None, :]
        else:
            f = b.longitudinal(g.x1[idx_l])[::-1]
            U = _tridiag_mode_solve(idx_l.size, g.h1, theta, z, f)[::-1]
            expected[idx_l, :] += U[:, None] * chi[None, :]
    np.testing.assert_allclose(u.values, expected, atol=1e-10)


def test_mode_sum_reference_satisfies_ode():
    geo, _ = make_geometry(OverlapRegime(0.0), truncation=10.0)
    g = build_grid(geo, n2=9, target_h1=0.25)
    eps, lam, energy = 0.3, 1j, math.pi**2 / 4
    b = ModeBump("right", 1, 4.0, 2.5, amp=1.0 + 0.5j)
    ref = mode_sum_reference(g, eps, lam, energy, [b])

    # Dirichlet endpoints of the decoupled interval
    i_cut = int(np.argmin(np.abs(g.x1)))
    assert np.abs(ref.values[i_cut, :]).max() < 1e-13
    assert np.abs(ref.values[-1, :]).max() < 1e-13

    # -U'' + kappa^2 U = f checked on a fine independent sampling via the
    # same exact-integral evaluator (structure test: high-order residual)
    from twistband.discrete import _interval_mode_solution

    kappa = np.sqrt(complex(math.pi**2 / 4 - energy - eps**2 * lam))
    y = np.linspace(0.05, 9.95, 1981)
    h = y[1] - y[0]
    U = _interval_mode_solution(kappa, 0.0, g.truncation, b, y)
    d2 = (2 * U[1:-1] - U[:-2] - U[2:]) / h**2
    resid = d2 + kappa**2 * U[1:-1] - b.longitudinal(y[1:-1])
    assert np.abs(resid).max() < 2e-4 * max(1.0, np.abs(U).max())


def test_fd_converges_to_mode_sum_reference():
    eps, lam, energy = 0.3, 1j, math.pi**2 / 4
    z = energy + eps**2 * lam
    errs = []
    for h1, n2 in ((0.25, 9), (0.125, 17)):
        geo, part = make_geometry(OverlapRegime(0.0), truncation=10.0)
        part = part.with_dirichlet_cut(0.0)
        g = build_grid(geo, n2=n2, target_h1=h1)
        op = assemble_operator(g, part)
        bumps = [
            ModeBump("right", 1, 4.0, 2.5),
            ModeBump("left", 2, -5.0, 2.0, amp=0.7),
        ]
        u = solve_resolvent(op, z, bump_field(g, bumps))
        ref = mode_sum_reference(g, eps, lam, energy, bumps)
        diff = u.values - ref.values
        errs.append(np.linalg.norm(diff) / np.linalg.norm(ref.values))
    assert errs[0] < 8e-2
    assert errs[0] / errs[1] > 3.0  # second-order drop


def test_ghost_multiplier_limits():
    h1 = 0.25
    theta = np.array([0.0, 1.0, 5.0])
    rho = ghost_multipliers(theta, energy=0.0, musq=0.0 + 0.0j, h1=h1)
    assert rho[0] == pytest.approx(1.0, abs=1e-14)  # s = 0 -> Neumann
    assert 0 < rho[1].real < 1 and abs(rho[1].imag) < 1e-14  # decaying
    # propagating branch: |rho| = 1, outgoing sign Im(rho) < 0
    rho_p = ghost_multipliers(np.array([0.0]), energy=2.0, musq=0.0 + 0.0j, h1=h1)
    assert abs(abs(rho_p[0]) - 1.0) < 1e-12
    assert rho_p[0].imag < 0
    # decaying branch must beat the exact continuum rate as h1 -> 0
    s = 4.0
    rho_fine = ghost_multipliers(np.array([s]), 0.0, 0.0j, 1e-4)
    assert np.log(abs(rho_fine[0])) / 1e-4 == pytest.approx(-2.0, rel=1e-4)


def test_radiating_closure_matches_far_dirichlet():
    # mode-matched window at X=10 must reproduce the X=60 hard-truncated
    # solution exactly on the shared columns (discrete mode decay is exact)
    mu = 0.5
    musq = complex(mu * mu)
    bumps = [ModeBump("right", 1, 4.0, 2.5), ModeBump("left", 1, -4.0, 2.0, amp=2.0)]

    geo_far, part_far = make_geometry(OverlapRegime(0.0), truncation=60.0)
    part_far = part_far.with_dirichlet_cut(0.0)
    g_far = build_grid(geo_far, n2=9, target_h1=0.25)
    e_resc = slice_threshold(g_far.h2)
    z = e_resc - musq
    u_far = solve_resolvent(assemble_operator(g_far, part_far), z, bump_field(g_far, bumps))

    geo, part = make_geometry(OverlapRegime(0.0), truncation=10.0)
    part = part.with_dirichlet_cut(0.0)
    g = build_grid(geo, n2=9, target_h1=0.25)
    rad = RadiationSpec(energy=e_resc, musq=musq)
    op = assemble_operator(g, part, radiation=rad)
    assert op.symmetry_defect() < 1e-12
    u = solve_resolvent(op, z, bump_field(g, bumps))

    n_keep = g.n1
    lo = (g_far.n1 - n_keep) // 2
    np.testing.assert_allclose(
        u.values[1:-1], u_far.values[lo + 1 : lo + n_keep - 1], atol=1e-9
    )


def test_radiating_closure_matches_mode_oracle():
    # single right-region mode with a ghost closure at the outer edge: the 2D
    # solve must equal the 1D tridiagonal oracle with rho on its last row
    geo, part = make_geometry(OverlapRegime(0.0), truncation=10.0)
    part = part.with_dirichlet_cut(0.0)
    g = build_grid(geo, n2=9, target_h1=0.25)
    e_resc = slice_threshold(g.h2)
    musq = (0.1 + 0.05j) ** 2
    z = e_resc - musq
    op = assemble_operator(g, part, radiation=RadiationSpec(energy=e_resc, musq=musq))

    b = ModeBump("right", 1, 4.0, 2.5)
    u = solve_resolvent(op, z, bump_field(g, [b]))

    theta1 = discrete_mode_energy(1, "right", g.h2)
    c = 1.0 + g.h1**2 * (theta1 - e_resc + musq) / 2.0
    rho1 = c - np.sqrt(c * c - 1.0)
    idx_r = np.where(g.x1 > 1e-9)[0]  # cut eliminated, edge kept (ghost row)
    f = b.longitudinal(g.x1[idx_r])
    U = _tridiag_mode_solve(idx_r.size, g.h1, theta1, z, f, rho_edge=rho1)
    chi = transverse_mode(1, "right").profile(g.x2)
    np.testing.assert_allclose(u.values[idx_r, :], U[:, None] * chi[None, :], atol=1e-10)


def test_factorized_resolvent_reuse_and_determinism():
    geo, part = make_geometry(OverlapRegime(0.5), truncation=9.0)
    g = build_grid(geo, n2=9, target_h1=0.25)
    op = assemble_operator(g, part)
    z = math.pi**2 / 4 + 0.09j
    fr = FactorizedResolvent(op, z)
    b1 = bump_field(g, [ModeBump("right", 1, 3.0, 1.5)])
    u_a = fr.solve(b1)
    u_b = solve_resolvent(op, z, b1)
    assert np.array_equal(u_a.values, u_b.values)
    # rerun from scratch: byte-identical
    op2 = assemble_operator(build_grid(geo, n2=9, target_h1=0.25), part)
    u_c = solve_resolvent(op2, z, b1)
    assert np.array_equal(u_a.values, u_c.values)


def test_dirichlet_nodes_are_zero_and_closure_applies():
    geo, part = make_geometry(OverlapRegime(0.5), truncation=9.0)
    g = build_grid(geo, n2=9, target_h1=0.25)
    op = assemble_operator(g, part)
    u = solve_resolvent(op, 1.0 + 1.0j, bump_field(g, [ModeBump("right", 1, 3.0, 1.5)]))
    i_j = int(np.argmin(np.abs(g.x1 - 0.5)))
    assert u.values[i_j, 0] == 0  # junction node itself Dirichlet (closure)
    assert np.abs(u.values[g.x1 >= 0.5 - 1e-12, 0]).max() == 0
    assert np.abs(u.values[g.x1 <= -0.5 + 1e-12, -1]).max() == 0
    assert np.abs(u.values[0, :]).max() == 0 and np.abs(u.values[-1, :]).max() == 0
    # Neumann faces carry nonzero trace
    assert np.abs(u.values[g.x1 < 0.5 - 1e-9, 0]).max() > 1e-6
