import math

import numpy as np
import pytest

from perfhom import fem, geometry, meshing, solvers

from _oracles import plain_profile, transmission_closed_form, transmission_shooting

W = 0.25


def _ends(mids):
    return np.abs(np.abs(mids[:, 1]) - 1.0) < 1e-12


def _strip(h):
    return meshing.mesh_interface((0.0, -1.0), (W, 1.0), 0.0, h)


def _one(x):
    return np.ones(len(x))


IDENT = fem.CoefficientSet(dim=2)


def test_oracles_agree_with_each_other():
    for cs in (1.0, 2.0, 5.0):
        assert transmission_closed_form(cs, 0.0) == pytest.approx(
            transmission_shooting(cs, 0.0), abs=1e-9)
    assert plain_profile(0.0) == pytest.approx(1 - 1 / math.cosh(1.0), rel=1e-14)


def test_plain_solver_matches_strip_profile():
    m = _strip(1 / 64)
    u = solvers.solve_homogenized_plain(
        m, IDENT, _one, opts=solvers.SolveOptions(lam=-1.0), dirichlet=_ends)
    got = meshing.interpolate(m, u.values, [[W / 2, 0.0]])[0]
    assert got == pytest.approx(0.35194572633611454, abs=5e-5)
    exact = plain_profile(m.vertices[:, 1])
    assert np.abs(u.values - exact).max() < 5e-5


def test_delta_solver_matches_transmission_oracle():
    m = _strip(1 / 64)
    got = []
    for sigma, a0 in ((2.0, 0.5), (2.0, 1.0), (5.0, 1.0)):
        u = solvers.solve_homogenized_delta(
            m, IDENT, a0, fem.NonlinearBC("linear", sigma=sigma), _one,
            opts=solvers.SolveOptions(lam=-1.0), dirichlet=_ends)
        val = meshing.interpolate(m, u.values, [[W / 2, 0.0]])[0]
        got.append(val)
        assert val == pytest.approx(
            transmission_closed_form(sigma * a0, 0.0), abs=1e-4)
    # frozen midpoint values, decreasing with absorption strength
    assert got[0] == pytest.approx(0.2548859147728816, abs=1e-4)
    assert got[1] == pytest.approx(0.19978820044686396, abs=1e-4)
    assert got[2] == pytest.approx(0.121194041664761, abs=1e-4)
    assert got[0] > got[1] > got[2]


def test_delta_with_zero_weight_equals_plain():
    m = _strip(1 / 32)
    opts = solvers.SolveOptions(lam=-1.0)
    ud = solvers.solve_homogenized_delta(
        m, IDENT, 0.0, fem.NonlinearBC("linear", sigma=3.0), _one,
        opts=opts, dirichlet=_ends)
    up = solvers.solve_homogenized_plain(m, IDENT, _one, opts=opts, dirichlet=_ends)
    assert np.abs(ud.values - up.values).max() < 1e-9


def test_zero_load_gives_zero_solution():
    lay = geometry.make_layout("periodic", {}, 1 / 8)
    m = meshing.mesh_perforated(lay, 0.06)
    u = solvers.solve_perforated(
        m, IDENT, fem.NonlinearBC("saturating", sigma=2.0),
        lambda x: np.zeros(len(x)))
    assert np.all(u.values == 0.0)


def test_linear_bc_agrees_with_one_shot_solve():
    m = _strip(1 / 32)
    sigma, a0 = 2.0, 1.0
    opts = solvers.SolveOptions(lam=-1.0)
    u = solvers.solve_homogenized_delta(
        m, IDENT, a0, fem.NonlinearBC("linear", sigma=sigma), _one,
        opts=opts, dirichlet=_ends)
    # for a(u) = sigma u the problem is linear: fold the boundary mass into K
    system = fem.assemble(m, IDENT, f=_one, dirichlet=_ends, lam=-1.0)
    _, jac = fem.boundary_nonlinear(
        system, "interface", fem.NonlinearBC("linear", sigma=sigma),
        np.zeros(m.n_vertices), weight=a0)
    direct = fem.solve_linear(system, system.load, tol=1e-12,
                              matrix=system.matrix + jac.A)
    assert np.abs(u.values - direct).max() < 1e-8


def test_solution_independent_of_initial_guess():
    lay = geometry.make_layout("periodic", {}, 1 / 8)
    m = meshing.mesh_perforated(lay, 0.06)
    nbc = fem.NonlinearBC("saturating", sigma=2.0)
    tol = 1e-10
    u1 = solvers.solve_perforated(
        m, IDENT, nbc, _one, opts=solvers.SolveOptions(picard_tol=tol))
    u2 = solvers.solve_perforated(
        m, IDENT, nbc, _one,
        opts=solvers.SolveOptions(picard_tol=tol,
                                  initial=0.3 * np.ones(m.n_vertices)))
    _, _, h1 = fem.norms(m, u1.values - u2.values)
    assert h1 <= 10 * tol * fem.norms(m, u1.values)[2]


def test_picard_contracts_and_tightens_away_from_threshold():
    lay = geometry.make_layout("periodic", {}, 1 / 8)
    m = meshing.mesh_perforated(lay, 0.06)
    nbc = fem.NonlinearBC("saturating", sigma=2.0)
    rates = {}
    for lam in (-2.0, -6.0):
        u = solvers.solve_perforated(
            m, IDENT, nbc, _one, opts=solvers.SolveOptions(lam=lam))
        assert u.info["residual"] <= 1e-9
        rates[lam] = np.mean(u.info["contraction"])
        assert rates[lam] < 1.0
    assert rates[-6.0] < rates[-2.0]


def test_a_priori_bound_uniform_in_eps():
    f = _one
    for eps in (1 / 8, 1 / 16, 1 / 32):
        lay = geometry.make_layout("periodic", {}, eps)
        m = meshing.mesh_perforated(lay, 0.4 * eps)
        u = solvers.solve_perforated(
            m, IDENT, fem.NonlinearBC("saturating", sigma=2.0), f)
        # coercivity margin 1 at lam = lam0_hat - 1: ||u||_H1 <= ||f||_L2
        h1 = fem.norms(m, u.values)[2]
        assert h1 <= fem.l2_of_function(m, f)


def test_linearity_without_boundary_term():
    m = _strip(1 / 32)
    opts = solvers.SolveOptions(lam=-1.0)

    def f2(x):
        return np.cos(np.pi * x[:, 1])

    ua = solvers.solve_homogenized_plain(m, IDENT, _one, opts=opts, dirichlet=_ends)
    ub = solvers.solve_homogenized_plain(m, IDENT, f2, opts=opts, dirichlet=_ends)
    uc = solvers.solve_homogenized_plain(
        m, IDENT, lambda x: _one(x) + 2.0 * f2(x), opts=opts, dirichlet=_ends)
    assert np.abs(uc.values - ua.values - 2.0 * ub.values).max() < 1e-8


def test_complex_sigma_transmission():
    m = _strip(1 / 32)
    sigma = 1.0 + 0.5j
    u = solvers.solve_homogenized_delta(
        m, IDENT, 1.0, fem.NonlinearBC("linear", sigma=sigma), _one,
        dirichlet=_ends)
    assert np.iscomplexobj(u.values)
    assert np.abs(u.values.imag).max() > 1e-4
    assert u.info["residual"] <= 1e-9
    system = fem.assemble(m, IDENT, f=_one, dirichlet=_ends, lam=u.info["lam"])
    _, jac = fem.boundary_nonlinear(
        system, "interface", fem.NonlinearBC("linear", sigma=sigma),
        np.zeros(m.n_vertices, dtype=complex), weight=1.0)
    K = (system.matrix.astype(complex) + jac.A).tocsr()
    direct = fem.solve_linear(system, system.load, tol=1e-12, matrix=K)
    assert np.abs(u.values - direct).max() < 1e-7


def test_assembled_reuse_matches_fresh_solves():
    m = _strip(1 / 32)
    nbc = fem.NonlinearBC("saturating", sigma=1.5)
    opts = solvers.SolveOptions(lam=-1.0)
    system = fem.assemble(m, IDENT, dirichlet=_ends, lam=-1.0)
    for f in (_one, lambda x: x[:, 1] ** 2):
        load = fem.load_vector(m, f)
        u_re, _ = solvers.solve_assembled(
            system, "interface", nbc, weight=1.0, opts=opts, load=load)
        u_fr = solvers.solve_homogenized_delta(
            m, IDENT, 1.0, nbc, f, opts=opts, dirichlet=_ends)
        assert np.abs(u_re - u_fr.values).max() < 1e-8


def test_threshold_and_option_validation():
    m = _strip(1 / 16)
    with pytest.raises(ValueError):
        solvers.solve_homogenized_plain(
            m, IDENT, _one, opts=solvers.SolveOptions(lam=5.0), dirichlet=_ends)
    with pytest.raises(ValueError):
        solvers.SolveOptions(damping=0.0)
    with pytest.raises(ValueError):
        solvers.SolveOptions(picard_tol=-1.0)
