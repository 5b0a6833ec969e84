from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from junctionlab.vi_solver import (
    DiscreteVI,
    SolverError,
    check_definitions_equivalence,
    kkt_residual,
    solve_bruteforce,
    solve_pdas,
    solve_psor,
)

from vi_instances import random_instance

A2 = np.array([[2.0, -1.0], [-1.0, 2.0]])
B2 = np.array([1.0, 1.0])
SOLVERS = {
    "psor": lambda vi: solve_psor(vi, omega=1.2, tol=1e-13),
    "pdas": solve_pdas,
    "bruteforce": solve_bruteforce,
}


@pytest.mark.parametrize("name", SOLVERS)
def test_two_by_two(name):
    solver = SOLVERS[name]
    r = solver(DiscreteVI(A2, B2, [], []))
    np.testing.assert_allclose(r.u, [1.0, 1.0], atol=1e-10)
    r = solver(DiscreteVI(A2, B2, [0], [0.0]))
    assert r.converged
    np.testing.assert_allclose(r.u, [0.0, 0.5], atol=1e-10)
    assert r.mu[0] == pytest.approx(1.5, abs=1e-10)
    assert r.active_set.tolist() == [0]
    r = solver(DiscreteVI(A2, B2, [0], [10.0]))
    np.testing.assert_allclose(r.u, [1.0, 1.0], atol=1e-10)
    assert len(r.active_set) == 0


def test_bruteforce_finds_unique_kkt_set():
    _, sets = solve_bruteforce(DiscreteVI(A2, B2, [0, 1], [0.0, 0.0]), return_all=True)
    assert sets == [(0, 1)]


def test_pdas_zero_load():
    r = solve_pdas(DiscreteVI(A2, np.zeros(2), [0, 1], [0.0, 1.0]))
    assert r.converged and r.iterations == 1
    assert not r.u.any() and len(r.active_set) == 1  # u_0 = c_0 = 0 touches the bound
    r = solve_pdas(DiscreteVI(A2, np.zeros(2), [0, 1], [0.5, 1.0]))
    assert r.iterations == 1 and len(r.active_set) == 0


def test_bruteforce_refuses_large():
    n = 21
    with pytest.raises(SolverError):
        solve_bruteforce(DiscreteVI(np.eye(n), np.zeros(n), np.arange(n), np.zeros(n)))


def test_psor_nonconvergence_flagged():
    vi = random_instance(np.random.default_rng(7), n_max=60)
    r = solve_psor(vi, omega=1.0, tol=1e-14, max_iter=3)
    assert not r.converged
    assert len(r.history) == 3


def test_psor_rejects_bad_omega():
    with pytest.raises(ValueError):
        solve_psor(DiscreteVI(A2, B2, [], []), omega=2.0)


def test_kkt_residual_examples():
    vi = DiscreteVI(A2, B2, [0], [0.0])
    assert kkt_residual(vi, solve_bruteforce(vi).u).max() <= 1e-10
    # u = c on the constraint, b = 0, generic c: stationarity fails on the free row
    vi0 = DiscreteVI(A2, np.zeros(2), [0], [0.7])
    res = kkt_residual(vi0, np.array([0.7, 0.0]))
    assert res.stationarity == pytest.approx(0.7)
    assert kkt_residual(vi, np.array([-1.0, 0.5])).feasibility == 0.0


def test_equivalence_examples():
    vi = DiscreteVI(A2, B2, [0], [0.0])
    r = solve_bruteforce(vi)
    rep = check_definitions_equivalence(vi, r)
    assert rep.equality_residual <= 1e-10 and rep.witness is None and rep.ok()
    # a perturbation on the inactive node is detected
    r.u = r.u + np.array([0.0, 1e-3])
    assert check_definitions_equivalence(vi, r).equality_relative > 1e-8
    vz = DiscreteVI(A2, np.zeros(2), [0, 1], [0.0, 0.0])
    rep = check_definitions_equivalence(vz, solve_pdas(vz))
    assert rep.equality_residual == 0.0 and rep.worst_inequality == 0.0


def test_psor_energy_monotone():
    rng = np.random.default_rng(3)
    vi = random_instance(rng)
    r = solve_psor(vi, omega=1.5)
    energies = np.array([h["energy"] for h in r.history])
    assert np.all(np.diff(energies) <= 1e-12 * (1 + np.abs(energies).max()))
    assert energies[-1] == pytest.approx(vi.energy(r.u), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solvers_agree(seed):
    vi = random_instance(np.random.default_rng(seed), n_max=30, k_max=10)
    ref = solve_bruteforce(vi)
    for r in (solve_pdas(vi), solve_psor(vi, omega=1.3, tol=1e-12)):
        assert r.converged
        assert np.abs(r.u - ref.u).max() <= 1e-8
        assert kkt_residual(vi, r.u).max() <= 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_scaling_covariance(seed, lam):
    vi = random_instance(np.random.default_rng(seed), n_max=20, k_max=8)
    u = solve_pdas(vi).u
    np.testing.assert_allclose(solve_pdas(vi.scaled(lam)).u, lam * u, atol=1e-9 * (1 + lam * np.abs(u).max()))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_unique_kkt_point(seed):
    vi = random_instance(np.random.default_rng(seed), n_max=15, k_max=8)
    res, sets = solve_bruteforce(vi, return_all=True)
    assert len(sets) >= 1
    # every consistent active set yields the same point
    u_ref = res.u
    A = vi.A.toarray()
    for S in sets:
        fixed = vi.index[list(S)]
        free = np.setdiff1d(np.arange(vi.n), fixed)
        u = np.zeros(vi.n)
        u[fixed] = vi.bounds[list(S)]
        u[free] = np.linalg.solve(A[np.ix_(free, free)], vi.b[free] - A[np.ix_(free, fixed)] @ u[fixed])
        np.testing.assert_allclose(u, u_ref, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solution_minimises_energy(seed):
    rng = np.random.default_rng(seed)
    vi = random_instance(rng, n_max=20, k_max=8)
    u = solve_pdas(vi).u
    J = vi.energy(u)
    for _ in range(20):
        v = u + 0.1 * rng.standard_normal(vi.n)
        v[vi.index] = np.minimum(v[vi.index], vi.bounds)
        assert vi.energy(v) >= J - 1e-12
