import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impactset import (Contact, ContactProblem, NormalizedProblem, NotPenetrating,
                       build_opposing_normals, classify, normalize, random_scene)
from impactset.analysis import (DegenerateAt, LikelyNonDegenerate, check_dissipation,
                                check_nondegenerate, kinetic_energy, min_norm_in_force_set,
                                min_norm_point, reduce_to_minimal)
from impactset.core import Point, ForceSetDescriptor
from impactset.inclusion import FixedWeights, SelectionStrategy, Trajectory, integrate
from impactset.routh import resolve_single_planar


def frictionless(*rows):
    return NormalizedProblem(len(rows[0]), tuple(Contact(f"c{i}", r) for i, r in enumerate(rows)))


def traj_from(vs, s=None):
    vs = np.asarray(vs, float)
    k = len(vs)
    s = np.arange(k, dtype=float) if s is None else np.asarray(s, float)
    return Trajectory(s, vs, np.zeros((k, 1)), np.zeros((k, 1, 2)), np.zeros((k, 1), bool), True)


def min_norm_oracle(points):
    # exhaustive: the min-norm point is the affine minimizer of some subset with
    # nonnegative coefficients
    P = np.asarray(points, float)
    best = np.inf
    for r in range(1, min(len(P), P.shape[1] + 1) + 1):
        for idx in itertools.combinations(range(len(P)), r):
            S = P[list(idx)]
            A = np.block([[S @ S.T, np.ones((r, 1))], [np.ones((1, r)), np.zeros((1, 1))]])
            try:
                sol = np.linalg.solve(A, np.r_[np.zeros(r), 1.0])
            except np.linalg.LinAlgError:
                continue
            a = sol[:r]
            if (a >= -1e-12).all():
                best = min(best, np.linalg.norm(a @ S))
    return best


# -- energy ----------------------------------------------------------------------

def test_kinetic_energy():
    assert kinetic_energy([0.0, 0.0]) == 0.0
    assert kinetic_energy([3.0, 4.0]) == 12.5
    mass = np.diag([4.0, 1.0])
    p = normalize(ContactProblem(2, mass, (Contact("a", [0.0, 1.0]),)))
    v = np.array([1.0, 1.0])
    assert kinetic_energy(p.to_normalized(v)) == pytest.approx(0.5 * v @ mass @ v) == 2.5


def test_dissipation_constant_zero_passes():
    assert check_dissipation(traj_from(np.zeros((5, 2)))).passed


def test_dissipation_negative_control():
    rep = check_dissipation(traj_from([[1.0, 0.0], [0.9, 0.0], [1.2, 0.0], [0.5, 0.0]]))
    assert not rep.passed and rep.violation_step == 1
    assert rep.max_violation == pytest.approx(0.3)


def test_dissipation_of_exact_planar_path():
    c = Contact("a", [0.0, 1.0], [[1.0, 0.0]], 2.0)
    r = resolve_single_planar(c, [1.0, -1.0])
    # sample the piecewise-linear path densely between phase knots
    vs, v = [], np.array([1.0, -1.0])
    for ph in r.phases:
        beta = -c.mu * ph.direction[0] if ph.regime == "slide" else 0.0
        for t in np.linspace(0.0, ph.s_end - ph.s_start, 50):
            vs.append(v + t * (c.jn + beta * c.jt[0]))
        v = vs[-1]
    rep = check_dissipation(traj_from(vs))
    assert rep.passed and rep.max_violation == 0.0
    assert np.allclose(vs[-1], r.v_plus)


def test_strictness_reported():
    p = frictionless([0.0, 1.0])
    tr = integrate(p, [0.0, -1.0], step=0.1)
    assert check_dissipation(tr, problem=p).strict
    flat = traj_from([[0.0, -1.0], [0.0, -1.0], [0.0, 0.0]])
    assert not check_dissipation(flat, problem=p).strict


# -- minimal coordinates -----------------------------------------------------------

def test_reduce_single_row():
    red = reduce_to_minimal(frictionless([0.0, 1.0]))
    assert red.rank == 1 and red.nullity == 1
    assert abs(red.reduced.Jn[0, 0]) == pytest.approx(1.0)


def test_reduce_full_rank_is_orthogonal():
    rng = np.random.default_rng(0)
    p = frictionless(*rng.standard_normal((3, 3)))
    red = reduce_to_minimal(p)
    assert red.rank == 3 and np.allclose(red.basis.T @ red.basis, np.eye(3))
    assert np.allclose(red.basis @ red.basis.T, np.eye(3))


def test_reduce_duplicate_rows():
    a = reduce_to_minimal(frictionless([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]))
    b = reduce_to_minimal(frictionless([1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 0.0]))
    assert a.rank == b.rank == 2


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_reduction_preserves_classification(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 6))
    m = int(rng.integers(1, 3))
    contacts = tuple(Contact(f"c{i}", rng.standard_normal(n),
                             rng.standard_normal((1, n)), 0.5) for i in range(m))
    p = NormalizedProblem(n, contacts)
    red = reduce_to_minimal(p)
    assert np.allclose(red.basis.T @ red.basis, np.eye(red.rank), atol=1e-10)
    for v in rng.standard_normal((1000, n)):
        assert classify(p, v, 1e-12).status is classify(red.reduced, red.project(v), 1e-12).status
    # the reduced Jacobian has no null space
    assert np.linalg.matrix_rank(red.reduced.J) == red.rank


# -- minimum-norm point --------------------------------------------------------------

def test_min_norm_symmetric_hull():
    p = frictionless([1.0, 0.0], [-1.0, 0.0], [0.0, 1.0])
    assert min_norm_in_force_set(p, [0.0, -1.0]).distance <= 1e-9


def test_min_norm_singleton():
    res = min_norm_in_force_set(frictionless([0.0, 1.0]), [0.3, -1.0])
    assert res.distance == pytest.approx(1.0) and np.allclose(res.witness, [0.0, 1.0])


def test_min_norm_sliding_force():
    p = NormalizedProblem(2, (Contact("a", [0.0, 1.0], [[1.0, 0.0]], 0.5),))
    res = min_norm_in_force_set(p, [1.0, -1.0])
    assert res.distance == pytest.approx(np.sqrt(1.25))


def test_min_norm_sticking_segment():
    p = NormalizedProblem(2, (Contact("a", [0.0, 1.0], [[1.0, 0.0]], 0.5),))
    res = min_norm_in_force_set(p, [0.0, -1.0])
    assert res.distance == pytest.approx(1.0) and np.allclose(res.witness, [0.0, 1.0])


def test_min_norm_rejects_separated():
    with pytest.raises(NotPenetrating):
        min_norm_in_force_set(frictionless([0.0, 1.0]), [0.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_min_norm_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    pts = rng.standard_normal((int(rng.integers(1, 6)), n)) + rng.uniform(-1, 2) * np.ones(n)
    fs = ForceSetDescriptor(n, tuple(Point(x) for x in pts))
    x, *_, gap = min_norm_point(fs)
    assert np.linalg.norm(x) == pytest.approx(min_norm_oracle(pts), abs=1e-8)


# -- non-degeneracy screen -------------------------------------------------------------

def test_opposing_normals_degenerate():
    p = normalize(build_opposing_normals())
    verdict = check_nondegenerate(p, 200, seed=0)
    assert isinstance(verdict, DegenerateAt) and verdict.degenerate
    assert classify(p, verdict.v).penetrating and verdict.min_norm <= 1e-7
    # the zero-force selection holds the velocity fixed: the impact never ends
    w = tuple(verdict.witness.weights)
    tr = integrate(p, verdict.v, SelectionStrategy(FixedWeights(w)), step=1e-2, s_max=0.5,
                   raise_on_timeout=False)
    assert not tr.terminated
    assert np.allclose(tr.v, verdict.v, atol=1e-7)


def test_single_contact_nondegenerate():
    verdict = check_nondegenerate(frictionless([0.0, 1.0]), 200, seed=1)
    assert isinstance(verdict, LikelyNonDegenerate) and not verdict.degenerate
    assert verdict.min_observed == pytest.approx(1.0)


def test_orthogonal_pair_nondegenerate():
    verdict = check_nondegenerate(frictionless([1.0, 0.0], [0.0, 1.0]), 500, seed=2)
    assert not verdict.degenerate
    assert verdict.min_observed == pytest.approx(np.sqrt(0.5), abs=1e-6)


def test_screen_is_seeded():
    rng = np.random.default_rng(4)
    p = normalize(random_scene(rng)[0])
    a = check_nondegenerate(p, 100, seed=3)
    b = check_nondegenerate(p, 100, seed=3)
    assert type(a) is type(b)
    assert getattr(a, "min_observed", None) == getattr(b, "min_observed", None)
